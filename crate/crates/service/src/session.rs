//! Annotation sessions and their on-disk store.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use cityframe_core::geometry::{equirect_pixel_to_ray, CameraPose, EquirectGrid};
use cityframe_core::pose::{Correspondence, PoseWarning};

use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPair {
    /// equirectangular pixel coordinates of the click
    pub u: f64,
    pub v: f64,
    pub world: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertex: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSolution {
    pub residuals_deg: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<PoseWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSession {
    pub pano_id: String,
    pub pano_width: u32,
    pub pano_height: u32,
    /// working pose
    pub pose: CameraPose,
    pub pairs: Vec<SessionPair>,
    pub revision: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_solution: Option<SessionSolution>,
}

impl AnnotationSession {
    pub fn new(pano_id: &str, pano_width: u32, pano_height: u32, pose: CameraPose) -> Self {
        Self {
            pano_id: pano_id.to_string(),
            pano_width,
            pano_height,
            pose,
            pairs: Vec::new(),
            revision: 0,
            last_solution: None,
        }
    }

    pub fn grid(&self) -> Result<EquirectGrid, ServiceError> {
        Ok(EquirectGrid::new(self.pano_width, self.pano_height)?)
    }

    pub fn correspondences(&self) -> Result<Vec<Correspondence>, ServiceError> {
        let grid = self.grid()?;
        self.pairs
            .iter()
            .map(|p| Ok(Correspondence::new(equirect_pixel_to_ray(grid, p.u, p.v)?, Vector3::from(p.world))))
            .collect()
    }

    /// Rejects a stale client revision.
    pub fn check_revision(&self, given: Option<u64>) -> Result<(), ServiceError> {
        match given {
            Some(g) if g != self.revision => Err(ServiceError::Conflict {
                given: g,
                current: self.revision,
            }),
            _ => Ok(()),
        }
    }
}

/// Session ids double as file names, so they are restricted to a safe set.
pub fn validate_id(id: &str) -> Result<(), ServiceError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ServiceError::BadRequest(format!("invalid id {id:?}")))
    }
}

pub type SessionSlot = Arc<tokio::sync::Mutex<Option<AnnotationSession>>>;

/// One JSON document per session under `<dir>`, each guarded by its own lock.
#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    slots: Mutex<HashMap<String, SessionSlot>>,
    tmp_counter: AtomicU64,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            slots: Mutex::new(HashMap::new()),
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Lock slot for `id`; holds `None` until loaded or created.
    pub fn slot(&self, id: &str) -> SessionSlot {
        let mut slots = self.slots.lock().expect("session map poisoned");
        slots.entry(id.to_string()).or_default().clone()
    }

    pub fn read(&self, id: &str) -> Result<Option<AnnotationSession>, ServiceError> {
        match std::fs::read_to_string(self.path(id)) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Atomic write: temporary file in the same directory, then rename.
    pub fn persist(&self, session: &AnnotationSession) -> Result<(), ServiceError> {
        let text = serde_json::to_string_pretty(session)?;
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = self
            .dir
            .join(format!(".{}.{}.{}.tmp", session.pano_id, std::process::id(), n));
        write_synced(&tmp, text.as_bytes())?;
        std::fs::rename(&tmp, self.path(&session.pano_id))?;
        Ok(())
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}
