//! HTTP service for the panorama-to-mesh annotation loop: panorama crops,
//! vertex snapping, persisted correspondence sessions, on-demand pose
//! optimization and reprojection overlays.

pub mod api;
pub mod error;
pub mod session;
pub mod snap;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use cityframe_core::geometry::CameraPose;
use cityframe_core::georeg::DeformationField;
use cityframe_core::holistic::{polygon_segment_ids, segment_surfaces, SegmentsFile, DEFAULT_MAX_DIHEDRAL_DEG};
use cityframe_core::mesh::{build_adjacency, load_mesh, CityMesh, DEFAULT_MERGE_DISTANCE};
use cityframe_core::pose::init_pose;
use cityframe_core::raycast::RayCaster;
use cityframe_core::render::CadScene;

pub use api::router;
pub use error::ServiceError;
use session::{validate_id, AnnotationSession, SessionStore};

/// Entry of `<data_dir>/viewpoints.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewpointEntry {
    pub pano_id: String,
    /// equirectangular image, relative to the data directory
    pub pano: PathBuf,
    /// initial pose; otherwise derived from `lat`/`lon`/`azimuth_deg`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<CameraPose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub azimuth_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewpointInfo {
    pub pano_id: String,
    pub width: u32,
    pub height: u32,
    pub initial_pose: CameraPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub mesh_path: PathBuf,
    pub field_path: Option<PathBuf>,
    pub segments_path: Option<PathBuf>,
    pub listen: SocketAddr,
}

pub struct AppState {
    pub data_dir: PathBuf,
    pub mesh: CityMesh,
    pub caster: RayCaster,
    pub scene: CadScene,
    pub viewpoints: BTreeMap<String, (ViewpointEntry, ViewpointInfo)>,
    pub sessions: SessionStore,
    panos: RwLock<HashMap<String, Arc<RgbImage>>>,
}

impl AppState {
    /// Loads mesh, optional field and segmentation, and the viewpoint list.
    pub fn load(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let load = load_mesh(&config.mesh_path)?;
        if load.unknown_tag_warnings > 0 {
            log::warn!("{} polygons with unknown tags", load.unknown_tag_warnings);
        }
        let field = config.field_path.as_ref().map(DeformationField::load).transpose()?;
        let segments = match &config.segments_path {
            Some(p) => Some(SegmentsFile::load(p)?.polygon_ids(load.mesh.polygons.len())?),
            None => None,
        };
        Self::new(&config.data_dir, load.mesh, segments, field.as_ref())
    }

    /// `segments` defaults to segmenting the mesh with default thresholds.
    pub fn new(
        data_dir: &Path,
        mesh: CityMesh,
        segments: Option<Vec<u32>>,
        field: Option<&DeformationField>,
    ) -> Result<Self, ServiceError> {
        let segments = match segments {
            Some(s) => s,
            None => {
                let adj = build_adjacency(&mesh, DEFAULT_MERGE_DISTANCE)?;
                let segs = segment_surfaces(&mesh, &adj, DEFAULT_MAX_DIHEDRAL_DEG)?;
                polygon_segment_ids(&segs, mesh.polygons.len())
            }
        };
        let scene = CadScene::new(&mesh, &segments)?;
        let entries: Vec<ViewpointEntry> = match std::fs::read_to_string(data_dir.join("viewpoints.json")) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let mut viewpoints = BTreeMap::new();
        for e in entries {
            validate_id(&e.pano_id)?;
            let (width, height) = image::image_dimensions(data_dir.join(&e.pano))?;
            let initial_pose = match (e.pose, e.lat, e.lon, field) {
                (Some(p), ..) => p,
                (None, Some(lat), Some(lon), Some(f)) => {
                    init_pose((lat, lon), e.azimuth_deg.unwrap_or(0.0).to_radians(), f, &mesh)?
                }
                _ => {
                    return Err(ServiceError::Config(format!(
                        "viewpoint {} needs a pose, or lat/lon and a deformation field",
                        e.pano_id
                    )))
                }
            };
            let info = ViewpointInfo {
                pano_id: e.pano_id.clone(),
                width,
                height,
                initial_pose,
            };
            viewpoints.insert(e.pano_id.clone(), (e, info));
        }
        Ok(Self {
            data_dir: data_dir.to_path_buf(),
            caster: RayCaster::new(&mesh),
            mesh,
            scene,
            viewpoints,
            sessions: SessionStore::open(data_dir.join("sessions"))?,
            panos: RwLock::new(HashMap::new()),
        })
    }

    pub fn viewpoint(&self, id: &str) -> Result<&(ViewpointEntry, ViewpointInfo), ServiceError> {
        self.viewpoints
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("viewpoint {id}")))
    }

    /// Decoded panorama, cached after first use.
    pub fn pano(&self, id: &str) -> Result<Arc<RgbImage>, ServiceError> {
        if let Some(p) = self.panos.read().expect("pano cache poisoned").get(id) {
            return Ok(p.clone());
        }
        let (entry, _) = self.viewpoint(id)?;
        let img = Arc::new(image::open(self.data_dir.join(&entry.pano))?.into_rgb8());
        self.panos
            .write()
            .expect("pano cache poisoned")
            .insert(id.to_string(), img.clone());
        Ok(img)
    }

    /// Stored session, or a fresh one at the viewpoint's initial pose.
    pub fn load_or_create(&self, id: &str) -> Result<AnnotationSession, ServiceError> {
        let (_, info) = self.viewpoint(id)?;
        Ok(match self.sessions.read(id)? {
            Some(s) => s,
            None => AnnotationSession::new(id, info.width, info.height, info.initial_pose),
        })
    }
}

/// Binds `config.listen` and serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::load(&config)?);
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
