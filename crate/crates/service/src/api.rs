//! Axum router and handlers.

use std::io::Cursor;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use image::{ImageFormat, RgbImage};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use cityframe_core::geometry::{equirect_pixel_to_ray, CameraPose, PerspectiveIntrinsics, UnitDir3};
use cityframe_core::mesh::CityMesh;
use cityframe_core::pose::{solve_pose, PoseWarning, MIN_CORRESPONDENCES};
use cityframe_core::render::{draw_overlay, resample_pano_to_perspective, RenderConfig};
use cityframe_core::stats::{percentile_nearest_rank, sorted};

use crate::error::ServiceError;
use crate::session::{validate_id, AnnotationSession, SessionPair, SessionSolution};
use crate::snap::{snap_vertex, Snap, DEFAULT_MAX_SNAP_DEG};
use crate::{AppState, ViewpointInfo};

/// Color of segment boundaries in overlays.
pub const OVERLAY_COLOR: [u8; 3] = [255, 0, 255];
pub const MAX_CROP_SIZE: u32 = 4096;

type Shared = Arc<AppState>;
type ApiResult<T> = Result<T, ServiceError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/viewpoints", get(list_viewpoints))
        .route("/pano/{id}/crop", get(pano_crop))
        .route("/session/{id}", get(get_session))
        .route("/session/{id}/snap", post(snap))
        .route("/session/{id}/pairs", post(add_pair))
        .route("/session/{id}/pairs/{k}", delete(delete_pair))
        .route("/session/{id}/optimize", post(optimize))
        .route("/session/{id}/overlay", get(overlay))
        .route("/mesh/region", get(mesh_region))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Config(format!("worker task failed: {e}")))?
}

fn png(img: &RgbImage) -> ApiResult<Response> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], buf.into_inner()).into_response())
}

async fn list_viewpoints(State(st): State<Shared>) -> Json<Vec<ViewpointInfo>> {
    Json(st.viewpoints.values().map(|(_, info)| info.clone()).collect())
}

/// Perspective view request; angles in degrees.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct ViewQuery {
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default = "default_fov")]
    pub fov: f64,
    #[serde(default = "default_size")]
    pub w: u32,
    #[serde(default = "default_size")]
    pub h: u32,
}

fn default_fov() -> f64 {
    90.0
}

fn default_size() -> u32 {
    512
}

impl ViewQuery {
    fn intrinsics(&self) -> ApiResult<PerspectiveIntrinsics> {
        if self.w > MAX_CROP_SIZE || self.h > MAX_CROP_SIZE {
            return Err(ServiceError::BadRequest(format!("crop larger than {MAX_CROP_SIZE}")));
        }
        PerspectiveIntrinsics::new(self.fov, self.w, self.h, self.yaw.to_radians(), self.pitch.to_radians())
            .map_err(|e| ServiceError::BadRequest(e.to_string()))
    }
}

async fn pano_crop(State(st): State<Shared>, Path(id): Path<String>, Query(q): Query<ViewQuery>) -> ApiResult<Response> {
    let intr = q.intrinsics()?;
    let crop = blocking(move || {
        let pano = st.pano(&id)?;
        Ok(resample_pano_to_perspective(&pano, &intr)?)
    })
    .await?;
    png(&crop)
}

/// Runs `f` on the session under its lock, loading or creating it first.
/// When `f` returns `true` the session was mutated: revision is bumped and the
/// document persisted before the lock is released.
async fn with_session<T>(
    st: &AppState,
    id: &str,
    f: impl FnOnce(&mut AnnotationSession) -> ApiResult<(T, bool)>,
) -> ApiResult<(T, AnnotationSession)> {
    validate_id(id)?;
    st.viewpoint(id)?;
    let slot = st.sessions.slot(id);
    let mut guard = slot.lock().await;
    if guard.is_none() {
        *guard = Some(st.load_or_create(id)?);
    }
    let session = guard.as_mut().expect("session loaded");
    let mut work = session.clone();
    let (out, mutated) = f(&mut work)?;
    if mutated {
        work.revision += 1;
        st.sessions.persist(&work)?;
        *session = work;
    }
    Ok((out, session.clone()))
}

async fn get_session(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<AnnotationSession>> {
    let (_, s) = with_session(&st, &id, |_| Ok(((), false))).await?;
    Ok(Json(s))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RayFrame {
    #[default]
    Pano,
    World,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SnapRequest {
    pub ray: [f64; 3],
    #[serde(default)]
    pub frame: RayFrame,
    #[serde(default)]
    pub max_snap_deg: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapResponse {
    pub snapped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snap: Option<Snap>,
}

async fn snap(
    State(st): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<SnapRequest>,
) -> ApiResult<Json<SnapResponse>> {
    let max_deg = req.max_snap_deg.unwrap_or(DEFAULT_MAX_SNAP_DEG);
    if !(max_deg > 0.0) {
        return Err(ServiceError::BadRequest("max_snap_deg must be positive".into()));
    }
    let ray = UnitDir3::new_normalize(Vector3::from(req.ray)).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let (_, session) = with_session(&st, &id, |_| Ok(((), false))).await?;
    let pose = session.pose;
    let snap = blocking(move || {
        let world_ray = match req.frame {
            RayFrame::World => ray,
            RayFrame::Pano => UnitDir3::new_normalize(pose.rotation() * ray.as_vector())?,
        };
        Ok(snap_vertex(&st.mesh, &st.caster, &pose, &world_ray, max_deg))
    })
    .await?;
    Ok(Json(SnapResponse {
        snapped: snap.is_some(),
        snap,
    }))
}

#[derive(Debug, Clone, Deserialize)]
pub struct AddPairRequest {
    pub u: f64,
    pub v: f64,
    pub world: [f64; 3],
    #[serde(default)]
    pub vertex: Option<u32>,
    #[serde(default)]
    pub revision: Option<u64>,
}

async fn add_pair(
    State(st): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<AddPairRequest>,
) -> ApiResult<Json<AnnotationSession>> {
    if !req.world.iter().all(|c| c.is_finite()) {
        return Err(ServiceError::BadRequest("world point must be finite".into()));
    }
    if let Some(k) = req.vertex {
        if k as usize >= st.mesh.vertices.len() {
            return Err(ServiceError::BadRequest(format!("vertex {k} out of range")));
        }
    }
    let (_, s) = with_session(&st, &id, |s| {
        s.check_revision(req.revision)?;
        equirect_pixel_to_ray(s.grid()?, req.u, req.v).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        s.pairs.push(SessionPair {
            u: req.u,
            v: req.v,
            world: req.world,
            vertex: req.vertex,
        });
        Ok(((), true))
    })
    .await?;
    Ok(Json(s))
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
pub struct RevisionQuery {
    #[serde(default)]
    pub revision: Option<u64>,
}

async fn delete_pair(
    State(st): State<Shared>,
    Path((id, k)): Path<(String, usize)>,
    Query(q): Query<RevisionQuery>,
) -> ApiResult<Json<AnnotationSession>> {
    let (_, s) = with_session(&st, &id, |s| {
        s.check_revision(q.revision)?;
        if k >= s.pairs.len() {
            return Err(ServiceError::NotFound(format!("pair {k}")));
        }
        s.pairs.remove(k);
        Ok(((), true))
    })
    .await?;
    Ok(Json(s))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeResponse {
    pub pose: CameraPose,
    pub residuals_deg: Vec<f64>,
    pub median_residual_deg: f64,
    pub initial_median_residual_deg: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<PoseWarning>,
    pub revision: u64,
}

fn median(values: &[f64]) -> f64 {
    percentile_nearest_rank(&sorted(values), 50.0).unwrap_or(0.0)
}

async fn optimize(
    State(st): State<Shared>,
    Path(id): Path<String>,
    body: Option<Json<RevisionQuery>>,
) -> ApiResult<Json<OptimizeResponse>> {
    let given = body.and_then(|b| b.0.revision);
    let (resp, s) = with_session(&st, &id, |s| {
        s.check_revision(given)?;
        if s.pairs.len() < MIN_CORRESPONDENCES {
            return Err(ServiceError::InsufficientPairs {
                required: MIN_CORRESPONDENCES,
                got: s.pairs.len(),
            });
        }
        let corr = s.correspondences()?;
        let initial = cityframe_core::pose::residuals(&s.pose, &corr)?;
        let sol = solve_pose(&s.pose, &corr)?;
        s.pose = sol.pose;
        s.last_solution = Some(SessionSolution {
            residuals_deg: sol.residuals_deg.clone(),
            iterations: sol.iterations,
            converged: sol.converged,
            warnings: sol.warnings.clone(),
        });
        let resp = OptimizeResponse {
            pose: sol.pose,
            median_residual_deg: median(&sol.residuals_deg),
            residuals_deg: sol.residuals_deg,
            initial_median_residual_deg: median(&initial.iter().map(|r| r.to_degrees()).collect::<Vec<_>>()),
            iterations: sol.iterations,
            converged: sol.converged,
            warnings: sol.warnings,
            revision: 0,
        };
        Ok((resp, true))
    })
    .await?;
    Ok(Json(OptimizeResponse {
        revision: s.revision,
        ..resp
    }))
}

async fn overlay(State(st): State<Shared>, Path(id): Path<String>, Query(q): Query<ViewQuery>) -> ApiResult<Response> {
    let intr = q.intrinsics()?;
    let (_, session) = with_session(&st, &id, |_| Ok(((), false))).await?;
    let img = blocking(move || {
        let pano = st.pano(&id)?;
        let mut crop = resample_pano_to_perspective(&pano, &intr)?;
        if st.scene.polygon_count() > 0 {
            let layers = st.scene.render(&RenderConfig::new(intr, session.pose))?;
            draw_overlay(&mut crop, &layers, OVERLAY_COLOR)?;
        }
        Ok(crop)
    })
    .await?;
    png(&img)
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct RegionQuery {
    pub min_x: f64,
    pub min_y: f64,
    pub min_z: f64,
    pub max_x: f64,
    pub max_y: f64,
    pub max_z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshRegion {
    pub mesh: CityMesh,
    /// index of each returned polygon in the full mesh
    pub polygon_ids: Vec<u32>,
}

async fn mesh_region(State(st): State<Shared>, Query(q): Query<RegionQuery>) -> ApiResult<Json<MeshRegion>> {
    let min = Vector3::new(q.min_x, q.min_y, q.min_z);
    let max = Vector3::new(q.max_x, q.max_y, q.max_z);
    if !(min.iter().chain(max.iter()).all(|c| c.is_finite()) && (0..3).all(|i| min[i] <= max[i])) {
        return Err(ServiceError::BadRequest("region must satisfy min <= max".into()));
    }
    let region = blocking(move || {
        let (mesh, polygon_ids) = st.mesh.extract_box(&min, &max);
        Ok(MeshRegion { mesh, polygon_ids })
    })
    .await?;
    Ok(Json(region))
}
