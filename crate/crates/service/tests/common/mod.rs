#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use nalgebra::Vector3;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

use cityframe_core::geometry::{CameraPose, EquirectGrid, UnitDir3};
use cityframe_core::mesh::CityMesh;
use cityframe_core::pipeline::auto_correspondences;
use cityframe_core::pose::PixelPair;
use cityframe_core::synth::{generate_city, street_viewpoints, PanoramaSynth, SceneSpec, SyntheticCity};
use cityframe_service::{router, AppState, ViewpointEntry};

pub struct Fixture {
    pub dir: TempDir,
    pub city: SyntheticCity,
    pub truth: CameraPose,
    pub init: CameraPose,
    pub grid: EquirectGrid,
    pub state: Arc<AppState>,
    pub app: Router,
}

impl Fixture {
    /// Pairs for visible building corners seen from the true pose.
    pub fn true_pairs(&self, n: usize) -> Vec<PixelPair> {
        let synth = PanoramaSynth::new(&self.city.mesh, &self.city.segment_labels);
        auto_correspondences(&self.city, synth.caster(), &self.truth, self.grid, n)
    }

    pub fn reload(&self) -> (Arc<AppState>, Router) {
        let state = Arc::new(AppState::new(self.dir.path(), self.city.mesh.clone(), None, None).unwrap());
        let app = router(state.clone());
        (state, app)
    }
}

pub fn write_viewpoints(dir: &Path, entries: &[ViewpointEntry]) {
    std::fs::write(dir.join("viewpoints.json"), serde_json::to_string_pretty(entries).unwrap()).unwrap();
}

pub fn entry(id: &str, pano: &str, pose: CameraPose) -> ViewpointEntry {
    ViewpointEntry {
        pano_id: id.into(),
        pano: pano.into(),
        pose: Some(pose),
        lat: None,
        lon: None,
        azimuth_deg: None,
    }
}

/// Synthetic city with a panorama rendered at the true pose. Viewpoint `v0`
/// starts from a perturbed pose, `v1` from the true one.
pub fn fixture(seed: u64, pano_height: u32) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let city = generate_city(&SceneSpec {
        area: 120.0 * 120.0,
        ..SceneSpec::new(seed, 10)
    })
    .unwrap();
    let synth = PanoramaSynth::new(&city.mesh, &city.segment_labels);
    let grid = EquirectGrid::new(2 * pano_height, pano_height).unwrap();
    let truth = street_viewpoints(&city, 50, 3.0, seed)
        .into_iter()
        .find(|p| auto_correspondences(&city, synth.caster(), p, grid, 12).len() >= 8)
        .expect("viewpoint with enough visible corners");
    synth.render(&truth, pano_height).unwrap().image.save(dir.path().join("pano.png")).unwrap();
    let tilt = UnitDir3::new_normalize(Vector3::new(0.02, -0.01, 1.0)).unwrap();
    let init = CameraPose::new(truth.location + Vector3::new(2.0, -1.5, 0.3), truth.azimuth + 0.06, tilt).unwrap();
    write_viewpoints(dir.path(), &[entry("v0", "pano.png", init), entry("v1", "pano.png", truth)]);
    let state = Arc::new(AppState::new(dir.path(), city.mesh.clone(), None, None).unwrap());
    let app = router(state.clone());
    Fixture {
        dir,
        city,
        truth,
        init,
        grid,
        state,
        app,
    }
}

/// Data directory with one panorama and an empty mesh.
pub fn empty_mesh_fixture() -> (TempDir, Router) {
    let dir = tempfile::tempdir().unwrap();
    let img = image::RgbImage::from_fn(128, 64, |x, y| image::Rgb([(x * 2) as u8, (y * 4) as u8, 77]));
    img.save(dir.path().join("pano.png")).unwrap();
    write_viewpoints(dir.path(), &[entry("e0", "pano.png", CameraPose::level(Vector3::new(0.0, 0.0, 2.5), 0.0))]);
    let state = Arc::new(AppState::new(dir.path(), CityMesh::default(), None, None).unwrap());
    (dir, router(state))
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn call_json(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    let v = if b.is_empty() { Value::Null } else { serde_json::from_slice(&b).unwrap() };
    (s, v)
}

pub fn pair_json(p: &PixelPair) -> Value {
    serde_json::json!({ "u": p.u, "v": p.v, "world": p.world })
}
