//! Snapping annotation clicks to visible mesh vertices.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use cityframe_core::geometry::{CameraPose, UnitDir3};
use cityframe_core::mesh::CityMesh;
use cityframe_core::raycast::RayCaster;

pub const DEFAULT_MAX_SNAP_DEG: f64 = 0.5;
/// A vertex is visible when it is at most this far behind the first hit.
pub const VISIBILITY_TOL_M: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snap {
    pub vertex: u32,
    pub world: [f64; 3],
    pub angle_deg: f64,
}

/// Whether `x` is seen from `origin` (not hidden behind nearer geometry).
pub fn is_visible(caster: &RayCaster, origin: &Vector3<f64>, x: &Vector3<f64>) -> bool {
    let d = x - origin;
    let dist = d.norm();
    if !(dist > 0.0) {
        return false;
    }
    match caster.cast(origin, &(d / dist), 0.0, f64::INFINITY) {
        Some(hit) => dist <= hit.t + VISIBILITY_TOL_M,
        None => true,
    }
}

/// Angularly nearest visible vertex within `max_snap_deg` of the world-frame
/// `click_ray` cast from the pose location; `None` if there is none.
pub fn snap_vertex(
    mesh: &CityMesh,
    caster: &RayCaster,
    pose: &CameraPose,
    click_ray: &UnitDir3,
    max_snap_deg: f64,
) -> Option<Snap> {
    let limit = max_snap_deg.to_radians();
    let mut candidates: Vec<(f64, usize)> = mesh
        .vertices
        .iter()
        .enumerate()
        .filter_map(|(i, v)| {
            let d = UnitDir3::new_normalize(v - pose.location).ok()?;
            let a = d.angle_to(click_ray);
            (a < limit).then_some((a, i))
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    candidates
        .into_iter()
        .find(|&(_, i)| is_visible(caster, &pose.location, &mesh.vertices[i]))
        .map(|(a, i)| Snap {
            vertex: i as u32,
            world: mesh.vertices[i].into(),
            angle_deg: a.to_degrees(),
        })
}
