//! Holistic structure from the CAD model: surface segments, vanishing
//! points from clustered facade normals, and multi-view plane occurrence.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{canonicalize_axis, CameraPose, PerspectiveIntrinsics, UnitDir3, WORLD_UP};
use crate::mesh::{newell, CityMesh, PolygonAdjacency};
use crate::render::{world_to_camera, RasterLayers, RenderError};

#[derive(Debug, thiserror::Error)]
pub enum HolisticError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("adjacency covers {adjacency} polygons but mesh has {mesh}")]
    AdjacencyMismatch { adjacency: usize, mesh: usize },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const DEFAULT_MAX_DIHEDRAL_DEG: f64 = 30.0;
/// Minimum pixel count, summed over a viewpoint's views, for a segment to occur.
pub const DEFAULT_OCCURRENCE_PIXELS: usize = 50;
/// Clusters whose mean normal is this close to vertical give no horizontal VP.
pub const VERTICAL_SKIP_DEG: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSegment {
    pub id: u32,
    pub polygon_ids: Vec<u32>,
    /// Area-weighted normal; `None` when the segment has no area.
    pub mean_normal: Option<UnitDir3>,
    pub area: f64,
}

/// Angle between the axes through `a` and `b`, in `[0, pi/2]`.
pub fn axis_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.dot(b).abs().clamp(0.0, 1.0).acos()
}

fn unit_normals(mesh: &CityMesh) -> Vec<Option<Vector3<f64>>> {
    (0..mesh.polygons.len())
        .map(|i| {
            let n = newell(mesh.polygon_points(i));
            let l = n.norm();
            (l > 1e-12).then(|| n / l)
        })
        .collect()
}

/// Breadth-first flood fill merging adjacent polygons whose normals differ by
/// less than `max_dihedral_deg` (up to orientation).
pub fn segment_surfaces(
    mesh: &CityMesh,
    adj: &PolygonAdjacency,
    max_dihedral_deg: f64,
) -> Result<Vec<SurfaceSegment>, HolisticError> {
    if !(max_dihedral_deg > 0.0 && max_dihedral_deg < 180.0) {
        return Err(HolisticError::InvalidParameter(format!(
            "max_dihedral_deg {max_dihedral_deg} not in (0, 180)"
        )));
    }
    let n = mesh.polygons.len();
    if adj.neighbors.len() != n {
        return Err(HolisticError::AdjacencyMismatch {
            adjacency: adj.neighbors.len(),
            mesh: n,
        });
    }
    let thr = max_dihedral_deg.to_radians();
    let normals = unit_normals(mesh);
    let joins = |i: usize, j: usize| match (normals[i], normals[j]) {
        (Some(a), Some(b)) => axis_angle(&a, &b) < thr,
        _ => false,
    };
    let mut seen = vec![false; n];
    let mut segments = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut members = vec![start as u32];
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &j in adj.neighbors(i) {
                let j = j as usize;
                if !seen[j] && joins(i, j) {
                    seen[j] = true;
                    members.push(j as u32);
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();
        let (mean_normal, area) = mean_normal(mesh, &normals, &members);
        segments.push(SurfaceSegment {
            id: segments.len() as u32 + 1,
            polygon_ids: members,
            mean_normal,
            area,
        });
    }
    Ok(segments)
}

fn mean_normal(mesh: &CityMesh, normals: &[Option<Vector3<f64>>], members: &[u32]) -> (Option<UnitDir3>, f64) {
    let mut sum = Vector3::zeros();
    let mut area = 0.0;
    let mut reference: Option<Vector3<f64>> = None;
    for &p in members {
        let Some(n) = normals[p as usize] else { continue };
        let a = mesh.polygon_area(p as usize);
        let r = *reference.get_or_insert(n);
        sum += if n.dot(&r) < 0.0 { -n } else { n } * a;
        area += a;
    }
    (UnitDir3::new_normalize(sum).ok().filter(|_| area > 0.0), area)
}

/// Segment id (starting at 1) of every polygon.
pub fn polygon_segment_ids(segments: &[SurfaceSegment], n_polygons: usize) -> Vec<u32> {
    let mut ids = vec![0; n_polygons];
    for s in segments {
        for &p in &s.polygon_ids {
            ids[p as usize] = s.id;
        }
    }
    ids
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub max_dihedral_deg: f64,
    pub merge_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub id: u32,
    pub polygon_ids: Vec<u32>,
}

/// Stored segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentsFile {
    pub segments: Vec<SegmentEntry>,
    pub params: SegmentParams,
}

impl SegmentsFile {
    pub fn new(segments: &[SurfaceSegment], params: SegmentParams) -> Self {
        Self {
            segments: segments
                .iter()
                .map(|s| SegmentEntry {
                    id: s.id,
                    polygon_ids: s.polygon_ids.clone(),
                })
                .collect(),
            params,
        }
    }

    /// Per-polygon ids; errors unless the file partitions `n_polygons`.
    pub fn polygon_ids(&self, n_polygons: usize) -> Result<Vec<u32>, HolisticError> {
        let mut ids = vec![0; n_polygons];
        for s in &self.segments {
            if s.id == 0 {
                return Err(HolisticError::InvalidParameter("segment id 0".into()));
            }
            for &p in &s.polygon_ids {
                let slot = ids
                    .get_mut(p as usize)
                    .ok_or_else(|| HolisticError::InvalidParameter(format!("polygon {p} out of range")))?;
                if *slot != 0 {
                    return Err(HolisticError::InvalidParameter(format!("polygon {p} in two segments")));
                }
                *slot = s.id;
            }
        }
        if let Some(p) = ids.iter().position(|&i| i == 0) {
            return Err(HolisticError::InvalidParameter(format!("polygon {p} has no segment")));
        }
        Ok(ids)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HolisticError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HolisticError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub const NOISE: i32 = -1;

/// DBSCAN over axes (`d(a, b) = arccos |a.b|`). `min_pts` counts the point
/// itself. Clusters are numbered from 0 in order of their first core point;
/// a border point joins the first cluster that reaches it.
pub fn dbscan_directions(dirs: &[UnitDir3], eps_deg: f64, min_pts: usize) -> Result<Vec<i32>, HolisticError> {
    if !(eps_deg > 0.0) || min_pts < 1 {
        return Err(HolisticError::InvalidParameter(format!(
            "need eps_deg > 0 and min_pts >= 1, got {eps_deg} and {min_pts}"
        )));
    }
    let eps = eps_deg.to_radians();
    let n = dirs.len();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| axis_angle(dirs[i].as_vector(), dirs[j].as_vector()) <= eps)
            .collect()
    };
    const UNSEEN: i32 = i32::MIN;
    let mut labels = vec![UNSEEN; n];
    let mut cluster = 0;
    for i in 0..n {
        if labels[i] != UNSEEN {
            continue;
        }
        let nb = neighbors(i);
        if nb.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = cluster;
        let mut queue: VecDeque<usize> = nb.into_iter().collect();
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = cluster;
            }
            if labels[q] != UNSEEN {
                continue;
            }
            labels[q] = cluster;
            let nq = neighbors(q);
            if nq.len() >= min_pts {
                queue.extend(nq);
            }
        }
        cluster += 1;
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VpKind {
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanishingPoint {
    /// camera frame, canonical sign
    pub direction: UnitDir3,
    pub kind: VpKind,
}

/// Segment seen in a view with its visible pixel count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibleSegment {
    pub id: u32,
    pub normal: UnitDir3,
    pub pixel_area: f64,
}

/// Visible segments of a rendered view, in id order.
pub fn visible_segments(layers: &RasterLayers, segments: &[SurfaceSegment]) -> Vec<VisibleSegment> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &id in &layers.segment_id {
        if id != 0 {
            *counts.entry(id).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter_map(|(id, c)| {
            let s = segments.get(id as usize - 1).filter(|s| s.id == id)?;
            Some(VisibleSegment {
                id,
                normal: s.mean_normal?,
                pixel_area: c as f64,
            })
        })
        .collect()
}

/// Vertical VP plus one horizontal VP per normal cluster.
pub fn extract_vps(
    visible: &[VisibleSegment],
    pose: &CameraPose,
    intr: &PerspectiveIntrinsics,
    eps_deg: f64,
    min_pts: usize,
) -> Result<Vec<VanishingPoint>, HolisticError> {
    let c = world_to_camera(pose, intr);
    let vertical = UnitDir3::new_normalize(c * WORLD_UP).map_err(|e| HolisticError::InvalidParameter(e.to_string()))?;
    let mut vps = vec![VanishingPoint {
        direction: canonicalize_axis(vertical),
        kind: VpKind::Vertical,
    }];
    if visible.is_empty() {
        return Ok(vps);
    }
    let dirs: Vec<UnitDir3> = visible.iter().map(|v| v.normal).collect();
    let labels = dbscan_directions(&dirs, eps_deg, min_pts)?;
    let n_clusters = labels.iter().copied().max().map_or(0, |m| m + 1);
    for k in 0..n_clusters {
        let mut scatter = Matrix3::zeros();
        for (v, _) in visible.iter().zip(&labels).filter(|(_, &l)| l == k) {
            let n = v.normal.as_vector();
            scatter += n * n.transpose() * v.pixel_area;
        }
        let Some(axis) = principal_axis(&scatter) else { continue };
        if axis_angle(&axis, &WORLD_UP) < VERTICAL_SKIP_DEG.to_radians() {
            continue;
        }
        let Ok(h) = UnitDir3::new_normalize(axis.cross(&WORLD_UP)) else { continue };
        let Ok(d) = UnitDir3::new_normalize(c * h.as_vector()) else { continue };
        vps.push(VanishingPoint {
            direction: canonicalize_axis(d),
            kind: VpKind::Horizontal,
        });
    }
    Ok(vps)
}

/// Dominant eigenvector of a weighted scatter matrix of axes.
fn principal_axis(scatter: &Matrix3<f64>) -> Option<Vector3<f64>> {
    if !(scatter.trace() > 0.0) {
        return None;
    }
    let eig = SymmetricEigen::new(*scatter);
    let i = eig.eigenvalues.imax();
    Some(eig.eigenvectors.column(i).normalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpFile {
    pub vps: Vec<VanishingPoint>,
}

/// Number of viewpoints in which each segment occurs, indexed by `id - 1`.
///
/// `render_fn` returns the segment-id layers of one viewpoint's views; a
/// segment occurs when it covers at least `min_pixels` pixels over them.
pub fn plane_occurrence<F>(
    segments: &[SurfaceSegment],
    poses: &[CameraPose],
    render_fn: F,
    min_pixels: usize,
) -> Result<Vec<u32>, HolisticError>
where
    F: Fn(&CameraPose) -> Result<Vec<RasterLayers>, RenderError> + Sync,
{
    if poses.is_empty() {
        return Err(HolisticError::InvalidParameter("no poses".into()));
    }
    let n = segments.len();
    let per_pose: Vec<Vec<bool>> = poses
        .par_iter()
        .map(|pose| {
            let mut pixels = vec![0usize; n];
            for layers in render_fn(pose)? {
                for &id in &layers.segment_id {
                    if id != 0 && (id as usize) <= n {
                        pixels[id as usize - 1] += 1;
                    }
                }
            }
            Ok(pixels.into_iter().map(|c| c >= min_pixels).collect())
        })
        .collect::<Result<_, HolisticError>>()?;
    let mut counts = vec![0u32; n];
    for occ in per_pose {
        for (c, o) in counts.iter_mut().zip(occ) {
            *c += o as u32;
        }
    }
    Ok(counts)
}

/// Histogram of occurrence counts: entry `k` is the number of segments seen
/// in exactly `k` viewpoints.
pub fn occurrence_histogram(counts: &[u32]) -> Vec<usize> {
    let max = counts.iter().copied().max().unwrap_or(0) as usize;
    let mut h = vec![0; max + 1];
    for &c in counts {
        h[c as usize] += 1;
    }
    h
}
