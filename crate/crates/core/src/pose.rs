//! Panorama pose initialization and refinement from 2D-3D correspondences.
//!
//! The objective is the sum of squared angles between each annotated
//! panorama ray and the bearing of its world point. For Levenberg-Marquardt
//! each correspondence contributes a 2-vector: the spherical log map of the
//! predicted bearing in the tangent plane of the observed ray, whose norm is
//! exactly that angle.

use std::path::Path;

use nalgebra::{SMatrix, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::autodiff::{dot, normalize, Jet, Real, V3};
use crate::geometry::{
    deg, equirect_pixel_to_ray, world_to_pano_generic, CameraPose, EquirectGrid, GeometryError, UnitDir3,
    WORLD_UP,
};
use crate::georeg::{invert_warp, DeformationField, GeoRegError};
use crate::mesh::{CityMesh, MeshError, TerrainIndex};
use crate::stats::{fraction_at_most, percentile_nearest_rank, sorted};

#[derive(Debug, thiserror::Error)]
pub enum PoseError {
    #[error("need at least {required} correspondences, got {got}")]
    InsufficientData { required: usize, got: usize },
    #[error("world point {index} coincides with the camera location")]
    DegeneratePoint { index: usize },
    #[error("field has no geodetic reference plane")]
    MissingTangentPlane,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    GeoReg(#[from] GeoRegError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Camera height above ground used for initialization, meters.
pub const CAMERA_HEIGHT_M: f64 = 2.5;
pub const MIN_CORRESPONDENCES: usize = 4;
/// Annotation floor; fewer pairs solve but raise a warning.
pub const RECOMMENDED_CORRESPONDENCES: usize = 8;

/// Panorama ray paired with the CAD point it depicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub ray: UnitDir3,
    pub world: Vector3<f64>,
}

impl Correspondence {
    pub fn new(ray: UnitDir3, world: Vector3<f64>) -> Self {
        Self { ray, world }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseWarning {
    FewCorrespondences { count: usize },
    RankDeficient { min_eigenvalue_ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSolution {
    pub pose: CameraPose,
    pub residuals_deg: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Sum of squared residual angles (rad^2) at the solution.
    pub objective: f64,
    /// Objective after each accepted step, starting with the initial pose.
    pub objective_history: Vec<f64>,
    pub warnings: Vec<PoseWarning>,
}

/// Angles between observed rays and predicted bearings, radians.
pub fn residuals(pose: &CameraPose, corr: &[Correspondence]) -> Result<Vec<f64>, PoseError> {
    corr.iter()
        .enumerate()
        .map(|(index, c)| {
            let p = pose
                .world_to_pano(&c.world)
                .map_err(|_| PoseError::DegeneratePoint { index })?;
            Ok(c.ray.as_vector().dot(p.as_vector()).clamp(-1.0, 1.0).acos())
        })
        .collect()
}

/// Sum of squared residual angles.
pub fn objective(pose: &CameraPose, corr: &[Correspondence]) -> Result<f64, PoseError> {
    Ok(residuals(pose, corr)?.iter().map(|r| r * r).sum())
}

/// Orthonormal basis of the plane perpendicular to `x`.
fn tangent_basis(x: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let a = if x.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let b1 = a.cross(x).normalize();
    let b2 = x.cross(&b1);
    (b1, b2)
}

/// 6-vector chart around a pose: location offset, azimuth offset, and
/// up-direction tangent coordinates.
#[derive(Debug, Clone, Copy)]
pub struct PoseChart {
    base: CameraPose,
    t1: Vector3<f64>,
    t2: Vector3<f64>,
}

impl PoseChart {
    pub fn at(base: CameraPose) -> Self {
        let (t1, t2) = base.up_tangent_basis();
        Self { base, t1, t2 }
    }

    fn params<T: Real>(&self, delta: &[T; 6]) -> (V3<T>, T, V3<T>) {
        let l = self.base.location;
        let u = self.base.up.as_vector();
        let loc = [T::cst(l.x) + delta[0], T::cst(l.y) + delta[1], T::cst(l.z) + delta[2]];
        let az = T::cst(self.base.azimuth) + delta[3];
        let up = normalize([
            T::cst(u.x) + delta[4] * T::cst(self.t1.x) + delta[5] * T::cst(self.t2.x),
            T::cst(u.y) + delta[4] * T::cst(self.t1.y) + delta[5] * T::cst(self.t2.y),
            T::cst(u.z) + delta[4] * T::cst(self.t1.z) + delta[5] * T::cst(self.t2.z),
        ]);
        (loc, az, up)
    }

    /// Pose at chart coordinates `delta`; `None` if the camera would tip over.
    pub fn retract(&self, delta: &[f64; 6]) -> Option<CameraPose> {
        let (loc, az, up) = self.params(delta);
        let up = UnitDir3::new_normalize(Vector3::from(up)).ok()?;
        CameraPose::new(Vector3::from(loc), az, up).ok()
    }

    /// Tangent-space residual of one correspondence at chart point `delta`.
    pub fn residual<T: Real>(&self, c: &Correspondence, delta: &[T; 6]) -> [T; 2] {
        let (loc, az, up) = self.params(delta);
        let w = c.world;
        let p = world_to_pano_generic(loc, az, up, [T::cst(w.x), T::cst(w.y), T::cst(w.z)]);
        log_map(c.ray.as_vector(), p)
    }
}

/// Log map of unit `p` at unit `x`, in the fixed tangent basis of `x`.
fn log_map<T: Real>(x: &Vector3<f64>, p: V3<T>) -> [T; 2] {
    let (b1, b2) = tangent_basis(x);
    let lift = |v: Vector3<f64>| [T::cst(v.x), T::cst(v.y), T::cst(v.z)];
    let c = dot(lift(*x), p);
    let e1 = dot(lift(b1), p);
    let e2 = dot(lift(b2), p);
    let s2 = e1 * e1 + e2 * e2;
    let ratio = if s2.value() > 1e-16 || c.value() <= 0.0 {
        let s = s2.sqrt();
        if s.value() == 0.0 {
            // antipodal: any direction is a geodesic
            return [T::cst(std::f64::consts::PI), T::cst(0.0)];
        }
        s.atan2(c) / s
    } else {
        // atan(s / c) / s = (1 - s^2 / (3 c^2)) / c + O(s^4)
        let one = T::cst(1.0);
        (one - s2 / (T::cst(3.0) * c * c)) / c
    };
    [e1 * ratio, e2 * ratio]
}

/// Stacked residual vector and Jacobian (rows: 2 per correspondence).
pub fn residuals_and_jacobian(pose: &CameraPose, corr: &[Correspondence]) -> (Vec<f64>, Vec<[f64; 6]>) {
    let chart = PoseChart::at(*pose);
    let vars: [Jet<6>; 6] = std::array::from_fn(|i| Jet::var(0.0, i));
    let mut r = Vec::with_capacity(2 * corr.len());
    let mut j = Vec::with_capacity(2 * corr.len());
    for c in corr {
        for e in chart.residual(c, &vars) {
            r.push(e.v);
            j.push(e.d);
        }
    }
    (r, j)
}

/// Tangent-space residual vector only.
pub fn tangent_residuals(pose: &CameraPose, corr: &[Correspondence]) -> Vec<f64> {
    let chart = PoseChart::at(*pose);
    let zero = [0.0; 6];
    corr.iter().flat_map(|c| chart.residual(c, &zero)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub gradient_tolerance: f64,
    pub initial_damping_scale: f64,
    pub decrease_factor: f64,
    pub increase_factor: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: 1e-10,
            gradient_tolerance: 1e-10,
            initial_damping_scale: 1e-3,
            decrease_factor: 3.0,
            increase_factor: 2.0,
        }
    }
}

/// Levenberg-Marquardt refinement of `init` with default settings.
pub fn solve_pose(init: &CameraPose, corr: &[Correspondence]) -> Result<PoseSolution, PoseError> {
    solve_pose_with(init, corr, &LmConfig::default())
}

pub fn solve_pose_with(init: &CameraPose, corr: &[Correspondence], cfg: &LmConfig) -> Result<PoseSolution, PoseError> {
    if corr.len() < MIN_CORRESPONDENCES {
        return Err(PoseError::InsufficientData {
            required: MIN_CORRESPONDENCES,
            got: corr.len(),
        });
    }
    // validates world points up front
    residuals(init, corr)?;
    let mut warnings = Vec::new();
    if corr.len() < RECOMMENDED_CORRESPONDENCES {
        log::warn!("solving pose from only {} correspondences", corr.len());
        warnings.push(PoseWarning::FewCorrespondences { count: corr.len() });
    }

    type M6 = SMatrix<f64, 6, 6>;
    type V6 = SVector<f64, 6>;
    let normal_eq = |pose: &CameraPose| {
        let (r, j) = residuals_and_jacobian(pose, corr);
        let mut a = M6::zeros();
        let mut g = V6::zeros();
        for (ri, ji) in r.iter().zip(&j) {
            let row = V6::from_row_slice(ji);
            a += row * row.transpose();
            g += row * *ri;
        }
        let f: f64 = r.iter().map(|x| x * x).sum();
        (a, g, f)
    };

    let mut pose = *init;
    let (mut a, mut g, mut f) = normal_eq(&pose);
    let mut history = vec![f];
    let mut mu = cfg.initial_damping_scale * (0..6).map(|k| a[(k, k)]).fold(0.0, f64::max);
    let mut iterations = 0;
    let termination = loop {
        // gradient of sum r^2 is 2 J'r
        if 2.0 * g.amax() < cfg.gradient_tolerance {
            break Termination::GradientTolerance;
        }
        if iterations >= cfg.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;
        let damped = a + M6::identity() * mu.max(f64::MIN_POSITIVE);
        let Some(step) = damped.cholesky().map(|c| c.solve(&(-g))) else {
            mu = (mu * cfg.increase_factor).max(1e-12);
            continue;
        };
        if step.norm() < cfg.step_tolerance {
            break Termination::StepTolerance;
        }
        let delta: [f64; 6] = step.into();
        let candidate = PoseChart::at(pose).retract(&delta);
        let accepted = candidate.and_then(|c| {
            let rn = tangent_residuals(&c, corr);
            let fnew: f64 = rn.iter().map(|x| x * x).sum();
            (fnew < f).then_some(c)
        });
        match accepted {
            Some(c) => {
                pose = c;
                (a, g, f) = normal_eq(&pose);
                history.push(f);
                mu /= cfg.decrease_factor;
            }
            None => mu *= cfg.increase_factor,
        }
    };

    let eig = a.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if hi <= 0.0 || lo / hi < 1e-12 {
        warnings.push(PoseWarning::RankDeficient {
            min_eigenvalue_ratio: if hi > 0.0 { lo / hi } else { 0.0 },
        });
    }
    let residuals_deg = residuals(&pose, corr)?.into_iter().map(deg).collect();
    Ok(PoseSolution {
        pose,
        residuals_deg,
        iterations,
        converged: termination != Termination::MaxIterations,
        termination,
        objective: f,
        objective_history: history,
        warnings,
    })
}

/// Initial pose from a local-plane position: inverse-warped plan position,
/// terrain elevation plus camera height, level up vector.
pub fn init_pose_local(
    x_local: &Vector2<f64>,
    azimuth: f64,
    field: &DeformationField,
    terrain: &TerrainIndex,
) -> Result<CameraPose, PoseError> {
    let xy = invert_warp(field, x_local, None)?;
    let z = terrain.elevation_at(xy.x, xy.y)? + CAMERA_HEIGHT_M;
    Ok(CameraPose::new(Vector3::new(xy.x, xy.y, z), azimuth, UnitDir3::new_unchecked(WORLD_UP))?)
}

/// Initial pose from geodetic latitude/longitude (degrees).
pub fn init_pose(
    lat_lon: (f64, f64),
    azimuth: f64,
    field: &DeformationField,
    mesh: &CityMesh,
) -> Result<CameraPose, PoseError> {
    let plane = field.tangent_plane.ok_or(PoseError::MissingTangentPlane)?;
    let local = plane.to_local(lat_lon.0, lat_lon.1);
    init_pose_local(&local, azimuth, field, &TerrainIndex::new(mesh))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageStats {
    pub median_deg: f64,
    pub p95_deg: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionStats {
    pub per_image: Vec<ImageStats>,
    /// Ascending per-image medians (for cumulative plots).
    pub sorted_medians_deg: Vec<f64>,
    /// Ascending per-image 95th percentiles.
    pub sorted_p95_deg: Vec<f64>,
    pub pooled_median_deg: f64,
    pub pooled_p95_deg: f64,
    pub fraction_median_below_half_degree: f64,
    pub fraction_p95_within_1_2_degrees: f64,
}

pub fn reprojection_stats(solutions: &[PoseSolution]) -> Result<ReprojectionStats, PoseError> {
    if solutions.is_empty() {
        return Err(PoseError::Empty("no solutions"));
    }
    let mut per_image = Vec::with_capacity(solutions.len());
    let mut pooled = Vec::new();
    for s in solutions {
        if s.residuals_deg.is_empty() {
            return Err(PoseError::Empty("solution without residuals"));
        }
        let v = sorted(&s.residuals_deg);
        per_image.push(ImageStats {
            median_deg: percentile_nearest_rank(&v, 50.0).unwrap_or(0.0),
            p95_deg: percentile_nearest_rank(&v, 95.0).unwrap_or(0.0),
            count: v.len(),
        });
        pooled.extend_from_slice(&s.residuals_deg);
    }
    let medians: Vec<f64> = per_image.iter().map(|s| s.median_deg).collect();
    let p95s: Vec<f64> = per_image.iter().map(|s| s.p95_deg).collect();
    let pooled = sorted(&pooled);
    Ok(ReprojectionStats {
        fraction_median_below_half_degree: medians.iter().filter(|&&m| m < 0.5).count() as f64
            / medians.len() as f64,
        fraction_p95_within_1_2_degrees: fraction_at_most(&p95s, 1.2),
        sorted_medians_deg: sorted(&medians),
        sorted_p95_deg: sorted(&p95s),
        pooled_median_deg: percentile_nearest_rank(&pooled, 50.0).unwrap_or(0.0),
        pooled_p95_deg: percentile_nearest_rank(&pooled, 95.0).unwrap_or(0.0),
        per_image,
    })
}

/// Annotated pixel pair as stored in correspondence files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPair {
    pub u: f64,
    pub v: f64,
    pub world: [f64; 3],
}

/// Per-viewpoint correspondence document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceFile {
    pub pano_id: String,
    /// Panorama size the pixel coordinates refer to.
    pub width: u32,
    pub height: u32,
    pub pairs: Vec<PixelPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub azimuth_deg: Option<f64>,
}

impl CorrespondenceFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PoseError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn correspondences(&self) -> Result<Vec<Correspondence>, PoseError> {
        let grid = EquirectGrid::new(self.width, self.height)?;
        self.pairs
            .iter()
            .map(|p| {
                Ok(Correspondence::new(
                    equirect_pixel_to_ray(grid, p.u, p.v)?,
                    Vector3::from(p.world),
                ))
            })
            .collect()
    }
}

/// Stored pose with its residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    pub pano_id: String,
    pub location: [f64; 3],
    pub azimuth: f64,
    pub up: [f64; 3],
    #[serde(default)]
    pub residuals_deg: Vec<f64>,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default)]
    pub converged: bool,
}

impl PoseFile {
    pub fn from_solution(pano_id: &str, s: &PoseSolution) -> Self {
        Self {
            residuals_deg: s.residuals_deg.clone(),
            iterations: s.iterations,
            converged: s.converged,
            ..Self::from_pose(pano_id, &s.pose)
        }
    }

    pub fn from_pose(pano_id: &str, pose: &CameraPose) -> Self {
        Self {
            pano_id: pano_id.to_string(),
            location: pose.location.into(),
            azimuth: pose.azimuth,
            up: (*pose.up.as_vector()).into(),
            residuals_deg: Vec::new(),
            iterations: 0,
            converged: false,
        }
    }

    pub fn pose(&self) -> Result<CameraPose, PoseError> {
        Ok(CameraPose::new(
            Vector3::from(self.location),
            self.azimuth,
            UnitDir3::new_normalize(Vector3::from(self.up))?,
        )?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PoseError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PoseError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::georeg::GridSpec;
    use crate::mesh::{fixtures::square, SemanticTag};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene_points(rng: &mut impl Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let r = rng.random_range(15.0..60.0);
                Vector3::new(r * a.cos(), r * a.sin(), rng.random_range(0.0..25.0))
            })
            .collect()
    }

    fn synth(pose: &CameraPose, pts: &[Vector3<f64>]) -> Vec<Correspondence> {
        pts.iter()
            .map(|p| Correspondence::new(pose.world_to_pano(p).unwrap(), *p))
            .collect()
    }

    fn tilted_pose() -> CameraPose {
        CameraPose::new(
            Vector3::new(1.0, -2.0, 2.5),
            0.4,
            UnitDir3::new_normalize(Vector3::new(0.03, -0.02, 1.0)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn exact_correspondences_have_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pose = tilted_pose();
        let corr = synth(&pose, &scene_points(&mut rng, 10));
        assert!(residuals(&pose, &corr).unwrap().iter().all(|&r| r < 1e-7));
        assert!(tangent_residuals(&pose, &corr).iter().all(|&r| r.abs() < 1e-12));
    }

    #[test]
    fn antipodal_ray_gives_pi() {
        let pose = CameraPose::level(Vector3::zeros(), 0.0);
        let x = Vector3::new(3.0, 4.0, 1.0);
        let p = pose.world_to_pano(&x).unwrap();
        let r = residuals(&pose, &[Correspondence::new(-p, x)]).unwrap();
        assert!((r[0] - std::f64::consts::PI).abs() < 1e-7);
        assert!(matches!(
            residuals(&pose, &[Correspondence::new(p, Vector3::zeros())]),
            Err(PoseError::DegeneratePoint { index: 0 })
        ));
    }

    #[test]
    fn tangent_residual_norm_equals_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pose = tilted_pose();
        let pts = scene_points(&mut rng, 20);
        let corr: Vec<_> = pts
            .iter()
            .map(|p| {
                let d = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                Correspondence::new(UnitDir3::new_normalize(d).unwrap(), *p)
            })
            .collect();
        let t = tangent_residuals(&pose, &corr);
        let a = residuals(&pose, &corr).unwrap();
        for (k, ang) in a.iter().enumerate() {
            let n = (t[2 * k].powi(2) + t[2 * k + 1].powi(2)).sqrt();
            assert!((n - ang).abs() < 1e-7, "{n} vs {ang}");
        }
    }

    #[test]
    fn solve_from_truth_stays_put() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = tilted_pose();
        let corr = synth(&truth, &scene_points(&mut rng, 12));
        let sol = solve_pose(&truth, &corr).unwrap();
        assert!(sol.converged);
        assert!((sol.pose.location - truth.location).norm() < 1e-9);
        assert!(sol.residuals_deg.iter().all(|&r| r < 1e-5));
    }

    #[test]
    fn solve_recovers_perturbed_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = tilted_pose();
        let corr = synth(&truth, &scene_points(&mut rng, 12));
        let init = CameraPose::level(truth.location + Vector3::new(3.0, -4.0, 0.0), truth.azimuth + 10f64.to_radians());
        let sol = solve_pose(&init, &corr).unwrap();
        assert!(sol.converged, "{:?}", sol.termination);
        assert!((sol.pose.location - truth.location).norm() < 1e-3);
        let ang = crate::geometry::rotation_angle_between(&sol.pose.rotation(), &truth.rotation());
        assert!(deg(ang) < 1e-3);
        assert!(sol.objective_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn too_few_correspondences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = tilted_pose();
        let corr = synth(&truth, &scene_points(&mut rng, 3));
        assert!(matches!(
            solve_pose(&truth, &corr),
            Err(PoseError::InsufficientData { required: 4, got: 3 })
        ));
        let corr = synth(&truth, &scene_points(&mut rng, 5));
        let sol = solve_pose(&truth, &corr).unwrap();
        assert!(sol.warnings.contains(&PoseWarning::FewCorrespondences { count: 5 }));
    }

    #[test]
    fn collinear_points_flag_rank_deficiency() {
        let truth = CameraPose::level(Vector3::zeros(), 0.0);
        let pts: Vec<_> = (1..=8).map(|k| Vector3::new(0.0, 5.0 * k as f64, 0.0)).collect();
        let corr = synth(&truth, &pts);
        let sol = solve_pose(&truth, &corr).unwrap();
        assert!(sol
            .warnings
            .iter()
            .any(|w| matches!(w, PoseWarning::RankDeficient { .. })));
    }

    #[test]
    fn init_pose_uses_terrain_and_field() {
        let g = GridSpec::new(Vector2::new(-50.0, -50.0), 10.0, 11, 11).unwrap();
        let field = DeformationField::identity(g);
        let mut ground = square(-0.5, -0.5, 0.0, SemanticTag::Terrain);
        ground.vertices.iter_mut().for_each(|v| {
            v.x *= 200.0;
            v.y *= 200.0;
        });
        let terrain = TerrainIndex::new(&ground);
        let pose = init_pose_local(&Vector2::new(3.0, 4.0), 0.0, &field, &terrain).unwrap();
        assert!((pose.location - Vector3::new(3.0, 4.0, 2.5)).norm() < 1e-9);
        assert_eq!(pose.up.as_vector(), &Vector3::z());

        let mut raised = ground.clone();
        raised.vertices.iter_mut().for_each(|v| v.z = 7.25);
        let pose = init_pose_local(&Vector2::new(3.0, 4.0), 0.3, &field, &TerrainIndex::new(&raised)).unwrap();
        assert!((pose.location.z - 9.75).abs() < 1e-12);
        assert_eq!(pose.azimuth, 0.3);

        let warped = DeformationField::from_offset(g, |p| Vector2::new(0.02 * p.y, -0.01 * p.x + 1.0));
        let target = Vector2::new(12.0, -7.0);
        let pose = init_pose_local(&target, 0.0, &warped, &terrain).unwrap();
        let oracle = invert_warp(&warped, &target, Some(target)).unwrap();
        assert!((pose.location.xy() - oracle).norm() < 1e-6);
        assert!((warped.warp(&pose.location.xy()).unwrap() - target).norm() < 1e-6);
    }

    #[test]
    fn stats_small_cases() {
        let sol = |r: Vec<f64>| PoseSolution {
            pose: CameraPose::level(Vector3::zeros(), 0.0),
            residuals_deg: r,
            iterations: 0,
            converged: true,
            termination: Termination::GradientTolerance,
            objective: 0.0,
            objective_history: vec![],
            warnings: vec![],
        };
        let s = reprojection_stats(&[sol(vec![0.3, 0.1, 0.2])]).unwrap();
        assert_eq!(s.per_image[0].median_deg, 0.2);
        assert_eq!(s.per_image[0].p95_deg, 0.3);
        let z = reprojection_stats(&[sol(vec![0.0; 5])]).unwrap();
        assert_eq!((z.per_image[0].median_deg, z.per_image[0].p95_deg), (0.0, 0.0));
        assert!(reprojection_stats(&[]).is_err());
        assert!(reprojection_stats(&[sol(vec![])]).is_err());
    }
}
