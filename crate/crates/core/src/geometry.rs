//! Coordinate conventions, spherical and perspective projection, view sampling.
//!
//! Frames used throughout the crate:
//!
//! * World: metric CAD frame, `z` up.
//! * Panorama (camera-local): `y` forward at azimuth 0, `z` up, `x` right.
//! * Perspective camera: `x` right, `y` down, `z` forward.
//!
//! Azimuth is a compass heading: positive azimuth turns the forward axis from
//! world `+y` toward world `+x`. View yaw follows the same convention inside
//! the panorama frame and positive pitch looks up.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{cross, dot, normalize, scale, sub, Real, V3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    PixelOutOfRange {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },
    #[error("vector is not unit length (norm {0})")]
    NotUnit(f64),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub const WORLD_UP: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

const UNIT_TOL: f64 = 1e-9;

/// A unit vector in R^3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitDir3(Vector3<f64>);

impl UnitDir3 {
    /// Normalizes `v`; fails on zero or non-finite input.
    pub fn new_normalize(v: Vector3<f64>) -> Result<Self, GeometryError> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(GeometryError::Degenerate("cannot normalize zero vector"));
        }
        Ok(Self(v / n))
    }

    /// Accepts `v` only if it is already unit length within 1e-9.
    pub fn try_new(v: Vector3<f64>) -> Result<Self, GeometryError> {
        let n = v.norm();
        if (n - 1.0).abs() > UNIT_TOL || !n.is_finite() {
            return Err(GeometryError::NotUnit(n));
        }
        Ok(Self(v))
    }

    pub(crate) fn new_unchecked(v: Vector3<f64>) -> Self {
        Self(v)
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }
    pub fn y(&self) -> f64 {
        self.0.y
    }
    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Vector3<f64> {
        self.0
    }

    /// Angle to `other` in radians, in `[0, pi]`.
    pub fn angle_to(&self, other: &UnitDir3) -> f64 {
        // atan2 form stays accurate near 0 and pi
        self.0.cross(&other.0).norm().atan2(self.0.dot(&other.0))
    }
}

impl std::ops::Neg for UnitDir3 {
    type Output = UnitDir3;
    fn neg(self) -> UnitDir3 {
        UnitDir3(-self.0)
    }
}

impl TryFrom<[f64; 3]> for UnitDir3 {
    type Error = GeometryError;
    fn try_from(v: [f64; 3]) -> Result<Self, Self::Error> {
        // Files round-trip through decimal text; renormalize small drift.
        let v = Vector3::from(v);
        let n = v.norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(GeometryError::NotUnit(n));
        }
        Ok(Self(v / n))
    }
}

impl From<UnitDir3> for [f64; 3] {
    fn from(d: UnitDir3) -> Self {
        [d.0.x, d.0.y, d.0.z]
    }
}

/// Pixel grid of an equirectangular panorama (width = 2 x height).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquirectGrid {
    width: u32,
    height: u32,
}

impl EquirectGrid {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if height == 0 || width != 2 * height {
            return Err(GeometryError::InvalidParameter(format!(
                "equirectangular grid must be 2:1, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
}

/// Viewing direction of the fractional panorama position `(u, v)`.
pub fn equirect_pixel_to_ray(grid: EquirectGrid, u: f64, v: f64) -> Result<UnitDir3, GeometryError> {
    let (w, h) = (grid.width as f64, grid.height as f64);
    if !(0.0..w).contains(&u) || !(0.0..h).contains(&v) {
        return Err(GeometryError::PixelOutOfRange {
            u,
            v,
            width: grid.width,
            height: grid.height,
        });
    }
    let lon = 2.0 * PI * (u / w - 0.5);
    let lat = PI * (0.5 - v / h);
    let (sl, cl) = lat.sin_cos();
    let (sp, cp) = lon.sin_cos();
    Ok(UnitDir3(Vector3::new(cl * sp, cl * cp, sl)))
}

/// Inverse of [`equirect_pixel_to_ray`]. `u` lies in `[0, width)`; at the
/// poles `u` is 0.
pub fn ray_to_equirect_pixel(grid: EquirectGrid, d: &UnitDir3) -> (f64, f64) {
    let (w, h) = (grid.width as f64, grid.height as f64);
    let horiz = d.x().hypot(d.y());
    let lat = d.z().atan2(horiz);
    let v = h * (0.5 - lat / PI);
    if horiz < 1e-15 {
        return (0.0, v);
    }
    let lon = d.x().atan2(d.y());
    let mut u = w * (lon / (2.0 * PI) + 0.5);
    if u >= w {
        u -= w;
    }
    (u, v)
}

/// Panorama camera pose: location, compass azimuth, and up direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub location: Vector3<f64>,
    pub azimuth: f64,
    pub up: UnitDir3,
}

impl CameraPose {
    pub fn new(location: Vector3<f64>, azimuth: f64, up: UnitDir3) -> Result<Self, GeometryError> {
        if up.z() <= 0.0 {
            return Err(GeometryError::InvalidParameter(
                "camera up must be within 90 degrees of world up".into(),
            ));
        }
        if !location.iter().all(|c| c.is_finite()) || !azimuth.is_finite() {
            return Err(GeometryError::InvalidParameter("non-finite pose".into()));
        }
        Ok(Self {
            location,
            azimuth,
            up,
        })
    }

    /// Level camera at `location` heading `azimuth`.
    pub fn level(location: Vector3<f64>, azimuth: f64) -> Self {
        Self {
            location,
            azimuth,
            up: UnitDir3(WORLD_UP),
        }
    }

    /// Camera-to-world rotation; columns are the right, forward and up axes.
    pub fn rotation(&self) -> Matrix3<f64> {
        let u = self.up.0;
        let cols = rotation_columns(self.azimuth, [u.x, u.y, u.z]);
        Matrix3::from_columns(&cols.map(Vector3::from))
    }

    /// Unit bearing of world point `x` in the panorama frame.
    pub fn world_to_pano(&self, x: &Vector3<f64>) -> Result<UnitDir3, GeometryError> {
        let d = x - self.location;
        let n = d.norm();
        if !(n > 0.0) {
            return Err(GeometryError::Degenerate("point coincides with camera"));
        }
        let p = self.rotation().transpose() * (d / n);
        // one renormalization removes rounding in the rotation product
        Ok(UnitDir3(p / p.norm()))
    }

    /// Tangent basis at `up` used by the 2-DoF up-direction chart.
    pub fn up_tangent_basis(&self) -> (Vector3<f64>, Vector3<f64>) {
        let u = self.up.0;
        let q = minimal_rotation_from_z([u.x, u.y, u.z]);
        (Vector3::from(q[0]), Vector3::from(q[1]))
    }
}

/// [`CameraPose::world_to_pano`] without error checks.
pub fn world_to_pano(pose: &CameraPose, x: &Vector3<f64>) -> Result<UnitDir3, GeometryError> {
    pose.world_to_pano(x)
}

/// Columns of the rotation taking `e_z` onto unit vector `u` about `e_z x u`.
pub(crate) fn minimal_rotation_from_z<T: Real>(u: V3<T>) -> [V3<T>; 3] {
    let one = T::cst(1.0);
    let c = u[2];
    let k = one / (one + c);
    let c0 = [c + u[1] * u[1] * k, -u[0] * u[1] * k, -u[0]];
    let c1 = [-u[0] * u[1] * k, c + u[0] * u[0] * k, -u[1]];
    [c0, c1, u]
}

/// Camera-to-world rotation columns `[right, forward, up]`.
///
/// Forward is world `y` turned by `azimuth` about world up; the frame is then
/// tilted by the minimal rotation taking world up to `up`, followed by one
/// Gram-Schmidt pass that keeps the up column exact.
pub(crate) fn rotation_columns<T: Real>(azimuth: T, up: V3<T>) -> [V3<T>; 3] {
    let q = minimal_rotation_from_z(up);
    let (s, c) = (azimuth.sin(), azimuth.cos());
    let apply = |v: V3<T>| -> V3<T> {
        [
            q[0][0] * v[0] + q[1][0] * v[1] + q[2][0] * v[2],
            q[0][1] * v[0] + q[1][1] * v[1] + q[2][1] * v[2],
            q[0][2] * v[0] + q[1][2] * v[1] + q[2][2] * v[2],
        ]
    };
    let zero = T::cst(0.0);
    let fwd = apply([s, c, zero]);
    let upc = normalize(up);
    let fwd = normalize(sub(fwd, scale(upc, dot(fwd, upc))));
    let right = cross(fwd, upc);
    [right, fwd, upc]
}

/// Generic form of [`CameraPose::world_to_pano`] for differentiation.
pub(crate) fn world_to_pano_generic<T: Real>(
    location: V3<T>,
    azimuth: T,
    up: V3<T>,
    x: V3<T>,
) -> V3<T> {
    let r = rotation_columns(azimuth, up);
    let d = normalize(sub(x, location));
    [dot(r[0], d), dot(r[1], d), dot(r[2], d)]
}

/// Perspective view attached to a panorama: pinhole intrinsics plus the
/// view's yaw and pitch inside the panorama frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveIntrinsics {
    pub fov_deg: f64,
    pub width: u32,
    pub height: u32,
    /// radians
    pub yaw: f64,
    /// radians
    pub pitch: f64,
}

impl PerspectiveIntrinsics {
    pub fn new(fov_deg: f64, width: u32, height: u32, yaw: f64, pitch: f64) -> Result<Self, GeometryError> {
        let intr = Self {
            fov_deg,
            width,
            height,
            yaw,
            pitch,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(GeometryError::InvalidParameter(format!(
                "field of view {} not in (0, 180)",
                self.fov_deg
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidParameter("empty image".into()));
        }
        Ok(())
    }

    pub fn focal(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.fov_deg.to_radians() / 2.0).tan()
    }

    pub fn principal_point(&self) -> Vector2<f64> {
        Vector2::new(self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Rotation taking perspective-camera coordinates to panorama coordinates.
    pub fn cam_to_pano(&self) -> Matrix3<f64> {
        // camera x -> pano x, camera y (down) -> pano -z, camera z -> pano y
        let base = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0);
        let (sp, cp) = self.pitch.sin_cos();
        let pitch = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
        // compass yaw: rotation about z by -yaw
        let (sy, cy) = self.yaw.sin_cos();
        let yaw = Matrix3::new(cy, sy, 0.0, -sy, cy, 0.0, 0.0, 0.0, 1.0);
        yaw * pitch * base
    }

    /// Camera-frame ray through fractional pixel `(u, v)` (not normalized).
    pub fn unproject(&self, u: f64, v: f64) -> Vector3<f64> {
        let f = self.focal();
        let c = self.principal_point();
        Vector3::new((u - c.x) / f, (v - c.y) / f, 1.0)
    }
}

/// Pinhole projection of a camera-frame direction.
pub fn perspective_project(intr: &PerspectiveIntrinsics, d_cam: &Vector3<f64>) -> (f64, f64, bool) {
    let f = intr.focal();
    let c = intr.principal_point();
    if d_cam.z <= 0.0 {
        return (f64::NAN, f64::NAN, false);
    }
    (c.x + f * d_cam.x / d_cam.z, c.y + f * d_cam.y / d_cam.z, true)
}

pub const VIEWS_PER_PANORAMA: usize = 8;
pub const VIEW_FOV_DEG: f64 = 90.0;
pub const VIEW_SIZE: u32 = 512;
pub const MAX_VIEW_PITCH_DEG: f64 = 45.0;

/// Eight 90-degree 512x512 views at yaws `k * 45` degrees with pitches drawn
/// uniformly from `[0, 45]` degrees.
pub fn make_view_set(seed: u64) -> Vec<PerspectiveIntrinsics> {
    make_view_set_sized(seed, VIEW_SIZE)
}

/// [`make_view_set`] with a custom square resolution.
pub fn make_view_set_sized(seed: u64, size: u32) -> Vec<PerspectiveIntrinsics> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..VIEWS_PER_PANORAMA)
        .map(|k| {
            let pitch_deg = rng.random_range(0.0..=MAX_VIEW_PITCH_DEG);
            PerspectiveIntrinsics {
                fov_deg: VIEW_FOV_DEG,
                width: size,
                height: size,
                yaw: (k as f64 * 45.0).to_radians(),
                pitch: pitch_deg.to_radians(),
            }
        })
        .collect()
}

/// Rotation angle between two rotation matrices, in radians.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a.transpose() * b;
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() / 2.0;
    s.atan2(c)
}

/// Canonical sign for an axis: the largest-magnitude component is positive.
pub fn canonicalize_axis(d: UnitDir3) -> UnitDir3 {
    let v = d.0;
    let i = v.iamax();
    if v[i] < 0.0 {
        -d
    } else {
        d
    }
}

pub(crate) fn deg(rad: f64) -> f64 {
    rad * 180.0 / PI
}
