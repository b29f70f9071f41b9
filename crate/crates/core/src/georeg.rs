//! Plan-view registration between CAD coordinates and geodetic coordinates.
//!
//! The mapping is a regular grid of absolute target coordinates, bilinearly
//! interpolated. Fitting minimizes the control-point misfit plus `lambda`
//! times the squared discrete Laplacian of the grid.

use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum GeoRegError {
    #[error("point ({x}, {y}) outside the deformation grid")]
    OutOfDomain { x: f64, y: f64 },
    #[error("system is rank deficient at lambda = 0 ({nodes} free nodes, {constraints} constraints); use lambda > 0")]
    RankDeficient { nodes: usize, constraints: usize },
    #[error("linear solve did not converge: gradient norm {gradient_norm:e} at objective {objective:e}")]
    SolverStalled { gradient_norm: f64, objective: f64 },
    #[error("inversion did not converge after {iterations} iterations (residual {residual:e} m)")]
    NotConverged {
        last: Vector2<f64>,
        residual: f64,
        iterations: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mean Earth radius used by the local tangent-plane approximation.
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Equirectangular approximation about a reference latitude/longitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTangentPlane {
    pub lat0_deg: f64,
    pub lon0_deg: f64,
}

impl LocalTangentPlane {
    pub fn new(lat0_deg: f64, lon0_deg: f64) -> Self {
        Self { lat0_deg, lon0_deg }
    }

    /// Plane centered on the mean of `latlon` points (degrees).
    pub fn centered_on(latlon: &[(f64, f64)]) -> Self {
        let n = latlon.len().max(1) as f64;
        let (la, lo) = latlon.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        Self::new(la / n, lo / n)
    }

    pub fn to_local(&self, lat_deg: f64, lon_deg: f64) -> Vector2<f64> {
        let cos0 = self.lat0_deg.to_radians().cos();
        Vector2::new(
            EARTH_RADIUS_M * cos0 * (lon_deg - self.lon0_deg).to_radians(),
            EARTH_RADIUS_M * (lat_deg - self.lat0_deg).to_radians(),
        )
    }

    /// Returns `(lat, lon)` in degrees.
    pub fn to_geodetic(&self, p: &Vector2<f64>) -> (f64, f64) {
        let cos0 = self.lat0_deg.to_radians().cos();
        (
            self.lat0_deg + (p.y / EARTH_RADIUS_M).to_degrees(),
            self.lon0_deg + (p.x / (EARTH_RADIUS_M * cos0)).to_degrees(),
        )
    }
}

/// Corresponding plan positions in CAD meters and local geodetic meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPair {
    pub x_cad: Vector2<f64>,
    pub x_wgs: Vector2<f64>,
}

impl ControlPair {
    pub fn new(x_cad: Vector2<f64>, x_wgs: Vector2<f64>) -> Self {
        Self { x_cad, x_wgs }
    }
}

#[derive(Debug, Deserialize)]
struct PairRow {
    x_cad: f64,
    y_cad: f64,
    lat: f64,
    lon: f64,
}

/// Reads `x_cad,y_cad,lat,lon` rows and converts them to a local tangent
/// plane centered on the mean geodetic position.
pub fn read_control_pairs(path: impl AsRef<Path>) -> Result<(Vec<ControlPair>, LocalTangentPlane), GeoRegError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let rows: Vec<PairRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Err(GeoRegError::InvalidInput("no control pairs".into()));
    }
    let plane = LocalTangentPlane::centered_on(&rows.iter().map(|r| (r.lat, r.lon)).collect::<Vec<_>>());
    let pairs = rows
        .iter()
        .map(|r| ControlPair::new(Vector2::new(r.x_cad, r.y_cad), plane.to_local(r.lat, r.lon)))
        .collect();
    Ok((pairs, plane))
}

/// Grid geometry: node `(i, j)` sits at `origin + cell * (i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vector2<f64>,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(origin: Vector2<f64>, cell: f64, nx: usize, ny: usize) -> Result<Self, GeoRegError> {
        let g = Self { origin, cell, nx, ny };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<(), GeoRegError> {
        if self.nx < 2 || self.ny < 2 || !(self.cell > 0.0 && self.cell.is_finite()) {
            return Err(GeoRegError::InvalidInput(format!(
                "grid needs nx, ny >= 2 and cell > 0 (got {}x{}, cell {})",
                self.nx, self.ny, self.cell
            )));
        }
        Ok(())
    }

    /// Grid covering `points` with one spare cell on every side.
    pub fn covering(points: &[Vector2<f64>], cell: f64) -> Result<Self, GeoRegError> {
        if points.is_empty() {
            return Err(GeoRegError::InvalidInput("no points to cover".into()));
        }
        let lo = points.iter().fold(Vector2::repeat(f64::INFINITY), |a, p| a.inf(p));
        let hi = points.iter().fold(Vector2::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
        let span = hi - lo;
        Self::new(
            lo - Vector2::repeat(cell),
            cell,
            (span.x / cell).ceil() as usize + 3,
            (span.y / cell).ceil() as usize + 3,
        )
    }

    /// Covering grid with cell = bounding-box diagonal / 32.
    pub fn default_for(points: &[Vector2<f64>]) -> Result<Self, GeoRegError> {
        let lo = points.iter().fold(Vector2::repeat(f64::INFINITY), |a, p| a.inf(p));
        let hi = points.iter().fold(Vector2::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
        let diag = (hi - lo).norm();
        let cell = if diag > 0.0 && diag.is_finite() { diag / 32.0 } else { 1.0 };
        Self::covering(points, cell)
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node(&self, i: usize, j: usize) -> Vector2<f64> {
        self.origin + Vector2::new(i as f64, j as f64) * self.cell
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        let max = self.node(self.nx - 1, self.ny - 1);
        p.x >= self.origin.x && p.y >= self.origin.y && p.x <= max.x && p.y <= max.y
    }

    /// Cell indices and fractional offsets of `p`, or `None` outside.
    fn locate(&self, p: &Vector2<f64>) -> Option<(usize, usize, f64, f64)> {
        if !self.contains(p) {
            return None;
        }
        let s = (p - self.origin) / self.cell;
        let i = (s.x.floor() as usize).min(self.nx - 2);
        let j = (s.y.floor() as usize).min(self.ny - 2);
        Some((i, j, s.x - i as f64, s.y - j as f64))
    }

    /// Bilinear weights `[(node, w); 4]` for `p`.
    fn weights(&self, p: &Vector2<f64>) -> Option<[(usize, f64); 4]> {
        let (i, j, fx, fy) = self.locate(p)?;
        let k = j * self.nx + i;
        Some([
            (k, (1.0 - fx) * (1.0 - fy)),
            (k + 1, fx * (1.0 - fy)),
            (k + self.nx, (1.0 - fx) * fy),
            (k + self.nx + 1, fx * fy),
        ])
    }

    /// Rows of the discrete Laplacian: per node, the axis second differences
    /// whose two neighbors exist.
    fn laplacian_rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = Vec::new();
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = j * self.nx + i;
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(5);
                let mut center = 0.0;
                if i > 0 && i + 1 < self.nx {
                    row.push((k - 1, 1.0));
                    row.push((k + 1, 1.0));
                    center -= 2.0;
                }
                if j > 0 && j + 1 < self.ny {
                    row.push((k - self.nx, 1.0));
                    row.push((k + self.nx, 1.0));
                    center -= 2.0;
                }
                if center != 0.0 {
                    row.push((k, center));
                    rows.push(row);
                }
            }
        }
        rows
    }
}

/// The lookup table of absolute target coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationField {
    pub origin: Vector2<f64>,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major (`j * nx + i`) mapped coordinates.
    pub values: Vec<Vector2<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangent_plane: Option<LocalTangentPlane>,
}

impl DeformationField {
    pub fn grid(&self) -> GridSpec {
        GridSpec {
            origin: self.origin,
            cell: self.cell,
            nx: self.nx,
            ny: self.ny,
        }
    }

    fn from_grid(grid: GridSpec, values: Vec<Vector2<f64>>) -> Self {
        Self {
            origin: grid.origin,
            cell: grid.cell,
            nx: grid.nx,
            ny: grid.ny,
            values,
            tangent_plane: None,
        }
    }

    /// Every node maps to its own position.
    pub fn identity(grid: GridSpec) -> Self {
        Self::from_offset(grid, |_| Vector2::zeros())
    }

    /// Node positions plus `offset(node)`.
    pub fn from_offset(grid: GridSpec, offset: impl Fn(Vector2<f64>) -> Vector2<f64>) -> Self {
        let values = (0..grid.ny)
            .flat_map(|j| (0..grid.nx).map(move |i| (i, j)))
            .map(|(i, j)| {
                let p = grid.node(i, j);
                p + offset(p)
            })
            .collect();
        Self::from_grid(grid, values)
    }

    pub fn validate(&self) -> Result<(), GeoRegError> {
        self.grid().validate()?;
        if self.values.len() != self.nx * self.ny {
            return Err(GeoRegError::InvalidInput(format!(
                "{} values for a {}x{} grid",
                self.values.len(),
                self.nx,
                self.ny
            )));
        }
        if !self.values.iter().all(|v| v.x.is_finite() && v.y.is_finite()) {
            return Err(GeoRegError::InvalidInput("non-finite field value".into()));
        }
        Ok(())
    }

    /// Bilinear interpolation of the table at `x_cad`.
    pub fn warp(&self, x_cad: &Vector2<f64>) -> Result<Vector2<f64>, GeoRegError> {
        let w = self
            .grid()
            .weights(x_cad)
            .ok_or(GeoRegError::OutOfDomain { x: x_cad.x, y: x_cad.y })?;
        Ok(w.iter().map(|&(k, wk)| self.values[k] * wk).sum())
    }

    /// Jacobian of [`Self::warp`] at `x_cad` (columns: d/dx, d/dy).
    pub fn warp_jacobian(&self, x_cad: &Vector2<f64>) -> Result<Matrix2<f64>, GeoRegError> {
        let g = self.grid();
        let (i, j, fx, fy) = g
            .locate(x_cad)
            .ok_or(GeoRegError::OutOfDomain { x: x_cad.x, y: x_cad.y })?;
        let k = j * g.nx + i;
        let (v00, v10, v01, v11) = (
            self.values[k],
            self.values[k + 1],
            self.values[k + g.nx],
            self.values[k + g.nx + 1],
        );
        let dx = ((v10 - v00) * (1.0 - fy) + (v11 - v01) * fy) / g.cell;
        let dy = ((v01 - v00) * (1.0 - fx) + (v11 - v10) * fx) / g.cell;
        Ok(Matrix2::from_columns(&[dx, dy]))
    }

    /// Sum of squared control-point misfits.
    pub fn data_term(&self, pairs: &[ControlPair]) -> Result<f64, GeoRegError> {
        pairs
            .iter()
            .map(|p| self.warp(&p.x_cad).map(|y| (y - p.x_wgs).norm_squared()))
            .sum()
    }

    /// Squared Frobenius norm of the discrete Laplacian of the table.
    pub fn smoothness_term(&self) -> f64 {
        self.grid()
            .laplacian_rows()
            .iter()
            .map(|row| row.iter().map(|&(k, c)| self.values[k] * c).sum::<Vector2<f64>>().norm_squared())
            .sum()
    }

    pub fn objective(&self, pairs: &[ControlPair], lambda: f64) -> Result<f64, GeoRegError> {
        Ok(self.data_term(pairs)? + lambda * self.smoothness_term())
    }

    pub fn to_json(&self) -> Result<String, GeoRegError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, GeoRegError> {
        let f: Self = serde_json::from_str(s)?;
        f.validate()?;
        Ok(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeoRegError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GeoRegError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Diagnostics from [`fit_field`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub objective: f64,
    pub data_term: f64,
    pub smoothness_term: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Objective at the identity field, at the mean-shifted start, then after
    /// every conjugate-gradient iteration.
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub field: DeformationField,
    pub report: FitReport,
}

struct System {
    data: Vec<[(usize, f64); 4]>,
    lap: Vec<Vec<(usize, f64)>>,
    lambda: f64,
    n: usize,
}

impl System {
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for row in &self.data {
            let s: f64 = row.iter().map(|&(k, w)| w * v[k]).sum();
            for &(k, w) in row {
                out[k] += w * s;
            }
        }
        if self.lambda > 0.0 {
            for row in &self.lap {
                let s: f64 = row.iter().map(|&(k, c)| c * v[k]).sum();
                for &(k, c) in row {
                    out[k] += self.lambda * c * s;
                }
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for row in &self.data {
            for &(k, w) in row {
                d[k] += w * w;
            }
        }
        for row in &self.lap {
            for &(k, c) in row {
                d[k] += self.lambda * c * c;
            }
        }
        d
    }
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned CG on `H x = g` from `x = 0`, restarted from the
/// true residual when the recursive one has drifted. Calls `on_iter` with the
/// energy `x'Hx - 2x'g` after every iteration.
fn pcg(sys: &System, g: &[f64], mut on_iter: impl FnMut(f64)) -> (Vec<f64>, usize) {
    const RESTARTS: usize = 4;
    let n = sys.n;
    let minv: Vec<f64> = sys.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = vec![0.0; n];
    let gnorm = dotv(g, g).sqrt();
    if gnorm == 0.0 {
        return (x, 0);
    }
    // relative tolerance, capped at 1e-9
    let tol = (1e-12 * gnorm).min(1e-9);
    let max_iter = 20 * n + 100;
    let mut hp = vec![0.0; n];
    let mut energy = 0.0;
    let mut it = 0;
    for _ in 0..=RESTARTS {
        sys.apply(&x, &mut hp);
        let mut r: Vec<f64> = g.iter().zip(&hp).map(|(a, b)| a - b).collect();
        if dotv(&r, &r).sqrt() <= tol || it >= max_iter {
            break;
        }
        let mut z: Vec<f64> = r.iter().zip(&minv).map(|(a, b)| a * b).collect();
        let mut p = z.clone();
        let mut rz = dotv(&r, &z);
        while it < max_iter && dotv(&r, &r).sqrt() > tol {
            sys.apply(&p, &mut hp);
            let php = dotv(&p, &hp);
            if !(php > 0.0) {
                break;
            }
            let alpha = rz / php;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * hp[k];
            }
            // each step lowers the energy by alpha * r'z
            energy -= alpha * rz;
            it += 1;
            on_iter(energy);
            for k in 0..n {
                z[k] = r[k] * minv[k];
            }
            let rz_new = dotv(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
    }
    (x, it)
}

/// Fits the table minimizing misfit plus `lambda` times Laplacian energy.
///
/// The unknowns are solved as offsets from the identity field, which has zero
/// Laplacian, so the objective is unchanged and the solve starts at identity.
pub fn fit_field(pairs: &[ControlPair], grid: GridSpec, lambda: f64) -> Result<FitResult, GeoRegError> {
    grid.validate()?;
    if pairs.is_empty() {
        return Err(GeoRegError::InvalidInput("need at least one control pair".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(GeoRegError::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    let mut data = Vec::with_capacity(pairs.len());
    for p in pairs {
        if !(p.x_cad.iter().chain(p.x_wgs.iter()).all(|c| c.is_finite())) {
            return Err(GeoRegError::InvalidInput("non-finite control pair".into()));
        }
        data.push(
            grid.weights(&p.x_cad)
                .ok_or(GeoRegError::OutOfDomain { x: p.x_cad.x, y: p.x_cad.y })?,
        );
    }
    let n = grid.node_count();
    let sys = System {
        data,
        lap: grid.laplacian_rows(),
        lambda,
        n,
    };
    if lambda == 0.0 {
        let touched = sys.diagonal().iter().filter(|&&d| d > 0.0).count();
        if touched < n || n > pairs.len() {
            return Err(GeoRegError::RankDeficient {
                nodes: n,
                constraints: pairs.len(),
            });
        }
    }

    let identity = DeformationField::identity(grid);
    // residual targets relative to the identity field
    let mut targets: Vec<Vector2<f64>> = pairs
        .iter()
        .zip(&sys.data)
        .map(|(p, w)| p.x_wgs - w.iter().map(|&(k, wk)| identity.values[k] * wk).sum::<Vector2<f64>>())
        .collect();
    let identity_objective: f64 = targets.iter().map(|t| t.norm_squared()).sum();
    // solve from identity shifted by the mean offset
    let shift = targets.iter().sum::<Vector2<f64>>() / targets.len() as f64;
    for t in &mut targets {
        *t -= shift;
    }
    let rhs = |c: usize| {
        let mut g = vec![0.0; n];
        for (row, t) in sys.data.iter().zip(&targets) {
            for &(k, w) in row {
                g[k] += w * t[c];
            }
        }
        g
    };
    let base: Vec<f64> = (0..2).map(|c| targets.iter().map(|t| t[c] * t[c]).sum()).collect();
    let mut history = vec![identity_objective, base[0] + base[1]];
    let gx = rhs(0);
    let (dx, itx) = pcg(&sys, &gx, |e| history.push(base[0] + e + base[1]));
    let fx = *history.last().unwrap() - base[1];
    let gy = rhs(1);
    let (dy, ity) = pcg(&sys, &gy, |e| history.push(fx + base[1] + e));

    let mut field = identity;
    for k in 0..n {
        field.values[k] += shift + Vector2::new(dx[k], dy[k]);
    }

    let mut grad2 = 0.0;
    let mut hv = vec![0.0; n];
    for (d, g) in [(&dx, &gx), (&dy, &gy)] {
        sys.apply(d, &mut hv);
        grad2 += hv.iter().zip(g).map(|(a, b)| 4.0 * (a - b) * (a - b)).sum::<f64>();
    }
    let data_term = field.data_term(pairs)?;
    let smoothness_term = field.smoothness_term();
    let objective = data_term + lambda * smoothness_term;
    let gradient_norm = grad2.sqrt();
    if gradient_norm >= 1e-8 * (1.0 + objective) {
        return Err(GeoRegError::SolverStalled {
            gradient_norm,
            objective,
        });
    }
    Ok(FitResult {
        field,
        report: FitReport {
            objective,
            data_term,
            smoothness_term,
            gradient_norm,
            iterations: itx + ity,
            objective_history: history,
        },
    })
}

/// Leave-one-out cross-validation over `lambda_grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda_best: f64,
    /// Mean held-out error per candidate, meters.
    pub cv_errors: Vec<f64>,
    /// Root-mean-square held-out error per candidate, meters.
    pub cv_rmse: Vec<f64>,
    /// Largest held-out error per candidate, meters.
    pub cv_max: Vec<f64>,
}

/// Errors within this of the minimum count as ties.
pub const CV_TIE_TOL: f64 = 1e-9;

pub fn select_lambda_cv(pairs: &[ControlPair], grid: GridSpec, lambda_grid: &[f64]) -> Result<CvResult, GeoRegError> {
    if pairs.len() < 2 {
        return Err(GeoRegError::InvalidInput("cross-validation needs at least 2 pairs".into()));
    }
    if lambda_grid.is_empty() {
        return Err(GeoRegError::InvalidInput("empty lambda grid".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..lambda_grid.len())
        .flat_map(|l| (0..pairs.len()).map(move |k| (l, k)))
        .collect();
    let errs: Vec<f64> = jobs
        .par_iter()
        .map(|&(l, k)| {
            let train: Vec<ControlPair> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, p)| *p)
                .collect();
            let fit = fit_field(&train, grid, lambda_grid[l])?;
            Ok((fit.field.warp(&pairs[k].x_cad)? - pairs[k].x_wgs).norm())
        })
        .collect::<Result<_, GeoRegError>>()?;
    let m = pairs.len();
    let per = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> { errs.chunks(m).map(f).collect() };
    let cv_errors = per(&|c| c.iter().sum::<f64>() / m as f64);
    let cv_rmse = per(&|c| (c.iter().map(|e| e * e).sum::<f64>() / m as f64).sqrt());
    let cv_max = per(&|c| c.iter().copied().fold(0.0, f64::max));
    let min = cv_errors.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = CV_TIE_TOL * (1.0 + min);
    let lambda_best = lambda_grid
        .iter()
        .zip(&cv_errors)
        .filter(|(_, &e)| e <= min + tol)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CvResult {
        lambda_best,
        cv_errors,
        cv_rmse,
        cv_max,
    })
}

pub const INVERT_MAX_ITER: usize = 100;

/// Gauss-Newton inversion of [`DeformationField::warp`].
pub fn invert_warp(
    field: &DeformationField,
    x_wgs: &Vector2<f64>,
    x_init: Option<Vector2<f64>>,
) -> Result<Vector2<f64>, GeoRegError> {
    let grid = field.grid();
    let clamp = |p: Vector2<f64>| {
        let max = grid.node(grid.nx - 1, grid.ny - 1);
        Vector2::new(p.x.clamp(grid.origin.x, max.x), p.y.clamp(grid.origin.y, max.y))
    };
    let mut x = match x_init {
        Some(p) => clamp(p),
        None => {
            // start from the node whose image is nearest the target
            let k = field
                .values
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - x_wgs).norm_squared().total_cmp(&(b.1 - x_wgs).norm_squared()))
                .map(|(k, _)| k)
                .unwrap_or(0);
            grid.node(k % grid.nx, k / grid.nx)
        }
    };
    let mut residual = f64::INFINITY;
    for it in 0..INVERT_MAX_ITER {
        let r = field.warp(&x)? - x_wgs;
        residual = r.norm();
        if residual < 1e-9 {
            return Ok(x);
        }
        let j = field.warp_jacobian(&x)?;
        let step = match (j.transpose() * j).try_inverse() {
            Some(inv) => -(inv * j.transpose() * r),
            None => {
                return Err(GeoRegError::NotConverged {
                    last: x,
                    residual,
                    iterations: it,
                })
            }
        };
        let next = clamp(x + step);
        let moved = (next - x).norm();
        x = next;
        if moved < 1e-9 {
            residual = (field.warp(&x)? - x_wgs).norm();
            if residual < 1e-6 {
                return Ok(x);
            }
            return Err(GeoRegError::NotConverged {
                last: x,
                residual,
                iterations: it + 1,
            });
        }
    }
    let final_res = (field.warp(&x)? - x_wgs).norm();
    if final_res < 1e-6 {
        return Ok(x);
    }
    Err(GeoRegError::NotConverged {
        last: x,
        residual: residual.min(final_res),
        iterations: INVERT_MAX_ITER,
    })
}
