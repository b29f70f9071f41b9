//! Perspective products for panorama views: RGB resampled from the
//! equirectangular image and z-buffered depth, normal, semantic and segment
//! layers rasterized from the CAD mesh.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb, RgbImage};
use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{make_view_set_sized, CameraPose, EquirectGrid, GeometryError, PerspectiveIntrinsics, ray_to_equirect_pixel, UnitDir3, VIEW_SIZE};
use crate::mesh::{newell, CityMesh, MeshError, SemanticTag};

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("invalid render input: {0}")]
    InvalidInput(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("segment id {0} does not fit a 16-bit image")]
    TooManySegments(u32),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const DEFAULT_NEAR: f64 = 0.1;
/// Polygon layer value for pixels that see no geometry.
pub const NO_POLYGON: u32 = u32::MAX;

/// Rendered semantic classes. Curbs have no tag of their own and render as
/// terrain/road.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum SemanticClass {
    Sky = 0,
    Building = 1,
    TerrainRoad = 2,
    Bridge = 3,
    Tree = 4,
    Water = 5,
    Other = 6,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 7] = [
        SemanticClass::Sky,
        SemanticClass::Building,
        SemanticClass::TerrainRoad,
        SemanticClass::Bridge,
        SemanticClass::Tree,
        SemanticClass::Water,
        SemanticClass::Other,
    ];

    /// Palette color used in `semt.png`.
    pub fn color(self) -> [u8; 3] {
        match self {
            SemanticClass::Sky => [70, 130, 180],
            SemanticClass::Building => [220, 20, 60],
            SemanticClass::TerrainRoad => [128, 64, 128],
            SemanticClass::Bridge => [250, 170, 30],
            SemanticClass::Tree => [107, 142, 35],
            SemanticClass::Water => [0, 80, 255],
            SemanticClass::Other => [190, 190, 190],
        }
    }

    pub fn from_color(c: [u8; 3]) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.color() == c)
    }
}

impl From<SemanticTag> for SemanticClass {
    fn from(t: SemanticTag) -> Self {
        match t {
            SemanticTag::Building => SemanticClass::Building,
            SemanticTag::Terrain => SemanticClass::TerrainRoad,
            SemanticTag::Bridge => SemanticClass::Bridge,
            SemanticTag::Tree => SemanticClass::Tree,
            SemanticTag::Water => SemanticClass::Water,
            SemanticTag::Other => SemanticClass::Other,
        }
    }
}

/// Per-pixel CAD layers of one view, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterLayers {
    pub width: u32,
    pub height: u32,
    /// z-depth in meters; `+inf` for sky
    pub depth: Vec<f64>,
    /// unit camera-frame normals facing the camera; zero for sky
    pub normal: Vec<Vector3<f64>>,
    pub semantic: Vec<SemanticClass>,
    /// 0 for sky
    pub segment_id: Vec<u32>,
    /// depth-winning polygon, [`NO_POLYGON`] for sky
    pub polygon: Vec<u32>,
}

impl RasterLayers {
    pub fn sky(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        Self {
            width,
            height,
            depth: vec![f64::INFINITY; n],
            normal: vec![Vector3::zeros(); n],
            semantic: vec![SemanticClass::Sky; n],
            segment_id: vec![0; n],
            polygon: vec![NO_POLYGON; n],
        }
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    /// Pixels with a 4-neighbor of different segment id.
    pub fn segment_boundaries(&self) -> Vec<bool> {
        boundary_mask(&self.segment_id, self.width, self.height)
    }
}

/// Pixels whose label differs from a 4-neighbor.
pub fn boundary_mask<T: PartialEq>(labels: &[T], width: u32, height: u32) -> Vec<bool> {
    let (w, h) = (width as usize, height as usize);
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let differs = |j: usize| labels[j] != labels[i];
            out[i] = (x > 0 && differs(i - 1))
                || (x + 1 < w && differs(i + 1))
                || (y > 0 && differs(i - w))
                || (y + 1 < h && differs(i + w));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub intrinsics: PerspectiveIntrinsics,
    pub pose: CameraPose,
    pub near: f64,
}

impl RenderConfig {
    pub fn new(intrinsics: PerspectiveIntrinsics, pose: CameraPose) -> Self {
        Self {
            intrinsics,
            pose,
            near: DEFAULT_NEAR,
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        self.intrinsics.validate()?;
        if !(self.near > 0.0 && self.near.is_finite()) {
            return Err(RenderError::InvalidInput(format!("near plane {} must be > 0", self.near)));
        }
        Ok(())
    }

    /// Rotation taking world offsets from the camera into the camera frame.
    pub fn world_to_camera(&self) -> Matrix3<f64> {
        world_to_camera(&self.pose, &self.intrinsics)
    }
}

pub fn world_to_camera(pose: &CameraPose, intr: &PerspectiveIntrinsics) -> Matrix3<f64> {
    intr.cam_to_pano().transpose() * pose.rotation().transpose()
}

#[derive(Debug, Clone)]
struct SceneTri {
    v: [Vector3<f64>; 3],
    polygon: u32,
}

/// Mesh prepared for repeated rendering: triangles, polygon normals, classes
/// and segment ids.
#[derive(Debug, Clone)]
pub struct CadScene {
    tris: Vec<SceneTri>,
    /// world normal and a point on the plane; `None` for degenerate polygons
    planes: Vec<Option<(Vector3<f64>, Vector3<f64>)>>,
    classes: Vec<SemanticClass>,
    segments: Vec<u32>,
}

impl CadScene {
    /// `segments[i]` is the (positive) segment id of polygon `i`.
    pub fn new(mesh: &CityMesh, segments: &[u32]) -> Result<Self, RenderError> {
        mesh.validate()?;
        if segments.len() != mesh.polygons.len() {
            return Err(RenderError::InvalidInput(format!(
                "{} segment ids for {} polygons",
                segments.len(),
                mesh.polygons.len()
            )));
        }
        if segments.contains(&0) {
            return Err(RenderError::InvalidInput("segment id 0 is reserved for sky".into()));
        }
        let mut tris = Vec::new();
        let mut planes = Vec::with_capacity(mesh.polygons.len());
        for (i, poly) in mesh.polygons.iter().enumerate() {
            let n = newell(mesh.polygon_points(i));
            let len = n.norm();
            if !(len > 1e-12) {
                planes.push(None);
                continue;
            }
            planes.push(Some((n / len, mesh.vertices[poly[0] as usize])));
            for [a, b, c] in mesh.triangulate_polygon(i) {
                tris.push(SceneTri {
                    v: [a, b, c].map(|k| mesh.vertices[k as usize]),
                    polygon: i as u32,
                });
            }
        }
        Ok(Self {
            tris,
            planes,
            classes: mesh.tags.iter().map(|&t| t.into()).collect(),
            segments: segments.to_vec(),
        })
    }

    pub fn polygon_count(&self) -> usize {
        self.planes.len()
    }

    /// Camera-frame normal of polygon `i`, flipped to face the camera.
    pub fn camera_normal(&self, i: usize, cfg: &RenderConfig) -> Option<Vector3<f64>> {
        let (n, p) = self.planes[i]?;
        let c = cfg.world_to_camera();
        let n = if n.dot(&(p - cfg.pose.location)) > 0.0 { -n } else { n };
        Some(c * n)
    }

    pub fn render(&self, cfg: &RenderConfig) -> Result<RasterLayers, RenderError> {
        cfg.validate()?;
        let intr = &cfg.intrinsics;
        let (w, h) = (intr.width as usize, intr.height as usize);
        let c = cfg.world_to_camera();
        let loc = cfg.pose.location;
        let f = intr.focal();
        let pp = intr.principal_point();

        let screen: Vec<ScreenTri> = self
            .tris
            .iter()
            .flat_map(|t| {
                let cam = t.v.map(|v| c * (v - loc));
                clip_near(cam, cfg.near)
                    .into_iter()
                    .filter_map(|tri| ScreenTri::new(&tri, f, &pp, t.polygon))
                    .collect::<Vec<_>>()
            })
            .collect();

        let mut depth = vec![f64::INFINITY; w * h];
        let mut polygon = vec![NO_POLYGON; w * h];
        const BAND: usize = 16;
        depth
            .par_chunks_mut(BAND * w)
            .zip(polygon.par_chunks_mut(BAND * w))
            .enumerate()
            .for_each(|(band, (dchunk, pchunk))| {
                let y0 = band * BAND;
                let y1 = y0 + dchunk.len() / w;
                for tri in &screen {
                    tri.raster(w, y0, y1, dchunk, pchunk);
                }
            });

        let normals: Vec<Option<Vector3<f64>>> =
            (0..self.planes.len()).map(|i| self.camera_normal(i, cfg)).collect();
        let mut layers = RasterLayers::sky(intr.width, intr.height);
        for (k, &p) in polygon.iter().enumerate() {
            if p == NO_POLYGON {
                continue;
            }
            let pi = p as usize;
            layers.depth[k] = depth[k];
            layers.normal[k] = normals[pi].unwrap_or_else(Vector3::zeros);
            layers.semantic[k] = self.classes[pi];
            layers.segment_id[k] = self.segments[pi];
            layers.polygon[k] = p;
        }
        Ok(layers)
    }
}

/// Z-buffer render of `mesh` with per-polygon `segments`.
pub fn render_cad_view(mesh: &CityMesh, segments: &[u32], cfg: &RenderConfig) -> Result<RasterLayers, RenderError> {
    CadScene::new(mesh, segments)?.render(cfg)
}

/// Clips a camera-space triangle to `z >= near`; returns 0..2 triangles.
fn clip_near(v: [Vector3<f64>; 3], near: f64) -> Vec<[Vector3<f64>; 3]> {
    let inside = v.map(|p| p.z >= near);
    if inside.iter().all(|&b| b) {
        return vec![v];
    }
    if !inside.iter().any(|&b| b) {
        return vec![];
    }
    let mut poly = Vec::with_capacity(4);
    for i in 0..3 {
        let (a, b) = (v[i], v[(i + 1) % 3]);
        let (ia, ib) = (inside[i], inside[(i + 1) % 3]);
        if ia {
            poly.push(a);
        }
        if ia != ib {
            let t = (near - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = near;
            poly.push(p);
        }
    }
    (1..poly.len() - 1).map(|k| [poly[0], poly[k], poly[k + 1]]).collect()
}

#[derive(Debug, Clone)]
struct ScreenTri {
    s: [Vector2<f64>; 3],
    inv_z: [f64; 3],
    area: f64,
    xmin: usize,
    xmax: usize,
    ymin: usize,
    ymax: usize,
    polygon: u32,
}

impl ScreenTri {
    fn new(cam: &[Vector3<f64>; 3], f: f64, pp: &Vector2<f64>, polygon: u32) -> Option<Self> {
        let s = cam.map(|p| Vector2::new(pp.x + f * p.x / p.z, pp.y + f * p.y / p.z));
        let area = edge(&s[0], &s[1], &s[2]);
        if !(area.abs() > 1e-14) || !area.is_finite() {
            return None;
        }
        let lo = s[0].inf(&s[1]).inf(&s[2]);
        let hi = s[0].sup(&s[1]).sup(&s[2]);
        // pixel i is covered when its center i + 0.5 is inside
        let first = |v: f64| (v - 0.5).ceil().max(0.0);
        let last = |v: f64| (v - 0.5).floor();
        if last(hi.x) < 0.0 || last(hi.y) < 0.0 {
            return None;
        }
        Some(Self {
            s,
            inv_z: cam.map(|p| 1.0 / p.z),
            area,
            xmin: first(lo.x).min(u32::MAX as f64) as usize,
            xmax: last(hi.x) as usize,
            ymin: first(lo.y).min(u32::MAX as f64) as usize,
            ymax: last(hi.y) as usize,
            polygon,
        })
    }

    /// Rasterizes rows `[y0, y1)` into band-local buffers.
    fn raster(&self, w: usize, y0: usize, y1: usize, depth: &mut [f64], poly: &mut [u32]) {
        let ya = self.ymin.max(y0);
        let yb = self.ymax.min(y1.saturating_sub(1));
        if ya > yb || self.xmin >= w {
            return;
        }
        let xb = self.xmax.min(w - 1);
        let inv_area = 1.0 / self.area;
        for y in ya..=yb {
            let py = y as f64 + 0.5;
            for x in self.xmin..=xb {
                let p = Vector2::new(x as f64 + 0.5, py);
                let l0 = edge(&self.s[1], &self.s[2], &p) * inv_area;
                let l1 = edge(&self.s[2], &self.s[0], &p) * inv_area;
                let l2 = edge(&self.s[0], &self.s[1], &p) * inv_area;
                if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                    continue;
                }
                let iz = l0 * self.inv_z[0] + l1 * self.inv_z[1] + l2 * self.inv_z[2];
                if !(iz > 0.0) {
                    continue;
                }
                let z = 1.0 / iz;
                let k = (y - y0) * w + x;
                if z < depth[k] {
                    depth[k] = z;
                    poly[k] = self.polygon;
                } else if z == depth[k] && self.polygon < poly[k] {
                    poly[k] = self.polygon;
                }
            }
        }
    }
}

fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Bilinear resampling of an equirectangular panorama into a perspective view.
pub fn resample_pano_to_perspective(pano: &RgbImage, intr: &PerspectiveIntrinsics) -> Result<RgbImage, RenderError> {
    intr.validate()?;
    let grid = EquirectGrid::new(pano.width(), pano.height())
        .map_err(|e| RenderError::Format(format!("panorama: {e}")))?;
    let rot = intr.cam_to_pano();
    let (w, h) = (intr.width, intr.height);
    let mut out = vec![0u8; (w * h * 3) as usize];
    out.par_chunks_mut(w as usize * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w as usize {
            let d = rot * intr.unproject(x as f64 + 0.5, y as f64 + 0.5);
            let d = UnitDir3::new_normalize(d).expect("finite ray");
            let px = sample_bilinear(pano, grid, &d);
            row[3 * x..3 * x + 3].copy_from_slice(&px);
        }
    });
    Ok(RgbImage::from_raw(w, h, out).expect("buffer size"))
}

fn sample_bilinear(pano: &RgbImage, grid: EquirectGrid, d: &UnitDir3) -> [u8; 3] {
    let (pw, ph) = (grid.width() as i64, grid.height() as i64);
    let (u, v) = ray_to_equirect_pixel(grid, d);
    let (x, y) = (u - 0.5, v - 0.5);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let fetch = |xi: i64, yi: i64| {
        let xi = xi.rem_euclid(pw) as u32;
        let yi = yi.clamp(0, ph - 1) as u32;
        pano.get_pixel(xi, yi).0
    };
    let (a, b, c, e) = (fetch(x0, y0), fetch(x0 + 1, y0), fetch(x0, y0 + 1), fetch(x0 + 1, y0 + 1));
    std::array::from_fn(|k| {
        let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
        let bot = c[k] as f64 * (1.0 - fx) + e[k] as f64 * fx;
        (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8
    })
}

/// One rendered view: intrinsics, resampled RGB and CAD layers.
#[derive(Debug, Clone)]
pub struct ViewProducts {
    pub intrinsics: PerspectiveIntrinsics,
    pub rgb: RgbImage,
    pub layers: RasterLayers,
}

/// The eight standard views of one viewpoint.
pub fn render_viewpoint_products(
    scene: &CadScene,
    pano: &RgbImage,
    pose: &CameraPose,
    seed: u64,
) -> Result<Vec<ViewProducts>, RenderError> {
    render_viewpoint_products_sized(scene, pano, pose, seed, VIEW_SIZE)
}

/// [`render_viewpoint_products`] at a custom square resolution.
pub fn render_viewpoint_products_sized(
    scene: &CadScene,
    pano: &RgbImage,
    pose: &CameraPose,
    seed: u64,
    size: u32,
) -> Result<Vec<ViewProducts>, RenderError> {
    EquirectGrid::new(pano.width(), pano.height()).map_err(|e| RenderError::Format(format!("panorama: {e}")))?;
    make_view_set_sized(seed, size)
        .into_par_iter()
        .map(|intr| {
            let layers = scene.render(&RenderConfig::new(intr, *pose))?;
            let rgb = resample_pano_to_perspective(pano, &intr)?;
            Ok(ViewProducts {
                intrinsics: intr,
                rgb,
                layers,
            })
        })
        .collect()
}

/// File-name suffixes of the per-view products.
pub const PRODUCT_SUFFIXES: [&str; 5] = ["imag.png", "dpth.pfm", "nrml.pfm", "semt.png", "segm.png"];

pub fn product_path(dir: &Path, pano_id: &str, k: usize, suffix: &str) -> PathBuf {
    dir.join(format!("{pano_id}_{k}_{suffix}"))
}

/// Writes `<pano_id>_<k>_*` files for every view; returns the paths written.
pub fn write_viewpoint_products(dir: &Path, pano_id: &str, views: &[ViewProducts]) -> Result<Vec<PathBuf>, RenderError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (k, view) in views.iter().enumerate() {
        let l = &view.layers;
        let paths = PRODUCT_SUFFIXES.map(|s| product_path(dir, pano_id, k, s));
        view.rgb.save(&paths[0])?;
        let depth: Vec<f32> = l.depth.iter().map(|&d| if d.is_finite() { d as f32 } else { 0.0 }).collect();
        write_pfm(&paths[1], l.width, l.height, 1, &depth)?;
        let normal: Vec<f32> = l
            .normal
            .iter()
            .zip(&l.polygon)
            .flat_map(|(n, &p)| {
                if p == NO_POLYGON {
                    [0.0; 3]
                } else {
                    [n.x, n.y, n.z].map(|c| ((c + 1.0) / 2.0) as f32)
                }
            })
            .collect();
        write_pfm(&paths[2], l.width, l.height, 3, &normal)?;
        semantic_image(l).save(&paths[3])?;
        segment_image(l)?.save(&paths[4])?;
        written.extend(paths);
    }
    Ok(written)
}

pub fn semantic_image(l: &RasterLayers) -> RgbImage {
    ImageBuffer::from_fn(l.width, l.height, |x, y| Rgb(l.semantic[l.index(x, y)].color()))
}

pub fn segment_image(l: &RasterLayers) -> Result<ImageBuffer<Luma<u16>, Vec<u16>>, RenderError> {
    if let Some(&id) = l.segment_id.iter().find(|&&id| id > u16::MAX as u32) {
        return Err(RenderError::TooManySegments(id));
    }
    Ok(ImageBuffer::from_fn(l.width, l.height, |x, y| Luma([l.segment_id[l.index(x, y)] as u16])))
}

/// Little-endian PFM; `data` is row-major top row first.
pub fn write_pfm(path: impl AsRef<Path>, width: u32, height: u32, channels: usize, data: &[f32]) -> Result<(), RenderError> {
    let row = width as usize * channels;
    if !matches!(channels, 1 | 3) || data.len() != row * height as usize {
        return Err(RenderError::InvalidInput("pfm buffer size mismatch".into()));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let tag = if channels == 3 { "PF" } else { "Pf" };
    write!(f, "{tag}\n{width} {height}\n-1.0\n")?;
    for r in data.chunks_exact(row).rev() {
        for v in r {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Float image read from PFM: `(width, height, channels, top-row-first data)`.
pub type PfmImage = (u32, u32, usize, Vec<f32>);

pub fn read_pfm(path: impl AsRef<Path>) -> Result<PfmImage, RenderError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<std::fs::File>| -> Result<String, RenderError> {
        line.clear();
        r.read_line(&mut line)?;
        Ok(line.trim().to_string())
    };
    let channels = match next_line(&mut r)?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(RenderError::Format(format!("bad PFM magic {other:?}"))),
    };
    let dims = next_line(&mut r)?;
    let mut it = dims.split_whitespace().map(str::parse::<u32>);
    let (Some(Ok(w)), Some(Ok(h))) = (it.next(), it.next()) else {
        return Err(RenderError::Format(format!("bad PFM size line {dims:?}")));
    };
    let scale: f64 = next_line(&mut r)?
        .parse()
        .map_err(|_| RenderError::Format("bad PFM scale".into()))?;
    let row = w as usize * channels;
    let mut bytes = vec![0u8; row * h as usize * 4];
    r.read_exact(&mut bytes)?;
    let vals: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            if scale < 0.0 {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let data = vals.chunks_exact(row).rev().flatten().copied().collect();
    Ok((w, h, channels, data))
}

/// Paints `color` onto `rgb` wherever the segment layer has a boundary.
pub fn draw_overlay(rgb: &mut RgbImage, layers: &RasterLayers, color: [u8; 3]) -> Result<(), RenderError> {
    if rgb.dimensions() != (layers.width, layers.height) {
        return Err(RenderError::InvalidInput("overlay size mismatch".into()));
    }
    for (k, b) in layers.segment_boundaries().into_iter().enumerate() {
        if b {
            let (x, y) = (k as u32 % layers.width, k as u32 / layers.width);
            rgb.put_pixel(x, y, Rgb(color));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures::{square, unit_cube};
    use crate::raycast::RayCaster;

    fn front_view(size: u32) -> PerspectiveIntrinsics {
        PerspectiveIntrinsics::new(90.0, size, size, 0.0, 0.0).unwrap()
    }

    fn box_ahead(dist: f64) -> CityMesh {
        let mut m = unit_cube();
        m.vertices.iter_mut().for_each(|v| *v += Vector3::new(-0.5, dist, -0.5));
        m
    }

    #[test]
    fn world_to_camera_axes() {
        let pose = CameraPose::level(Vector3::zeros(), 0.0);
        let c = world_to_camera(&pose, &front_view(64));
        assert!((c * Vector3::y() - Vector3::z()).norm() < 1e-12);
        assert!((c * Vector3::x() - Vector3::x()).norm() < 1e-12);
        assert!((c * Vector3::z() + Vector3::y()).norm() < 1e-12);
    }

    #[test]
    fn empty_mesh_is_all_sky() {
        let cfg = RenderConfig::new(front_view(32), CameraPose::level(Vector3::zeros(), 0.0));
        let l = render_cad_view(&CityMesh::default(), &[], &cfg).unwrap();
        assert_eq!(l, RasterLayers::sky(32, 32));
    }

    #[test]
    fn box_depth_matches_ray_casting() {
        let mesh = box_ahead(4.0);
        let cfg = RenderConfig::new(front_view(128), CameraPose::level(Vector3::zeros(), 0.0));
        let l = render_cad_view(&mesh, &[1, 2, 3, 4, 5, 6], &cfg).unwrap();
        let rc = RayCaster::new(&mesh);
        let to_world = cfg.world_to_camera().transpose();
        let mut covered = 0;
        for y in 0..128 {
            for x in 0..128 {
                let k = l.index(x, y);
                let d_cam = cfg.intrinsics.unproject(x as f64 + 0.5, y as f64 + 0.5);
                let hit = rc.cast(&Vector3::zeros(), &(to_world * d_cam), 0.0, f64::INFINITY);
                match hit {
                    Some(h) => {
                        // d_cam has unit z, so t is the z-depth
                        covered += 1;
                        assert!((l.depth[k] - h.t).abs() < 1e-4 || l.segment_boundaries()[k]);
                    }
                    None => assert!(l.depth[k].is_infinite() || l.segment_boundaries()[k]),
                }
            }
        }
        assert!(covered > 100);
        // front face (-y, index 2) is the only one visible head-on
        let centre = l.index(64, 64);
        assert_eq!(l.polygon[centre], 2);
        assert!((l.depth[centre] - 4.0).abs() < 1e-9);
        assert!((l.normal[centre] - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn near_facade_wins() {
        let mut far = square(-0.5, -0.5, 0.0, SemanticTag::Building);
        far.vertices.iter_mut().for_each(|v| *v = Vector3::new(v.x * 100.0, 9.0, v.y * 100.0));
        let mut near = far.clone();
        near.vertices.iter_mut().for_each(|v| v.y = 5.0);
        let mut mesh = far;
        mesh.append(&near);
        let cfg = RenderConfig::new(front_view(64), CameraPose::level(Vector3::zeros(), 0.0));
        let l = render_cad_view(&mesh, &[1, 2], &cfg).unwrap();
        assert!(l.polygon.iter().all(|&p| p == 1));
        assert!(l.depth.iter().all(|&d| (d - 5.0).abs() < 1e-9));
    }

    #[test]
    fn near_plane_clipping_keeps_ground() {
        let mut ground = square(-0.5, -0.5, 0.0, SemanticTag::Terrain);
        ground.vertices.iter_mut().for_each(|v| {
            v.x *= 100.0;
            v.y *= 100.0;
        });
        let intr = PerspectiveIntrinsics::new(90.0, 64, 64, 0.0, -30f64.to_radians()).unwrap();
        let cfg = RenderConfig::new(intr, CameraPose::level(Vector3::new(0.0, 0.0, 2.0), 0.0));
        let l = render_cad_view(&ground, &[1], &cfg).unwrap();
        let rc = RayCaster::new(&ground);
        let to_world = cfg.world_to_camera().transpose();
        for y in 0..64 {
            for x in 0..64 {
                let d = intr.unproject(x as f64 + 0.5, y as f64 + 0.5);
                let hit = rc.cast(&cfg.pose.location, &(to_world * d), 0.0, f64::INFINITY);
                let k = l.index(x, y);
                match hit {
                    Some(h) => assert!((l.depth[k] - h.t).abs() < 1e-6, "{x} {y}"),
                    None => assert!(l.depth[k].is_infinite()),
                }
            }
        }
        assert_eq!(l.semantic[l.index(32, 63)], SemanticClass::TerrainRoad);
        assert_eq!(l.semantic[l.index(32, 0)], SemanticClass::Sky);
    }

    #[test]
    fn single_white_pixel_lands_at_center() {
        // forward is u = w/2; the white pixel centre sits half a pixel right of it
        let mut pano = RgbImage::new(2048, 1024);
        pano.put_pixel(1024, 512, Rgb([255, 255, 255]));
        let out = resample_pano_to_perspective(&pano, &front_view(512)).unwrap();
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for (x, y, p) in out.enumerate_pixels() {
            let wgt = p.0[0] as f64;
            sx += wgt * (x as f64 + 0.5);
            sy += wgt * (y as f64 + 0.5);
            sw += wgt;
        }
        assert!(sw > 0.0);
        let (cx, cy) = (sx / sw, sy / sw);
        // oracle: project the white pixel centre ray
        let grid = EquirectGrid::new(2048, 1024).unwrap();
        let d = crate::geometry::equirect_pixel_to_ray(grid, 1024.5, 512.5).unwrap();
        let intr = front_view(512);
        let (u, v, ok) = crate::geometry::perspective_project(&intr, &(intr.cam_to_pano().transpose() * d.as_vector()));
        assert!(ok);
        assert!((cx - u).abs() <= 1.0 && (cy - v).abs() <= 1.0, "{cx} {cy} vs {u} {v}");
        assert!((cx - 256.0).abs() <= 1.0 && (cy - 256.0).abs() <= 1.0);
        let again = resample_pano_to_perspective(&pano, &front_view(512)).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn constant_panorama_gives_constant_view() {
        let pano = RgbImage::from_pixel(64, 32, Rgb([10, 200, 30]));
        let intr = PerspectiveIntrinsics::new(70.0, 40, 30, 1.0, 0.4).unwrap();
        let out = resample_pano_to_perspective(&pano, &intr).unwrap();
        assert!(out.pixels().all(|p| p.0 == [10, 200, 30]));
        assert!(resample_pano_to_perspective(&RgbImage::new(30, 30), &intr).is_err());
    }

    #[test]
    fn pfm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pfm");
        let data: Vec<f32> = (0..6 * 4 * 3).map(|k| k as f32 * 0.25).collect();
        write_pfm(&p, 6, 4, 3, &data).unwrap();
        assert_eq!(read_pfm(&p).unwrap(), (6, 4, 3, data));
    }

    #[test]
    fn segment_png_limit() {
        let mut l = RasterLayers::sky(2, 1);
        l.segment_id[0] = 70000;
        assert!(matches!(segment_image(&l), Err(RenderError::TooManySegments(70000))));
    }

    #[test]
    fn eight_views_written() {
        let mesh = box_ahead(6.0);
        let scene = CadScene::new(&mesh, &[1, 2, 3, 4, 5, 6]).unwrap();
        let pano = RgbImage::from_pixel(64, 32, Rgb([1, 2, 3]));
        let pose = CameraPose::level(Vector3::zeros(), 0.0);
        let views = render_viewpoint_products_sized(&scene, &pano, &pose, 7, 32).unwrap();
        assert_eq!(views.len(), 8);
        for (k, v) in views.iter().enumerate() {
            assert!((v.intrinsics.yaw.to_degrees() - 45.0 * k as f64).abs() < 1e-9);
        }
        let dir = tempfile::tempdir().unwrap();
        let files = write_viewpoint_products(dir.path(), "p0", &views).unwrap();
        assert_eq!(files.len(), 40);
        let (w, h, c, d) = read_pfm(product_path(dir.path(), "p0", 0, "dpth.pfm")).unwrap();
        assert_eq!((w, h, c), (32, 32, 1));
        let l = &views[0].layers;
        for (a, b) in d.iter().zip(&l.depth) {
            assert_eq!(*a, if b.is_finite() { *b as f32 } else { 0.0 });
        }
        let seg = image::open(product_path(dir.path(), "p0", 0, "segm.png")).unwrap().into_luma16();
        for (k, p) in seg.pixels().enumerate() {
            assert_eq!(p.0[0] as u32, l.segment_id[k]);
        }
        let (_, _, _, n) = read_pfm(product_path(dir.path(), "p0", 0, "nrml.pfm")).unwrap();
        for (k, nv) in l.normal.iter().enumerate() {
            if l.polygon[k] != NO_POLYGON {
                for c in 0..3 {
                    assert!((n[3 * k + c] as f64 * 2.0 - 1.0 - nv[c]).abs() < 1e-6);
                }
            }
        }
    }
}
