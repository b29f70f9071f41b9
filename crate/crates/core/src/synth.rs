//! Synthetic fixtures: box buildings on a terrain grid with known segment
//! labels, street-level viewpoints, and flat-colored panoramas ray cast from
//! the mesh itself.

use image::{Rgb, RgbImage};
use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{equirect_pixel_to_ray, CameraPose, EquirectGrid, GeometryError};
use crate::mesh::{CityMesh, SemanticTag};
use crate::raycast::RayCaster;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub const SKY_COLOR: [u8; 3] = [135, 206, 235];
pub const SYNTH_CAMERA_HEIGHT: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_buildings: usize,
    /// ground area in square meters (a square centred on the origin)
    pub area: f64,
    pub min_height: f64,
    pub max_height: f64,
    /// terrain grid spacing, meters
    pub terrain_cell: f64,
    /// probability that a building is rotated off the grid axes
    pub rotated_fraction: f64,
}

impl SceneSpec {
    pub fn new(seed: u64, n_buildings: usize) -> Self {
        Self {
            seed,
            n_buildings,
            area: 200.0 * 200.0,
            min_height: 6.0,
            max_height: 30.0,
            terrain_cell: 5.0,
            rotated_fraction: 0.0,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let ok = self.area > 0.0
            && self.area.is_finite()
            && self.terrain_cell > 0.0
            && self.min_height > 0.0
            && self.max_height >= self.min_height
            && (0.0..=1.0).contains(&self.rotated_fraction);
        if !ok {
            return Err(SynthError::InvalidSpec(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Building footprint: centre, half extents along its own axes, rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub center: Vector2<f64>,
    pub half: Vector2<f64>,
    pub angle: f64,
    pub height: f64,
}

impl Footprint {
    pub fn corners(&self) -> [Vector2<f64>; 4] {
        let (s, c) = self.angle.sin_cos();
        let ax = Vector2::new(c, s) * self.half.x;
        let ay = Vector2::new(-s, c) * self.half.y;
        [
            self.center - ax - ay,
            self.center + ax - ay,
            self.center + ax + ay,
            self.center - ax + ay,
        ]
    }

    /// Distance from `p` to the footprint (0 inside).
    pub fn distance(&self, p: &Vector2<f64>) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let d = p - self.center;
        let local = Vector2::new(c * d.x + s * d.y, -s * d.x + c * d.y);
        let out = (local.abs() - self.half).map(|v| v.max(0.0));
        out.norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCity {
    pub mesh: CityMesh,
    /// ground-truth segment id per polygon, numbered from 1 by first polygon
    pub segment_labels: Vec<u32>,
    pub footprints: Vec<Footprint>,
    /// half side of the square ground
    pub half_extent: f64,
}

/// Deterministic box city. Axis-aligned footprints are snapped to the
/// terrain grid so a box's bottom face shares vertices with (and merges
/// into) the terrain; a rotated box's bottom stays its own surface.
pub fn generate_city(spec: &SceneSpec) -> Result<SyntheticCity, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = spec.terrain_cell;
    let cells = ((spec.area.sqrt() / s).round() as usize).max(2);
    let half_cells = cells / 2;
    let cells = 2 * half_cells;
    let half_extent = half_cells as f64 * s;

    // plots of PLOT x PLOT terrain cells, the outer ring kept as street
    const PLOT: usize = 4;
    let plots_per_side = cells / PLOT;
    let mut plots: Vec<(usize, usize)> = (0..plots_per_side)
        .flat_map(|i| (0..plots_per_side).map(move |j| (i, j)))
        .collect();
    if spec.n_buildings > plots.len() {
        return Err(SynthError::InvalidSpec(format!(
            "{} buildings do not fit {} plots",
            spec.n_buildings,
            plots.len()
        )));
    }
    plots.shuffle(&mut rng);
    plots.truncate(spec.n_buildings);
    plots.sort_unstable();

    let mut mesh = CityMesh::default();
    let mut labels = Vec::new();
    let vid = |i: usize, j: usize| (j * (cells + 1) + i) as u32;
    for j in 0..=cells {
        for i in 0..=cells {
            mesh.vertices.push(Vector3::new(i as f64 * s - half_extent, j as f64 * s - half_extent, 0.0));
        }
    }
    for j in 0..cells {
        for i in 0..cells {
            mesh.polygons.push(vec![vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]);
            mesh.tags.push(SemanticTag::Terrain);
            labels.push(1);
        }
    }

    let mut footprints = Vec::new();
    let mut next_label = 2;
    for (pi, pj) in plots {
        let height = rng.random_range(spec.min_height..=spec.max_height);
        let rotated = spec.rotated_fraction > 0.0 && rng.random_bool(spec.rotated_fraction);
        // footprint inside the plot with a street margin of one cell
        let w = rng.random_range(1..=PLOT - 2);
        let d = rng.random_range(1..=PLOT - 2);
        let i0 = pi * PLOT + 1 + rng.random_range(0..=(PLOT - 2 - w));
        let j0 = pj * PLOT + 1 + rng.random_range(0..=(PLOT - 2 - d));
        let (ring, bottom_own_label, fp) = if rotated {
            let center = Vector2::new(
                (i0 as f64 + w as f64 / 2.0) * s - half_extent,
                (j0 as f64 + d as f64 / 2.0) * s - half_extent,
            );
            let fp = Footprint {
                center,
                half: Vector2::new(w as f64 * s / 2.0, d as f64 * s / 2.0) * 0.7,
                angle: rng.random_range(0.2..1.3),
                height,
            };
            let base = mesh.vertices.len() as u32;
            for c in fp.corners() {
                mesh.vertices.push(Vector3::new(c.x, c.y, 0.0));
            }
            ((0..4).map(|k| base + k).collect::<Vec<_>>(), true, fp)
        } else {
            let ring = vec![vid(i0, j0), vid(i0 + w, j0), vid(i0 + w, j0 + d), vid(i0, j0 + d)];
            let lo = mesh.vertices[ring[0] as usize];
            let hi = mesh.vertices[ring[2] as usize];
            let fp = Footprint {
                center: Vector2::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0),
                half: Vector2::new((hi.x - lo.x) / 2.0, (hi.y - lo.y) / 2.0),
                angle: 0.0,
                height,
            };
            (ring, false, fp)
        };
        let top0 = mesh.vertices.len() as u32;
        for &r in &ring {
            let p = mesh.vertices[r as usize];
            mesh.vertices.push(Vector3::new(p.x, p.y, height));
        }
        let top: Vec<u32> = (0..4).map(|k| top0 + k).collect();
        // ring is counter-clockwise from above
        mesh.polygons.push(ring.iter().rev().copied().collect());
        mesh.tags.push(SemanticTag::Building);
        if bottom_own_label {
            labels.push(next_label);
            next_label += 1;
        } else {
            labels.push(1);
        }
        for k in 0..4 {
            let n = (k + 1) % 4;
            mesh.polygons.push(vec![ring[k], ring[n], top[n], top[k]]);
            mesh.tags.push(SemanticTag::Building);
            labels.push(next_label);
            next_label += 1;
        }
        mesh.polygons.push(top);
        mesh.tags.push(SemanticTag::Building);
        labels.push(next_label);
        next_label += 1;
        footprints.push(fp);
    }
    mesh.validate().expect("generated mesh is valid");
    Ok(SyntheticCity {
        mesh,
        segment_labels: relabel_by_first_occurrence(&labels),
        footprints,
        half_extent,
    })
}

/// Renumbers labels 1, 2, ... in order of first appearance.
pub fn relabel_by_first_occurrence(labels: &[u32]) -> Vec<u32> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len() as u32 + 1;
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Seeded street viewpoints at camera height, at least `clearance` meters
/// from every building and inside the ground square.
pub fn street_viewpoints(city: &SyntheticCity, n: usize, clearance: f64, seed: u64) -> Vec<CameraPose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lim = city.half_extent - clearance;
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < 100_000 {
        attempts += 1;
        let p = Vector2::new(rng.random_range(-lim..lim), rng.random_range(-lim..lim));
        if city.footprints.iter().all(|f| f.distance(&p) >= clearance) {
            let az = rng.random_range(0.0..std::f64::consts::TAU);
            out.push(CameraPose::level(Vector3::new(p.x, p.y, SYNTH_CAMERA_HEIGHT), az));
        }
    }
    out
}

/// Flat color of a segment id (0 is sky).
pub fn segment_color(id: u32) -> [u8; 3] {
    if id == 0 {
        return SKY_COLOR;
    }
    let mut z = (id as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let c = |k: u32| 30 + ((z >> (8 * k)) & 0xff) as u8 % 200;
    let rgb = [c(0), c(1), c(2)];
    if rgb == SKY_COLOR {
        [rgb[0], rgb[1], rgb[2] ^ 1]
    } else {
        rgb
    }
}

/// Equirectangular panorama with per-pixel segment ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPanorama {
    pub image: RgbImage,
    /// row-major, 0 for sky
    pub segment_ids: Vec<u32>,
}

/// Ray caster plus labels, reusable across panoramas.
#[derive(Debug, Clone)]
pub struct PanoramaSynth {
    caster: RayCaster,
    labels: Vec<u32>,
}

impl PanoramaSynth {
    pub fn new(mesh: &CityMesh, labels: &[u32]) -> Self {
        assert_eq!(labels.len(), mesh.polygons.len(), "one label per polygon");
        Self {
            caster: RayCaster::new(mesh),
            labels: labels.to_vec(),
        }
    }

    pub fn caster(&self) -> &RayCaster {
        &self.caster
    }

    /// Casts one ray per pixel centre of a `2h x h` panorama.
    pub fn render(&self, pose: &CameraPose, height: u32) -> Result<SynthPanorama, SynthError> {
        let grid = EquirectGrid::new(2 * height, height)?;
        let w = 2 * height as usize;
        let rot = pose.rotation();
        let ids: Vec<u32> = (0..height as usize)
            .into_par_iter()
            .flat_map_iter(|y| {
                let rot = &rot;
                (0..w).map(move |x| {
                    let d = equirect_pixel_to_ray(grid, x as f64 + 0.5, y as f64 + 0.5).expect("pixel centre in range");
                    self.caster
                        .cast(&pose.location, &(rot * d.as_vector()), 0.0, f64::INFINITY)
                        .map_or(0, |h| self.labels[h.polygon as usize])
                })
            })
            .collect();
        let image = RgbImage::from_fn(2 * height, height, |x, y| Rgb(segment_color(ids[y as usize * w + x as usize])));
        Ok(SynthPanorama { image, segment_ids: ids })
    }
}

pub fn synth_panorama(mesh: &CityMesh, labels: &[u32], pose: &CameraPose, height: u32) -> Result<SynthPanorama, SynthError> {
    PanoramaSynth::new(mesh, labels).render(pose, height)
}
