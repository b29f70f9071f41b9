//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cityframe_core::geometry::UnitDir3;
use cityframe_core::mesh::{CityMesh, SemanticTag};

/// First intersection `(t, polygon)` of a ray with the fan triangles of every
/// polygon, by exhaustive Möller-Trumbore.
pub fn brute_cast(m: &CityMesh, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (pi, poly) in m.polygons.iter().enumerate() {
        for k in 1..poly.len().saturating_sub(1) {
            let a = m.vertices[poly[0] as usize];
            let b = m.vertices[poly[k] as usize];
            let c = m.vertices[poly[k + 1] as usize];
            let (e1, e2) = (b - a, c - a);
            let p = d.cross(&e2);
            let det = e1.dot(&p);
            if det.abs() < 1e-14 {
                continue;
            }
            let inv = 1.0 / det;
            let s = o - a;
            let u = s.dot(&p) * inv;
            if !(-1e-12..=1.0 + 1e-12).contains(&u) {
                continue;
            }
            let q = s.cross(&e1);
            let v = d.dot(&q) * inv;
            if v < -1e-12 || u + v > 1.0 + 1e-12 {
                continue;
            }
            let t = e2.dot(&q) * inv;
            if t > 1e-9 && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, pi));
            }
        }
    }
    best
}

pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut i = i;
        while self.parent[i] != r {
            let next = self.parent[i];
            self.parent[i] = r;
            i = next;
        }
        r
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Unit normal by summing triangle-fan cross products.
pub fn fan_normal(m: &CityMesh, i: usize) -> Option<Vector3<f64>> {
    let p = &m.polygons[i];
    let a = m.vertices[p[0] as usize];
    let mut n = Vector3::zeros();
    for k in 1..p.len() - 1 {
        n += (m.vertices[p[k] as usize] - a).cross(&(m.vertices[p[k + 1] as usize] - a));
    }
    let l = n.norm();
    (l > 1e-12).then(|| n / l)
}

/// Polygon pairs with a shared vertex index or two vertices closer than `merge`.
pub fn brute_adjacent(m: &CityMesh, i: usize, j: usize, merge: f64) -> bool {
    m.polygons[i].iter().any(|&a| {
        m.polygons[j]
            .iter()
            .any(|&b| a == b || (m.vertices[a as usize] - m.vertices[b as usize]).norm() < merge)
    })
}

/// Component representative of every polygon under the dihedral test.
pub fn union_find_segments(m: &CityMesh, merge: f64, max_deg: f64) -> Vec<usize> {
    let n = m.polygons.len();
    let normals: Vec<Option<Vector3<f64>>> = (0..n).map(|i| fan_normal(m, i)).collect();
    let thr = max_deg.to_radians();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let (Some(a), Some(b)) = (normals[i], normals[j]) else { continue };
            if a.dot(&b).abs().min(1.0).acos() < thr && brute_adjacent(m, i, j, merge) {
                uf.union(i, j);
            }
        }
    }
    (0..n).map(|i| uf.find(i)).collect()
}

/// Whether two labelings induce the same partition.
pub fn same_partition<A: Copy + Eq + std::hash::Hash, B: Copy + Eq + std::hash::Hash>(a: &[A], b: &[B]) -> bool {
    use std::collections::HashMap;
    if a.len() != b.len() {
        return false;
    }
    let mut ab: HashMap<A, B> = HashMap::new();
    let mut ba: HashMap<B, A> = HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x)
}

/// Reference DBSCAN: core points by counting, clusters as connected
/// components of cores numbered by smallest core index, borders to the
/// lowest-numbered cluster with a core neighbor.
pub fn dbscan_oracle(dirs: &[UnitDir3], eps_deg: f64, min_pts: usize) -> Vec<i32> {
    let n = dirs.len();
    let eps = eps_deg.to_radians();
    let near = |i: usize, j: usize| dirs[i].as_vector().dot(dirs[j].as_vector()).abs().min(1.0).acos() <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if core[i] && core[j] && near(i, j) {
                uf.union(i, j);
            }
        }
    }
    let mut number = std::collections::HashMap::new();
    let mut labels = vec![-1i32; n];
    for i in 0..n {
        if core[i] {
            let r = uf.find(i);
            let next = number.len() as i32;
            labels[i] = *number.entry(r).or_insert(next);
        }
    }
    for i in 0..n {
        if !core[i] {
            labels[i] = (0..n)
                .filter(|&j| core[j] && near(i, j))
                .map(|j| labels[j])
                .min()
                .unwrap_or(-1);
        }
    }
    labels
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
    let axis = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), rng.random_range(0.0..std::f64::consts::TAU))
}

fn push_box(m: &mut CityMesh, center: Vector3<f64>, half: Vector3<f64>, rot: Rotation3<f64>) {
    let base = m.vertices.len() as u32;
    for k in 0..8 {
        let s = Vector3::new(
            if k & 1 == 0 { -1.0 } else { 1.0 },
            if k & 2 == 0 { -1.0 } else { 1.0 },
            if k & 4 == 0 { -1.0 } else { 1.0 },
        );
        m.vertices.push(center + rot * s.component_mul(&half));
    }
    let faces = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    for f in faces {
        m.polygons.push(f.iter().map(|&i| base + i).collect());
        m.tags.push(SemanticTag::Building);
    }
}

/// Random mesh of at most `max_polygons` polygons: a bumpy triangulated
/// height field with flat patches, plus free-standing boxes, some of them
/// touching the ground within a few centimetres.
pub fn random_mesh(seed: u64, max_polygons: usize) -> CityMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = CityMesh::default();
    let budget = max_polygons.max(8);
    let n_boxes = rng.random_range(0..=(budget / 6).min(8));
    let tri_budget = budget - 6 * n_boxes;
    let nx = rng.random_range(1..=((tri_budget / 2) as f64).sqrt().floor().max(1.0) as usize);
    let ny = ((tri_budget / 2) / nx).clamp(1, 20);
    let amp = rng.random_range(0.0..3.0);
    let flat_prob = rng.random_range(0.0..1.0);
    let cell = 2.0;
    for j in 0..=ny {
        for i in 0..=nx {
            let z = if rng.random_bool(flat_prob) { 0.0 } else { amp * rng.random::<f64>() };
            m.vertices.push(Vector3::new(i as f64 * cell, j as f64 * cell, z));
        }
    }
    let idx = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            m.polygons.push(vec![a, b, c]);
            m.polygons.push(vec![a, c, d]);
            m.tags.extend([SemanticTag::Terrain, SemanticTag::Terrain]);
        }
    }
    for _ in 0..n_boxes {
        let half = Vector3::new(rng.random_range(0.5..3.0), rng.random_range(0.5..3.0), rng.random_range(0.5..3.0));
        let center = Vector3::new(
            rng.random_range(0.0..nx as f64 * cell),
            rng.random_range(0.0..ny as f64 * cell),
            half.z + rng.random_range(-0.02..0.5),
        );
        let rot = if rng.random_bool(0.5) {
            Rotation3::from_axis_angle(&Vector3::z_axis(), rng.random_range(0.0..1.6))
        } else {
            random_rotation(&mut rng)
        };
        push_box(&mut m, center, half, rot);
    }
    m.validate().expect("generated mesh is valid");
    m
}

/// Regular prism approximating a cylinder with `sides` faces plus caps.
pub fn prism(sides: usize, radius: f64, height: f64) -> CityMesh {
    let mut m = CityMesh::default();
    for k in 0..sides {
        let a = k as f64 / sides as f64 * std::f64::consts::TAU;
        m.vertices.push(Vector3::new(radius * a.cos(), radius * a.sin(), 0.0));
    }
    for k in 0..sides {
        let v = m.vertices[k];
        m.vertices.push(v + Vector3::new(0.0, 0.0, height));
    }
    let s = sides as u32;
    for k in 0..s {
        let n = (k + 1) % s;
        m.polygons.push(vec![k, n, s + n, s + k]);
        m.tags.push(SemanticTag::Building);
    }
    m.polygons.push((0..s).rev().collect());
    m.polygons.push((s..2 * s).collect());
    m.tags.extend([SemanticTag::Building, SemanticTag::Building]);
    m
}

pub fn cube() -> CityMesh {
    let mut m = CityMesh::default();
    push_box(&mut m, Vector3::new(0.5, 0.5, 0.5), Vector3::new(0.5, 0.5, 0.5), Rotation3::identity());
    m
}
