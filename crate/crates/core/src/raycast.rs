//! Bounding-volume hierarchy over the triangulated mesh for ray queries.

use nalgebra::Vector3;

use crate::mesh::CityMesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Ray parameter; equals distance for unit directions.
    pub t: f64,
    pub polygon: u32,
}

#[derive(Debug, Clone)]
struct Tri {
    a: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    polygon: u32,
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    /// leaf: first triangle; inner: right child (left child is next node)
    start: u32,
    count: u32,
}

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
pub struct RayCaster {
    tris: Vec<Tri>,
    nodes: Vec<Node>,
}

impl RayCaster {
    pub fn new(mesh: &CityMesh) -> Self {
        let mut tris = Vec::new();
        for i in 0..mesh.polygons.len() {
            for [a, b, c] in mesh.triangulate_polygon(i) {
                let (a, b, c) = (
                    mesh.vertices[a as usize],
                    mesh.vertices[b as usize],
                    mesh.vertices[c as usize],
                );
                if (b - a).cross(&(c - a)).norm_squared() == 0.0 {
                    continue;
                }
                tris.push(Tri {
                    a,
                    e1: b - a,
                    e2: c - a,
                    polygon: i as u32,
                });
            }
        }
        let mut caster = Self {
            tris,
            nodes: Vec::new(),
        };
        if !caster.tris.is_empty() {
            let n = caster.tris.len();
            caster.build(0, n);
        }
        caster
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    fn bounds(&self, start: usize, end: usize) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for t in &self.tris[start..end] {
            for p in [t.a, t.a + t.e1, t.a + t.e2] {
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
        }
        (lo, hi)
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let (lo, hi) = self.bounds(start, end);
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            start: start as u32,
            count: (end - start) as u32,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = (hi - lo).imax();
        let centroid = |t: &Tri| t.a[axis] + (t.e1[axis] + t.e2[axis]) / 3.0;
        let mid = (start + end) / 2;
        self.tris[start..end].select_nth_unstable_by(mid - start, |x, y| centroid(x).total_cmp(&centroid(y)));
        self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id].start = right as u32;
        self.nodes[id].count = 0;
        id
    }

    /// Closest intersection with `t` in `(t_min, t_max)`. Ties keep the lower
    /// polygon index.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t_min: f64, t_max: f64) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if !slab(&node.lo, &node.hi, origin, &inv, t_min, limit) {
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                for tri in &self.tris[s..s + node.count as usize] {
                    if let Some(t) = intersect(tri, origin, dir) {
                        if t > t_min && t <= limit {
                            let better = match best {
                                None => true,
                                Some(b) => t < b.t || (t == b.t && tri.polygon < b.polygon),
                            };
                            if better {
                                best = Some(Hit {
                                    t,
                                    polygon: tri.polygon,
                                });
                                limit = t;
                            }
                        }
                    }
                }
            } else {
                stack.push(node.start as usize);
                stack.push(ni + 1);
            }
        }
        best
    }
}

fn slab(lo: &Vector3<f64>, hi: &Vector3<f64>, o: &Vector3<f64>, inv: &Vector3<f64>, t0: f64, t1: f64) -> bool {
    let (mut tmin, mut tmax) = (t0, t1);
    for k in 0..3 {
        let a = (lo[k] - o[k]) * inv[k];
        let b = (hi[k] - o[k]) * inv[k];
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        // NaN from 0 * inf (ray in the slab plane) must not cull
        if a.is_nan() || b.is_nan() {
            if o[k] < lo[k] || o[k] > hi[k] {
                return false;
            }
            continue;
        }
        tmin = tmin.max(a);
        tmax = tmax.min(b);
        if tmin > tmax * (1.0 + 1e-12) + 1e-12 {
            return false;
        }
    }
    true
}

/// Moller-Trumbore with inclusive edges.
fn intersect(tri: &Tri, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let p = d.cross(&tri.e2);
    let det = tri.e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - tri.a;
    let u = s.dot(&p) * inv;
    let eps = 1e-12;
    if u < -eps || u > 1.0 + eps {
        return None;
    }
    let q = s.cross(&tri.e1);
    let v = d.dot(&q) * inv;
    if v < -eps || u + v > 1.0 + eps {
        return None;
    }
    Some(tri.e2.dot(&q) * inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures::unit_cube;

    #[test]
    fn hits_nearest_face() {
        let rc = RayCaster::new(&unit_cube());
        let hit = rc
            .cast(&Vector3::new(0.5, -5.0, 0.5), &Vector3::y(), 0.0, f64::INFINITY)
            .unwrap();
        assert!((hit.t - 5.0).abs() < 1e-12);
        assert_eq!(hit.polygon, 2);
        let inside = rc.cast(&Vector3::new(0.5, 0.5, 0.5), &Vector3::z(), 0.0, f64::INFINITY).unwrap();
        assert_eq!(inside.polygon, 1);
        assert!(rc.cast(&Vector3::new(3.0, 3.0, 3.0), &Vector3::x(), 0.0, f64::INFINITY).is_none());
    }

    #[test]
    fn agrees_with_linear_scan() {
        use rand::{Rng, SeedableRng};
        let mut mesh = CityMesh::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let mut c = unit_cube();
            let off = Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), 0.0);
            c.vertices.iter_mut().for_each(|v| *v += off);
            mesh.append(&c);
        }
        let rc = RayCaster::new(&mesh);
        for _ in 0..500 {
            let o = Vector3::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0), 0.5);
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let d = Vector3::new(a.cos(), a.sin(), rng.random_range(-0.05..0.05)).normalize();
            let fast = rc.cast(&o, &d, 1e-9, f64::INFINITY).map(|h| h.t);
            let slow = rc
                .tris
                .iter()
                .filter_map(|t| intersect(t, &o, &d))
                .filter(|&t| t > 1e-9)
                .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))));
            assert_eq!(fast, slow);
        }
    }
}
