//! Semantically tagged city mesh: OBJ loading, polygon normals, vertex
//! proximity adjacency and terrain elevation queries.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::UnitDir3;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("polygon {polygon}: {message}")]
    InvalidPolygon { polygon: usize, message: String },
    #[error("polygon {0} is degenerate (zero area)")]
    DegeneratePolygon(usize),
    #[error("polygon index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("no terrain under ({x}, {y})")]
    NotCovered { x: f64, y: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Maximum distance of a polygon vertex from its best-fit plane.
pub const PLANARITY_TOL: f64 = 1e-3;

/// Default vertex-proximity distance for polygon adjacency, meters.
pub const DEFAULT_MERGE_DISTANCE: f64 = 0.05;

/// Semantic surface types carried by the CAD model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SemanticTag {
    Building,
    Terrain,
    Bridge,
    Tree,
    Water,
    Other,
}

impl SemanticTag {
    pub const ALL: [SemanticTag; 6] = [
        SemanticTag::Building,
        SemanticTag::Terrain,
        SemanticTag::Bridge,
        SemanticTag::Tree,
        SemanticTag::Water,
        SemanticTag::Other,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SemanticTag::Building => "BUILDING",
            SemanticTag::Terrain => "TERRAIN",
            SemanticTag::Bridge => "BRIDGE",
            SemanticTag::Tree => "TREE",
            SemanticTag::Water => "WATER",
            SemanticTag::Other => "OTHER",
        }
    }

    /// Tag encoded in an OBJ group name: the prefix before the first `_`.
    pub fn from_group_name(group: &str) -> Option<SemanticTag> {
        let prefix = group.split('_').next().unwrap_or("");
        prefix.parse().ok()
    }
}

impl FromStr for SemanticTag {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        SemanticTag::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

impl fmt::Display for SemanticTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Polygon soup with one semantic tag per polygon.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CityMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub polygons: Vec<Vec<u32>>,
    pub tags: Vec<SemanticTag>,
}

/// Result of [`load_mesh`].
#[derive(Debug, Clone)]
pub struct ObjLoad {
    pub mesh: CityMesh,
    /// Group statements whose tag prefix was not recognized.
    pub unknown_tag_warnings: usize,
    /// Non-planar input faces that were fan-triangulated.
    pub triangulated_faces: usize,
}

impl CityMesh {
    /// Builds a mesh and checks index ranges and vertex counts.
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        polygons: Vec<Vec<u32>>,
        tags: Vec<SemanticTag>,
    ) -> Result<Self, MeshError> {
        let mesh = Self {
            vertices,
            polygons,
            tags,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        if self.tags.len() != self.polygons.len() {
            return Err(MeshError::InvalidParameter(format!(
                "{} tags for {} polygons",
                self.tags.len(),
                self.polygons.len()
            )));
        }
        for (i, poly) in self.polygons.iter().enumerate() {
            if poly.len() < 3 {
                return Err(MeshError::InvalidPolygon {
                    polygon: i,
                    message: "fewer than 3 vertices".into(),
                });
            }
            if let Some(&bad) = poly.iter().find(|&&v| v as usize >= self.vertices.len()) {
                return Err(MeshError::InvalidPolygon {
                    polygon: i,
                    message: format!("vertex index {bad} out of range"),
                });
            }
            let mut sorted = poly.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() < 3 {
                return Err(MeshError::InvalidPolygon {
                    polygon: i,
                    message: "fewer than 3 distinct vertices".into(),
                });
            }
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::InvalidParameter(format!("vertex {i} is not finite")));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    pub fn len(&self) -> usize {
        self.polygons.len()
    }

    pub fn polygon_points(&self, i: usize) -> impl Iterator<Item = &Vector3<f64>> + '_ {
        self.polygons[i].iter().map(move |&v| &self.vertices[v as usize])
    }

    /// Appends another mesh, offsetting its vertex indices.
    pub fn append(&mut self, other: &CityMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.polygons
            .extend(other.polygons.iter().map(|p| p.iter().map(|&v| v + base).collect()));
        self.tags.extend_from_slice(&other.tags);
    }

    /// Unit normal by Newell's method, oriented by winding order.
    pub fn polygon_normal(&self, i: usize) -> Result<UnitDir3, MeshError> {
        if i >= self.polygons.len() {
            return Err(MeshError::IndexOutOfRange(i));
        }
        let n = newell(self.polygon_points(i));
        UnitDir3::new_normalize(n)
            .ok()
            .filter(|_| n.norm() > 1e-12 * self.polygon_extent(i).max(1.0).powi(2))
            .ok_or(MeshError::DegeneratePolygon(i))
    }

    /// Polygon area in square meters.
    pub fn polygon_area(&self, i: usize) -> f64 {
        0.5 * newell(self.polygon_points(i)).norm()
    }

    fn polygon_extent(&self, i: usize) -> f64 {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in self.polygon_points(i) {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (hi - lo).norm()
    }

    /// Triangulates polygon `i`; triangle corners index into `self.vertices`.
    pub fn triangulate_polygon(&self, i: usize) -> Vec<[u32; 3]> {
        let poly = &self.polygons[i];
        let pts: Vec<Vector3<f64>> = poly.iter().map(|&v| self.vertices[v as usize]).collect();
        triangulate_ring(&pts)
            .into_iter()
            .map(|[a, b, c]| [poly[a], poly[b], poly[c]])
            .collect()
    }

    /// Axis-aligned sub-mesh: polygons with at least one vertex inside the
    /// box. Returns the extracted mesh and the original polygon indices.
    pub fn extract_box(&self, min: &Vector3<f64>, max: &Vector3<f64>) -> (CityMesh, Vec<u32>) {
        let inside = |p: &Vector3<f64>| (0..3).all(|k| p[k] >= min[k] && p[k] <= max[k]);
        let mut remap: HashMap<u32, u32> = HashMap::new();
        let mut out = CityMesh::default();
        let mut ids = Vec::new();
        for (i, poly) in self.polygons.iter().enumerate() {
            if !poly.iter().any(|&v| inside(&self.vertices[v as usize])) {
                continue;
            }
            let ring = poly
                .iter()
                .map(|&v| {
                    *remap.entry(v).or_insert_with(|| {
                        out.vertices.push(self.vertices[v as usize]);
                        (out.vertices.len() - 1) as u32
                    })
                })
                .collect();
            out.polygons.push(ring);
            out.tags.push(self.tags[i]);
            ids.push(i as u32);
        }
        (out, ids)
    }
}

pub(crate) fn newell<'a>(pts: impl Iterator<Item = &'a Vector3<f64>>) -> Vector3<f64> {
    let pts: Vec<&Vector3<f64>> = pts.collect();
    let mut n = Vector3::zeros();
    for (k, a) in pts.iter().enumerate() {
        let b = pts[(k + 1) % pts.len()];
        n.x += (a.y - b.y) * (a.z + b.z);
        n.y += (a.z - b.z) * (a.x + b.x);
        n.z += (a.x - b.x) * (a.y + b.y);
    }
    n
}

/// Largest distance of any point from the least-squares plane.
pub(crate) fn planarity_error(pts: &[Vector3<f64>]) -> f64 {
    let c = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let n = eig.eigenvectors.column(k).into_owned();
    pts.iter().map(|p| (p - c).dot(&n).abs()).fold(0.0, f64::max)
}

/// Ear-clipping triangulation of a planar ring; falls back to a fan when the
/// ring is self-intersecting. Returns local corner indices.
pub(crate) fn triangulate_ring(pts: &[Vector3<f64>]) -> Vec<[usize; 3]> {
    let n = pts.len();
    if n < 3 {
        return Vec::new();
    }
    if n == 3 {
        return vec![[0, 1, 2]];
    }
    let normal = newell(pts.iter());
    if normal.norm() == 0.0 {
        return fan(n);
    }
    // project onto the plane dropping the dominant normal axis
    let axis = normal.iamax();
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    };
    let sign = normal[axis].signum();
    let p2: Vec<Vector2<f64>> = pts.iter().map(|p| Vector2::new(p[a], p[b] * sign)).collect();
    if is_convex(&p2) {
        return fan(n);
    }
    ear_clip(&p2).unwrap_or_else(|| fan(n))
}

fn fan(n: usize) -> Vec<[usize; 3]> {
    (1..n - 1).map(|k| [0, k, k + 1]).collect()
}

fn cross2(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn is_convex(p: &[Vector2<f64>]) -> bool {
    let n = p.len();
    (0..n).all(|k| cross2(&p[k], &p[(k + 1) % n], &p[(k + 2) % n]) >= 0.0)
}

fn ear_clip(p: &[Vector2<f64>]) -> Option<Vec<[usize; 3]>> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    let mut tris = Vec::with_capacity(p.len() - 2);
    let mut guard = 0;
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for k in 0..m {
            let (i0, i1, i2) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let area = cross2(&p[i0], &p[i1], &p[i2]);
            if area <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                j != i0
                    && j != i1
                    && j != i2
                    && cross2(&p[i0], &p[i1], &p[j]) >= 0.0
                    && cross2(&p[i1], &p[i2], &p[j]) >= 0.0
                    && cross2(&p[i2], &p[i0], &p[j]) >= 0.0
            });
            if !blocked {
                tris.push([i0, i1, i2]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            // drop a collinear vertex if any, otherwise give up
            let m = idx.len();
            let flat = (0..m).find(|&k| {
                cross2(&p[idx[(k + m - 1) % m]], &p[idx[k]], &p[idx[(k + 1) % m]]).abs() < 1e-15
            })?;
            idx.remove(flat);
        }
        guard += 1;
        if guard > 4 * p.len() {
            return None;
        }
    }
    tris.push([idx[0], idx[1], idx[2]]);
    Some(tris)
}

/// Loads a mesh from the OBJ subset (`v`, `f`, `g`).
pub fn load_mesh(path: impl AsRef<Path>) -> Result<ObjLoad, MeshError> {
    let file = std::fs::File::open(path)?;
    parse_obj(BufReader::new(file))
}

pub fn parse_obj(reader: impl BufRead) -> Result<ObjLoad, MeshError> {
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut polygons = Vec::new();
    let mut tags = Vec::new();
    let mut current = SemanticTag::Other;
    let mut warnings = 0usize;
    let mut triangulated = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let err = |message: String| MeshError::Format {
            line: lineno,
            message,
        };
        let line = line.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let coords: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| err(format!("bad coordinate {t:?}: {e}"))))
                    .collect::<Result<_, _>>()?;
                if coords.len() != 3 || !coords.iter().all(|c| c.is_finite()) {
                    return Err(err("vertex needs three finite coordinates".into()));
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut ring: Vec<u32> = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let raw: i64 = first
                        .parse()
                        .map_err(|_| err(format!("bad face index {tok:?}")))?;
                    let idx = if raw > 0 {
                        raw - 1
                    } else if raw < 0 {
                        vertices.len() as i64 + raw
                    } else {
                        return Err(err("face index 0 is invalid".into()));
                    };
                    if idx < 0 || idx as usize >= vertices.len() {
                        return Err(err(format!("face index {raw} out of range")));
                    }
                    let idx = idx as u32;
                    if ring.last() != Some(&idx) {
                        ring.push(idx);
                    }
                }
                if ring.len() > 1 && ring.first() == ring.last() {
                    ring.pop();
                }
                let mut distinct = ring.clone();
                distinct.sort_unstable();
                distinct.dedup();
                if distinct.len() < 3 {
                    return Err(err("face needs at least 3 distinct vertices".into()));
                }
                let pts: Vec<Vector3<f64>> = ring.iter().map(|&v| vertices[v as usize]).collect();
                if ring.len() > 3 && planarity_error(&pts) > PLANARITY_TOL {
                    triangulated += 1;
                    for k in 1..ring.len() - 1 {
                        polygons.push(vec![ring[0], ring[k], ring[k + 1]]);
                        tags.push(current);
                    }
                } else {
                    polygons.push(ring);
                    tags.push(current);
                }
            }
            Some("g") | Some("o") => {
                let name = it.next().unwrap_or("");
                current = match SemanticTag::from_group_name(name) {
                    Some(t) => t,
                    None => {
                        warnings += 1;
                        SemanticTag::Other
                    }
                };
            }
            _ => {}
        }
    }
    let mesh = CityMesh::new(vertices, polygons, tags)?;
    if warnings > 0 {
        log::warn!("{warnings} group(s) with unknown semantic tag mapped to OTHER");
    }
    Ok(ObjLoad {
        mesh,
        unknown_tag_warnings: warnings,
        triangulated_faces: triangulated,
    })
}

/// Writes the mesh as OBJ; consecutive polygons sharing a tag form a group.
pub fn write_obj(mesh: &CityMesh, mut w: impl Write) -> std::io::Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    let mut last: Option<SemanticTag> = None;
    let mut group = 0usize;
    for (poly, tag) in mesh.polygons.iter().zip(&mesh.tags) {
        if last != Some(*tag) {
            writeln!(w, "g {}_{:04}", tag.name(), group)?;
            group += 1;
            last = Some(*tag);
        }
        write!(w, "f")?;
        for v in poly {
            write!(w, " {}", v + 1)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_mesh(mesh: &CityMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_obj(mesh, &mut f)?;
    f.flush()?;
    Ok(())
}

/// Symmetric polygon neighbor lists from vertex proximity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonAdjacency {
    pub neighbors: Vec<Vec<u32>>,
    pub merge_distance: f64,
}

impl PolygonAdjacency {
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Polygons `i != j` are neighbors iff some vertex of `i` and some vertex of
/// `j` are closer than `merge_distance`. A uniform hash with cell size
/// `merge_distance` only limits which vertex pairs are compared.
pub fn build_adjacency(mesh: &CityMesh, merge_distance: f64) -> Result<PolygonAdjacency, MeshError> {
    if !(merge_distance > 0.0 && merge_distance.is_finite()) {
        return Err(MeshError::InvalidParameter(format!(
            "merge distance must be positive, got {merge_distance}"
        )));
    }
    let mut incident: Vec<Vec<u32>> = vec![Vec::new(); mesh.vertices.len()];
    for (pi, poly) in mesh.polygons.iter().enumerate() {
        for &v in poly {
            let list = &mut incident[v as usize];
            if list.last() != Some(&(pi as u32)) {
                list.push(pi as u32);
            }
        }
    }
    let cell_of = |p: &Vector3<f64>| -> [i64; 3] {
        [
            (p.x / merge_distance).floor() as i64,
            (p.y / merge_distance).floor() as i64,
            (p.z / merge_distance).floor() as i64,
        ]
    };
    let mut grid: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
    for (vi, polys) in incident.iter().enumerate() {
        if !polys.is_empty() {
            grid.entry(cell_of(&mesh.vertices[vi])).or_default().push(vi as u32);
        }
    }

    let d2 = merge_distance * merge_distance;
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut push_pairs = |a: &[u32], b: &[u32]| {
        for &x in a {
            for &y in b {
                if x != y {
                    edges.push((x.min(y), x.max(y)));
                }
            }
        }
    };
    for (vi, polys) in incident.iter().enumerate() {
        if polys.is_empty() {
            continue;
        }
        let p = &mesh.vertices[vi];
        // polygons sharing this vertex
        push_pairs(polys, polys);
        let c = cell_of(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let key = [c[0].saturating_add(dx), c[1].saturating_add(dy), c[2].saturating_add(dz)];
                    let Some(cands) = grid.get(&key) else { continue };
                    for &qi in cands {
                        if (qi as usize) <= vi {
                            continue;
                        }
                        if (mesh.vertices[qi as usize] - p).norm_squared() < d2 {
                            push_pairs(polys, &incident[qi as usize]);
                        }
                    }
                }
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let mut neighbors = vec![Vec::new(); mesh.polygons.len()];
    for (a, b) in edges {
        neighbors[a as usize].push(b);
        neighbors[b as usize].push(a);
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    Ok(PolygonAdjacency {
        neighbors,
        merge_distance,
    })
}

#[derive(Debug, Clone)]
struct TerrainTri {
    a: Vector3<f64>,
    b: Vector3<f64>,
    c: Vector3<f64>,
    lo: Vector2<f64>,
    hi: Vector2<f64>,
}

/// Vertical-ray queries against TERRAIN polygons.
#[derive(Debug, Clone)]
pub struct TerrainIndex {
    tris: Vec<TerrainTri>,
    origin: Vector2<f64>,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl TerrainIndex {
    pub fn new(mesh: &CityMesh) -> Self {
        let mut tris = Vec::new();
        for (i, tag) in mesh.tags.iter().enumerate() {
            if *tag != SemanticTag::Terrain {
                continue;
            }
            for [a, b, c] in mesh.triangulate_polygon(i) {
                let (a, b, c) = (
                    mesh.vertices[a as usize],
                    mesh.vertices[b as usize],
                    mesh.vertices[c as usize],
                );
                let area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
                if area.abs() < 1e-14 {
                    continue; // vertical in plan view
                }
                let lo = Vector2::new(a.x.min(b.x).min(c.x), a.y.min(b.y).min(c.y));
                let hi = Vector2::new(a.x.max(b.x).max(c.x), a.y.max(b.y).max(c.y));
                tris.push(TerrainTri { a, b, c, lo, hi });
            }
        }
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        for t in &tris {
            lo = lo.inf(&t.lo);
            hi = hi.sup(&t.hi);
        }
        let side = ((tris.len() as f64).sqrt().ceil() as usize).clamp(1, 256);
        let extent = if tris.is_empty() { 1.0 } else { (hi - lo).max().max(1e-9) };
        let cell = extent / side as f64;
        let (nx, ny) = if tris.is_empty() {
            (1, 1)
        } else {
            (
                ((hi.x - lo.x) / cell).floor() as usize + 1,
                ((hi.y - lo.y) / cell).floor() as usize + 1,
            )
        };
        let origin = if tris.is_empty() { Vector2::zeros() } else { lo };
        let mut index = Self {
            tris,
            origin,
            cell,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for (k, t) in index.tris.iter().enumerate() {
            let (i0, j0) = index.bucket_of(&t.lo);
            let (i1, j1) = index.bucket_of(&t.hi);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    index.buckets[j * index.nx + i].push(k as u32);
                }
            }
        }
        index
    }

    fn bucket_of(&self, p: &Vector2<f64>) -> (usize, usize) {
        let i = ((p.x - self.origin.x) / self.cell).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((p.y - self.origin.y) / self.cell).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }

    /// Height of the highest terrain surface above or below `(x, y)`.
    pub fn elevation_at(&self, x: f64, y: f64) -> Result<f64, MeshError> {
        let q = Vector2::new(x, y);
        let (i, j) = self.bucket_of(&q);
        let mut best: Option<f64> = None;
        for &k in self.buckets.get(j * self.nx + i).into_iter().flatten() {
            let t = &self.tris[k as usize];
            if x < t.lo.x || x > t.hi.x || y < t.lo.y || y > t.hi.y {
                continue;
            }
            if let Some(z) = vertical_hit(t, x, y) {
                best = Some(best.map_or(z, |b: f64| b.max(z)));
            }
        }
        best.ok_or(MeshError::NotCovered { x, y })
    }
}

fn vertical_hit(t: &TerrainTri, x: f64, y: f64) -> Option<f64> {
    let d = (t.b.x - t.a.x) * (t.c.y - t.a.y) - (t.b.y - t.a.y) * (t.c.x - t.a.x);
    let l1 = ((x - t.a.x) * (t.c.y - t.a.y) - (y - t.a.y) * (t.c.x - t.a.x)) / d;
    let l2 = ((t.b.x - t.a.x) * (y - t.a.y) - (t.b.y - t.a.y) * (x - t.a.x)) / d;
    let l0 = 1.0 - l1 - l2;
    let eps = -1e-12;
    (l0 >= eps && l1 >= eps && l2 >= eps).then(|| l0 * t.a.z + l1 * t.b.z + l2 * t.c.z)
}

/// Ground elevation under `(x, y)`; builds a throwaway index.
pub fn terrain_elevation_at(mesh: &CityMesh, x: f64, y: f64) -> Result<f64, MeshError> {
    TerrainIndex::new(mesh).elevation_at(x, y)
}
