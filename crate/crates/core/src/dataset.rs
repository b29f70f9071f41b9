//! Dataset bookkeeping: viewpoint records, splits, product manifests,
//! annotation statistics and the scale-invariant log depth error.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraPose, VIEWS_PER_PANORAMA};
use crate::render::{product_path, PRODUCT_SUFFIXES};
use crate::stats::percentile_nearest_rank;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid split spec: {0}")]
    InvalidSpec(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const DEFAULT_SPATIAL_CELL_M: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewpointRecord {
    pub pano_id: String,
    pub pose: CameraPose,
    pub capture_date: NaiveDate,
    #[serde(default)]
    pub indoor: bool,
    #[serde(default)]
    pub n_annotations: u32,
    #[serde(default = "yes")]
    pub quality_ok: bool,
}

fn yes() -> bool {
    true
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<ViewpointRecord>, DatasetError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn save_records(records: &[ViewpointRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    std::fs::write(path, serde_json::to_string_pretty(records)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Random,
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub seed: u64,
    /// train, valid, test
    pub fractions: [f64; 3],
    pub spatial_cell: f64,
}

impl SplitSpec {
    pub fn random(seed: u64, fractions: [f64; 3]) -> Self {
        Self {
            kind: SplitKind::Random,
            seed,
            fractions,
            spatial_cell: DEFAULT_SPATIAL_CELL_M,
        }
    }

    pub fn spatial(seed: u64, fractions: [f64; 3], spatial_cell: f64) -> Self {
        Self {
            kind: SplitKind::Spatial,
            seed,
            fractions,
            spatial_cell,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.fractions.iter().any(|&f| !(f > 0.0)) {
            return Err(DatasetError::InvalidSpec("fractions must be positive".into()));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidSpec(format!("fractions sum to {sum}")));
        }
        if self.kind == SplitKind::Spatial && !(self.spatial_cell > 0.0 && self.spatial_cell.is_finite()) {
            return Err(DatasetError::InvalidSpec("spatial_cell must be > 0".into()));
        }
        Ok(())
    }
}

/// Split sizes: floor of each share, remainder handed out to train, valid,
/// test in turn.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let mut sizes = fractions.map(|f| ((f * n as f64) + 1e-9).floor() as usize);
    let mut k = 0;
    while sizes.iter().sum::<usize>() < n {
        sizes[k % 3] += 1;
        k += 1;
    }
    sizes
}

fn assign(order: &[usize], sizes: [usize; 3]) -> Vec<(usize, Split)> {
    let mut out = Vec::with_capacity(order.len());
    let mut it = order.iter();
    for (split, size) in Split::ALL.into_iter().zip(sizes) {
        out.extend(it.by_ref().take(size).map(|&i| (i, split)));
    }
    out
}

/// Seeded shuffle of the outdoor records, partitioned by the fractions.
/// Indoor records stay unlabeled.
pub fn split_random(records: &[ViewpointRecord], spec: &SplitSpec) -> Result<Vec<Option<Split>>, DatasetError> {
    spec.validate()?;
    if records.is_empty() {
        return Err(DatasetError::Domain("no records to split".into()));
    }
    let mut eligible: Vec<usize> = (0..records.len()).filter(|&i| !records[i].indoor).collect();
    eligible.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut labels = vec![None; records.len()];
    for (i, s) in assign(&eligible, split_sizes(eligible.len(), spec.fractions)) {
        labels[i] = Some(s);
    }
    Ok(labels)
}

/// Grid cell of a plan position.
pub fn spatial_cell(x: f64, y: f64, cell: f64) -> (i64, i64) {
    ((x / cell).floor() as i64, (y / cell).floor() as i64)
}

/// Cells of side `spatial_cell`, shuffled and partitioned by the fractions;
/// every record takes its cell's split.
pub fn split_spatial(records: &[ViewpointRecord], spec: &SplitSpec) -> Result<Vec<Option<Split>>, DatasetError> {
    spec.validate()?;
    if records.is_empty() {
        return Err(DatasetError::Domain("no records to split".into()));
    }
    let cell_of = |r: &ViewpointRecord| spatial_cell(r.pose.location.x, r.pose.location.y, spec.spatial_cell);
    let cells: BTreeSet<(i64, i64)> = records.iter().filter(|r| !r.indoor).map(cell_of).collect();
    let mut cells: Vec<(i64, i64)> = cells.into_iter().collect();
    cells.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let order: Vec<usize> = (0..cells.len()).collect();
    let cell_split: BTreeMap<(i64, i64), Split> = assign(&order, split_sizes(cells.len(), spec.fractions))
        .into_iter()
        .map(|(i, s)| (cells[i], s))
        .collect();
    Ok(records
        .iter()
        .map(|r| (!r.indoor).then(|| cell_split[&cell_of(r)]))
        .collect())
}

pub fn split(records: &[ViewpointRecord], spec: &SplitSpec) -> Result<Vec<Option<Split>>, DatasetError> {
    match spec.kind {
        SplitKind::Random => split_random(records, spec),
        SplitKind::Spatial => split_spatial(records, spec),
    }
}

/// View identifier used in quality lists: `<pano_id>_<k>`.
pub fn view_id(pano_id: &str, k: usize) -> String {
    format!("{pano_id}_{k}")
}

/// Newline-delimited view ids; blank lines ignored.
pub fn load_quality_list(path: impl AsRef<Path>) -> Result<HashSet<String>, DatasetError> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub view_id: String,
    pub pano_id: String,
    pub view: usize,
    pub split: Option<Split>,
    pub quality_ok: bool,
    /// product suffix -> path
    pub files: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub missing: Vec<PathBuf>,
    pub quality_pass_ratio: f64,
}

impl Manifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Lists the per-view products of every outdoor record. Views with a missing
/// file are left out and the absent paths reported under `missing`. When a
/// quality list is given it decides `quality_ok`, otherwise the record flag.
pub fn build_manifest(
    records: &[ViewpointRecord],
    labels: &[Option<Split>],
    products_dir: &Path,
    quality: Option<&HashSet<String>>,
) -> Result<Manifest, DatasetError> {
    if labels.len() != records.len() {
        return Err(DatasetError::Domain(format!(
            "{} labels for {} records",
            labels.len(),
            records.len()
        )));
    }
    let views: Vec<(usize, usize)> = (0..records.len())
        .filter(|&i| !records[i].indoor)
        .flat_map(|i| (0..VIEWS_PER_PANORAMA).map(move |k| (i, k)))
        .collect();
    let checked: Vec<(usize, usize, Vec<(String, PathBuf, bool)>)> = views
        .par_iter()
        .map(|&(i, k)| {
            let files = PRODUCT_SUFFIXES
                .iter()
                .map(|s| {
                    let p = product_path(products_dir, &records[i].pano_id, k, s);
                    let present = p.is_file();
                    (s.to_string(), p, present)
                })
                .collect();
            (i, k, files)
        })
        .collect();
    let mut entries = Vec::new();
    let mut missing = Vec::new();
    for (i, k, files) in checked {
        let r = &records[i];
        if files.iter().all(|f| f.2) {
            let id = view_id(&r.pano_id, k);
            let quality_ok = quality.map_or(r.quality_ok, |q| q.contains(&id));
            entries.push(ManifestEntry {
                view_id: id,
                pano_id: r.pano_id.clone(),
                view: k,
                split: labels[i],
                quality_ok,
                files: files.into_iter().map(|(s, p, _)| (s, p)).collect(),
            });
        } else {
            missing.extend(files.into_iter().filter(|f| !f.2).map(|f| f.1));
        }
    }
    let passed = entries.iter().filter(|e| e.quality_ok).count();
    let quality_pass_ratio = if entries.is_empty() {
        0.0
    } else {
        passed as f64 / entries.len() as f64
    };
    Ok(Manifest {
        entries,
        missing,
        quality_pass_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationStats {
    /// annotation count -> number of panoramas
    pub histogram: BTreeMap<u32, usize>,
    pub min: Option<u32>,
    pub median: Option<u32>,
    pub max: Option<u32>,
}

pub fn annotation_count_stats(records: &[ViewpointRecord]) -> AnnotationStats {
    let mut histogram = BTreeMap::new();
    for r in records {
        *histogram.entry(r.n_annotations).or_insert(0) += 1;
    }
    let mut counts: Vec<u32> = records.iter().map(|r| r.n_annotations).collect();
    counts.sort_unstable();
    let as_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    AnnotationStats {
        histogram,
        min: counts.first().copied(),
        median: percentile_nearest_rank(&as_f, 50.0).map(|m| m as u32),
        max: counts.last().copied(),
    }
}

/// Scale-invariant log error: variance of `ln pred - ln gt` over pixels that
/// are unmasked and positive in both maps.
pub fn compute_sil(pred: &[f64], gt: &[f64], mask: Option<&[bool]>) -> Result<f64, DatasetError> {
    if pred.len() != gt.len() || mask.is_some_and(|m| m.len() != pred.len()) {
        return Err(DatasetError::Domain("depth maps differ in size".into()));
    }
    let valid = |i: usize| {
        mask.is_none_or(|m| m[i]) && pred[i] > 0.0 && gt[i] > 0.0 && pred[i].is_finite() && gt[i].is_finite()
    };
    let d: Vec<f64> = (0..pred.len()).filter(|&i| valid(i)).map(|i| pred[i].ln() - gt[i].ln()).collect();
    if d.is_empty() {
        return Err(DatasetError::Domain("no valid depth pixels".into()));
    }
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    Ok(d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}
