//! End-to-end run on a synthetic city: panoramas, automatic correspondences,
//! pose refinement, eight-view products, segments, vanishing points and the
//! dataset manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_manifest, save_records, split_random, SplitSpec, ViewpointRecord};
use crate::geometry::{ray_to_equirect_pixel, rotation_angle_between, CameraPose, EquirectGrid, UnitDir3, VIEW_SIZE};
use crate::holistic::{extract_vps, polygon_segment_ids, segment_surfaces, visible_segments, SegmentParams, SegmentsFile, VpFile, DEFAULT_MAX_DIHEDRAL_DEG};
use crate::mesh::{build_adjacency, save_mesh, DEFAULT_MERGE_DISTANCE};
use crate::pose::{solve_pose, CorrespondenceFile, PixelPair, PoseFile};
use crate::raycast::RayCaster;
use crate::render::{render_viewpoint_products_sized, write_viewpoint_products, CadScene};
use crate::synth::{generate_city, street_viewpoints, PanoramaSynth, SceneSpec, SyntheticCity};
use crate::Error;

/// Tolerance for a point to count as visible behind its own surfaces.
pub const VISIBILITY_TOL_M: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub n_buildings: usize,
    pub area: f64,
    pub n_viewpoints: usize,
    /// panorama height; width is twice this
    pub pano_height: u32,
    pub view_size: u32,
    pub max_correspondences: usize,
    pub max_dihedral_deg: f64,
    /// initial pose offset magnitude, meters and degrees
    pub perturb_m: f64,
    pub perturb_deg: f64,
    pub vp_eps_deg: f64,
    pub vp_min_pts: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_buildings: 12,
            area: 120.0 * 120.0,
            n_viewpoints: 3,
            pano_height: 512,
            view_size: VIEW_SIZE,
            max_correspondences: 12,
            max_dihedral_deg: DEFAULT_MAX_DIHEDRAL_DEG,
            perturb_m: 3.0,
            perturb_deg: 5.0,
            vp_eps_deg: 5.0,
            vp_min_pts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewpointReport {
    pub pano_id: String,
    pub truth: CameraPose,
    pub init: CameraPose,
    pub solved: CameraPose,
    pub n_pairs: usize,
    pub median_residual_deg: f64,
    pub position_error_m: f64,
    pub rotation_error_deg: f64,
    pub view_yaws_deg: Vec<f64>,
    pub horizontal_vps_per_view: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub viewpoints: Vec<ViewpointReport>,
    pub n_polygons: usize,
    pub n_segments: usize,
    pub segments_match_ground_truth: bool,
    pub manifest_path: PathBuf,
    pub manifest_entries: usize,
    pub manifest_missing: usize,
    pub elapsed_s: f64,
}

/// Visible building corners as pixel/world pairs, nearest first.
pub fn auto_correspondences(
    city: &SyntheticCity,
    caster: &RayCaster,
    pose: &CameraPose,
    grid: EquirectGrid,
    max_pairs: usize,
) -> Vec<PixelPair> {
    let mut candidates: Vec<(f64, Vector3<f64>)> = city
        .footprints
        .iter()
        .flat_map(|f| {
            f.corners()
                .into_iter()
                .flat_map(move |c| [Vector3::new(c.x, c.y, 0.0), Vector3::new(c.x, c.y, f.height)])
        })
        .filter_map(|x| {
            let d = x - pose.location;
            let dist = d.norm();
            let hit = caster.cast(&pose.location, &(d / dist), 0.0, f64::INFINITY);
            hit.is_some_and(|h| h.t >= dist - VISIBILITY_TOL_M).then_some((dist, x))
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    candidates
        .into_iter()
        .take(max_pairs)
        .filter_map(|(_, x)| {
            let ray = pose.world_to_pano(&x).ok()?;
            let (u, v) = ray_to_equirect_pixel(grid, &ray);
            Some(PixelPair { u, v, world: x.into() })
        })
        .collect()
}

fn perturb(pose: &CameraPose, rng: &mut impl Rng, meters: f64, degrees: f64) -> Result<CameraPose, Error> {
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let loc = pose.location + Vector3::new(a.cos(), a.sin(), 0.0) * meters;
    let az = pose.azimuth + degrees.to_radians() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let tilt = UnitDir3::new_normalize(Vector3::new(0.01, -0.01, 1.0))?;
    Ok(CameraPose::new(loc, az, tilt)?)
}

pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<PipelineReport, Error> {
    let start = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let products = out_dir.join("products");
    let city = generate_city(&SceneSpec {
        area: cfg.area,
        ..SceneSpec::new(cfg.seed, cfg.n_buildings)
    })?;
    save_mesh(&city.mesh, out_dir.join("city.obj"))?;

    let adj = build_adjacency(&city.mesh, DEFAULT_MERGE_DISTANCE)?;
    let segments = segment_surfaces(&city.mesh, &adj, cfg.max_dihedral_deg)?;
    let seg_ids = polygon_segment_ids(&segments, city.mesh.polygons.len());
    SegmentsFile::new(
        &segments,
        SegmentParams {
            max_dihedral_deg: cfg.max_dihedral_deg,
            merge_distance: DEFAULT_MERGE_DISTANCE,
        },
    )
    .save(out_dir.join("segments.json"))?;

    let synth = PanoramaSynth::new(&city.mesh, &city.segment_labels);
    let scene = CadScene::new(&city.mesh, &seg_ids)?;
    let grid = EquirectGrid::new(2 * cfg.pano_height, cfg.pano_height)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);

    let mut reports = Vec::new();
    let mut records = Vec::new();
    let candidates = street_viewpoints(&city, 20 * cfg.n_viewpoints.max(1), 3.0, cfg.seed);
    for truth in candidates {
        if reports.len() == cfg.n_viewpoints {
            break;
        }
        let pairs = auto_correspondences(&city, synth.caster(), &truth, grid, cfg.max_correspondences);
        if pairs.len() < 8 {
            continue;
        }
        let pano_id = format!("v{:03}", reports.len());
        let pano = synth.render(&truth, cfg.pano_height)?;
        pano.image.save(out_dir.join(format!("{pano_id}_pano.png")))?;
        let corr_file = CorrespondenceFile {
            pano_id: pano_id.clone(),
            width: grid.width(),
            height: grid.height(),
            pairs,
            lat: None,
            lon: None,
            azimuth_deg: None,
        };
        std::fs::write(out_dir.join(format!("{pano_id}_corr.json")), serde_json::to_string_pretty(&corr_file)?)?;

        let init = perturb(&truth, &mut rng, cfg.perturb_m, cfg.perturb_deg)?;
        let sol = solve_pose(&init, &corr_file.correspondences()?)?;
        PoseFile::from_solution(&pano_id, &sol).save(out_dir.join(format!("{pano_id}_pose.json")))?;

        let view_seed = cfg.seed.wrapping_add(reports.len() as u64);
        let views = render_viewpoint_products_sized(&scene, &pano.image, &sol.pose, view_seed, cfg.view_size)?;
        write_viewpoint_products(&products, &pano_id, &views)?;
        let mut horizontal = Vec::new();
        for (k, v) in views.iter().enumerate() {
            let visible = visible_segments(&v.layers, &segments);
            let vps = extract_vps(&visible, &sol.pose, &v.intrinsics, cfg.vp_eps_deg, cfg.vp_min_pts)?;
            horizontal.push(vps.len() - 1);
            std::fs::write(
                products.join(format!("{pano_id}_{k}_vps.json")),
                serde_json::to_string_pretty(&VpFile { vps })?,
            )?;
        }

        let mut residuals = sol.residuals_deg.clone();
        residuals.sort_by(f64::total_cmp);
        reports.push(ViewpointReport {
            pano_id: pano_id.clone(),
            truth,
            init,
            solved: sol.pose,
            n_pairs: corr_file.pairs.len(),
            median_residual_deg: crate::stats::percentile_nearest_rank(&residuals, 50.0).unwrap_or(0.0),
            position_error_m: (sol.pose.location - truth.location).norm(),
            rotation_error_deg: rotation_angle_between(&sol.pose.rotation(), &truth.rotation()).to_degrees(),
            view_yaws_deg: views.iter().map(|v| v.intrinsics.yaw.to_degrees()).collect(),
            horizontal_vps_per_view: horizontal,
        });
        records.push(ViewpointRecord {
            pano_id,
            pose: sol.pose,
            capture_date: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            indoor: false,
            n_annotations: corr_file.pairs.len() as u32,
            quality_ok: true,
        });
    }
    if reports.len() < cfg.n_viewpoints {
        return Err(Error::Other(format!(
            "only {} of {} viewpoints had enough visible corners",
            reports.len(),
            cfg.n_viewpoints
        )));
    }

    save_records(&records, out_dir.join("records.json"))?;
    let labels = split_random(&records, &SplitSpec::random(cfg.seed, [0.8, 0.1, 0.1]))?;
    let manifest = build_manifest(&records, &labels, &products, None)?;
    let manifest_path = out_dir.join("manifest.json");
    manifest.save(&manifest_path)?;

    Ok(PipelineReport {
        viewpoints: reports,
        n_polygons: city.mesh.polygons.len(),
        n_segments: segments.len(),
        segments_match_ground_truth: seg_ids == city.segment_labels,
        manifest_path,
        manifest_entries: manifest.entries.len(),
        manifest_missing: manifest.missing.len(),
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}
