use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use cityframe_core::dataset::{
    annotation_count_stats, build_manifest, compute_sil, load_quality_list, load_records, split, Split, SplitSpec,
    DEFAULT_SPATIAL_CELL_M,
};
use cityframe_core::geometry::{make_view_set_sized, CameraPose, VIEW_SIZE};
use cityframe_core::georeg::{fit_field, invert_warp, read_control_pairs, select_lambda_cv, DeformationField, GridSpec};
use cityframe_core::holistic::{
    extract_vps, occurrence_histogram, plane_occurrence, polygon_segment_ids, segment_surfaces, visible_segments,
    SegmentParams, SegmentsFile, SurfaceSegment, VpFile, DEFAULT_MAX_DIHEDRAL_DEG, DEFAULT_OCCURRENCE_PIXELS,
};
use cityframe_core::mesh::{build_adjacency, load_mesh, save_mesh, CityMesh, TerrainIndex, DEFAULT_MERGE_DISTANCE};
use cityframe_core::pipeline::{run_pipeline, PipelineConfig};
use cityframe_core::pose::{init_pose, solve_pose, CorrespondenceFile, PoseFile};
use cityframe_core::render::{read_pfm, render_viewpoint_products_sized, write_viewpoint_products, CadScene, RenderConfig};
use cityframe_core::synth::{generate_city, street_viewpoints, synth_panorama, SceneSpec};
use cityframe_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "cityframe", version, about = "City-scale panorama registration and ground-truth toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh queries
    #[command(subcommand)]
    Citymodel(CitymodelCmd),
    /// Fit and apply the CAD-to-geodetic deformation field
    #[command(subcommand)]
    Georeg(GeoregCmd),
    /// Camera pose refinement
    #[command(subcommand)]
    Pose(PoseCmd),
    /// Perspective products
    #[command(subcommand)]
    Render(RenderCmd),
    /// Surface segments, vanishing points, plane occurrence
    #[command(subcommand)]
    Extract(ExtractCmd),
    /// Splits, manifests and metrics
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Synthetic fixtures
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Run the annotation HTTP service
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum CitymodelCmd {
    /// Terrain height at a ground position
    Elevation {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
    },
}

#[derive(Subcommand)]
enum GeoregCmd {
    /// Fit a field to control pairs, choosing lambda by leave-one-out CV
    Fit {
        /// CSV with header x_cad,y_cad,lat,lon
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 100.0)]
        cell: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1,1,10,100")]
        lambda_grid: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map a CAD point to local metric (and geodetic) coordinates
    Warp {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
    },
    /// Map a local metric point (or --lat/--lon) back to CAD coordinates
    Invert {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, allow_hyphen_values = true, required_unless_present = "lat")]
        x: Option<f64>,
        #[arg(long, allow_hyphen_values = true, required_unless_present = "lat")]
        y: Option<f64>,
        #[arg(long, allow_hyphen_values = true, requires = "lon")]
        lat: Option<f64>,
        #[arg(long, allow_hyphen_values = true, requires = "lat")]
        lon: Option<f64>,
    },
}

#[derive(Subcommand)]
enum PoseCmd {
    /// Refine a panorama pose from its correspondences
    Solve {
        #[arg(long)]
        pano: String,
        #[arg(long)]
        corr: PathBuf,
        /// starting pose; otherwise derived from the correspondence file's lat/lon
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum RenderCmd {
    /// Eight perspective product sets for one panorama
    Viewpoint(ViewArgs),
}

#[derive(Args)]
struct ViewArgs {
    #[arg(long)]
    pano: PathBuf,
    #[arg(long)]
    pose: PathBuf,
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    segments: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = VIEW_SIZE)]
    size: u32,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum ExtractCmd {
    /// Planar surface segmentation of a mesh
    Segments {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_DIHEDRAL_DEG)]
        max_dihedral_deg: f64,
        #[arg(long, default_value_t = DEFAULT_MERGE_DISTANCE)]
        merge_distance: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Vanishing points of the eight views of a viewpoint
    Vps {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = VIEW_SIZE)]
        size: u32,
        #[arg(long, default_value_t = 5.0)]
        eps_deg: f64,
        #[arg(long, default_value_t = 1)]
        min_pts: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Number of viewpoints each segment is seen from
    Occurrence {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        segments: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        poses: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = VIEW_SIZE)]
        size: u32,
        #[arg(long, default_value_t = DEFAULT_OCCURRENCE_PIXELS)]
        min_pixels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitKindArg {
    Random,
    Spatial,
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Assign viewpoints to train/valid/test
    Split {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_enum, default_value = "random")]
        kind: SplitKindArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "0.8,0.1,0.1")]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_SPATIAL_CELL_M)]
        cell: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Index product files by split
    Manifest {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        splits: PathBuf,
        #[arg(long)]
        products_dir: PathBuf,
        /// newline-delimited ids of views that passed review
        #[arg(long)]
        quality: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Annotation count statistics
    Stats {
        #[arg(long)]
        records: PathBuf,
    },
    /// Scale-invariant log error between two depth maps
    Sil {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Box city on terrain, with ground-truth labels and street viewpoints
    City {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        buildings: usize,
        #[arg(long, default_value_t = 200.0 * 200.0)]
        area: f64,
        #[arg(long, default_value_t = 4)]
        viewpoints: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Flat-colored panorama of a mesh
    Pano {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        /// labels to color by; segments of the mesh by default
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        height: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full synthetic run from city to manifest
    Pipeline {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        viewpoints: usize,
        #[arg(long, default_value_t = 512)]
        pano_height: u32,
        #[arg(long, default_value_t = VIEW_SIZE)]
        view_size: u32,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "CITYFRAME_DATA_DIR")]
    data_dir: PathBuf,
    #[arg(long, env = "CITYFRAME_MESH")]
    mesh: PathBuf,
    #[arg(long, env = "CITYFRAME_FIELD")]
    field: Option<PathBuf>,
    #[arg(long, env = "CITYFRAME_SEGMENTS")]
    segments: Option<PathBuf>,
    #[arg(long, env = "CITYFRAME_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitAssignment {
    pano_id: String,
    split: Option<Split>,
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

fn read_mesh(path: &Path) -> Result<CityMesh> {
    let load = load_mesh(path).with_context(|| format!("loading {}", path.display()))?;
    if load.unknown_tag_warnings > 0 {
        log::warn!("{} groups with unknown tags, tagged OTHER", load.unknown_tag_warnings);
    }
    if load.triangulated_faces > 0 {
        log::info!("{} non-planar faces triangulated", load.triangulated_faces);
    }
    Ok(load.mesh)
}

fn segment_mesh(mesh: &CityMesh, max_dihedral_deg: f64, merge_distance: f64) -> Result<Vec<SurfaceSegment>> {
    let adj = build_adjacency(mesh, merge_distance)?;
    Ok(segment_surfaces(mesh, &adj, max_dihedral_deg)?)
}

/// Segments from a file, or computed with default thresholds.
fn load_segments(mesh: &CityMesh, path: Option<&Path>) -> Result<Vec<u32>> {
    match path {
        Some(p) => Ok(SegmentsFile::load(p)?.polygon_ids(mesh.polygons.len())?),
        None => Ok(polygon_segment_ids(
            &segment_mesh(mesh, DEFAULT_MAX_DIHEDRAL_DEG, DEFAULT_MERGE_DISTANCE)?,
            mesh.polygons.len(),
        )),
    }
}

/// Segment structs rebuilt from a segments file, with area-weighted normals.
fn segments_from_file(mesh: &CityMesh, path: &Path) -> Result<Vec<SurfaceSegment>> {
    let file = SegmentsFile::load(path)?;
    let ids = file.polygon_ids(mesh.polygons.len())?;
    let all = segment_mesh(mesh, file.params.max_dihedral_deg, file.params.merge_distance)?;
    if polygon_segment_ids(&all, mesh.polygons.len()) != ids {
        bail!("{} does not match the mesh segmentation", path.display());
    }
    Ok(all)
}

fn citymodel(cmd: CitymodelCmd) -> Result<()> {
    match cmd {
        CitymodelCmd::Elevation { mesh, x, y } => {
            let mesh = read_mesh(&mesh)?;
            let z = TerrainIndex::new(&mesh).elevation_at(x, y)?;
            print_json(&json!({ "x": x, "y": y, "elevation": z }))
        }
    }
}

fn georeg(cmd: GeoregCmd) -> Result<()> {
    match cmd {
        GeoregCmd::Fit {
            pairs,
            cell,
            lambda_grid,
            out,
        } => {
            let (pairs, plane) = read_control_pairs(&pairs)?;
            let cad: Vec<Vector2<f64>> = pairs.iter().map(|p| p.x_cad).collect();
            let grid = GridSpec::covering(&cad, cell)?;
            let (lambda, cv) = if lambda_grid.len() > 1 {
                let cv = select_lambda_cv(&pairs, grid, &lambda_grid)?;
                (cv.lambda_best, Some(cv))
            } else {
                (*lambda_grid.first().context("empty lambda grid")?, None)
            };
            let mut fit = fit_field(&pairs, grid, lambda)?;
            fit.field.tangent_plane = Some(plane);
            fit.field.save(&out)?;
            let rmse = (fit.report.data_term / pairs.len() as f64).sqrt();
            print_json(&json!({
                "lambda": lambda,
                "lambda_grid": lambda_grid,
                "cv_rmse": cv.as_ref().map(|c| c.cv_rmse.clone()),
                "cv_max": cv.as_ref().map(|c| c.cv_max.clone()),
                "fit_rmse": rmse,
                "objective": fit.report.objective,
                "iterations": fit.report.iterations,
                "grid": { "nx": grid.nx, "ny": grid.ny, "cell": grid.cell },
            }))
        }
        GeoregCmd::Warp { field, x, y } => {
            let field = DeformationField::load(&field)?;
            let p = field.warp(&Vector2::new(x, y))?;
            let geo = field.tangent_plane.map(|t| t.to_geodetic(&p));
            print_json(&json!({
                "local": [p.x, p.y],
                "lat": geo.map(|g| g.0),
                "lon": geo.map(|g| g.1),
            }))
        }
        GeoregCmd::Invert { field, x, y, lat, lon } => {
            let field = DeformationField::load(&field)?;
            let target = match (lat, lon, x, y) {
                (Some(lat), Some(lon), ..) => field
                    .tangent_plane
                    .context("field has no tangent plane; pass --x/--y")?
                    .to_local(lat, lon),
                (_, _, Some(x), Some(y)) => Vector2::new(x, y),
                _ => bail!("pass --x and --y, or --lat and --lon"),
            };
            let c = invert_warp(&field, &target, None)?;
            print_json(&json!({ "cad": [c.x, c.y] }))
        }
    }
}

fn pose(cmd: PoseCmd) -> Result<()> {
    let PoseCmd::Solve {
        pano,
        corr,
        init,
        field,
        mesh,
        out,
    } = cmd;
    let corr = CorrespondenceFile::load(&corr)?;
    if corr.pano_id != pano {
        bail!("correspondence file is for {}, not {pano}", corr.pano_id);
    }
    let init = match (init, field, mesh) {
        (Some(p), ..) => PoseFile::load(&p)?.pose()?,
        (None, Some(field), Some(mesh)) => {
            let (lat, lon) = corr.lat.zip(corr.lon).context("correspondence file has no lat/lon")?;
            let field = DeformationField::load(&field)?;
            init_pose((lat, lon), corr.azimuth_deg.unwrap_or(0.0).to_radians(), &field, &read_mesh(&mesh)?)?
        }
        _ => bail!("pass --init, or --field and --mesh"),
    };
    let sol = solve_pose(&init, &corr.correspondences()?)?;
    for w in &sol.warnings {
        log::warn!("{w:?}");
    }
    let file = PoseFile::from_solution(&pano, &sol);
    file.save(&out)?;
    print_json(&json!({
        "pano_id": pano,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "termination": format!("{:?}", sol.termination),
        "residuals_deg": sol.residuals_deg,
    }))
}

fn render(cmd: RenderCmd) -> Result<()> {
    let RenderCmd::Viewpoint(a) = cmd;
    let mesh = read_mesh(&a.mesh)?;
    let seg_ids = load_segments(&mesh, a.segments.as_deref())?;
    let scene = CadScene::new(&mesh, &seg_ids)?;
    let pose_file = PoseFile::load(&a.pose)?;
    let pano = image::open(&a.pano)
        .with_context(|| format!("reading {}", a.pano.display()))?
        .into_rgb8();
    let views = render_viewpoint_products_sized(&scene, &pano, &pose_file.pose()?, a.seed, a.size)?;
    let files = write_viewpoint_products(&a.out_dir, &pose_file.pano_id, &views)?;
    print_json(&json!({
        "pano_id": pose_file.pano_id,
        "views": views.iter().map(|v| json!({
            "yaw_deg": v.intrinsics.yaw.to_degrees(),
            "pitch_deg": v.intrinsics.pitch.to_degrees(),
            "fov_deg": v.intrinsics.fov_deg,
        })).collect::<Vec<_>>(),
        "files": files,
    }))
}

fn extract(cmd: ExtractCmd) -> Result<()> {
    match cmd {
        ExtractCmd::Segments {
            mesh,
            max_dihedral_deg,
            merge_distance,
            out,
        } => {
            let mesh = read_mesh(&mesh)?;
            let segs = segment_mesh(&mesh, max_dihedral_deg, merge_distance)?;
            SegmentsFile::new(
                &segs,
                SegmentParams {
                    max_dihedral_deg,
                    merge_distance,
                },
            )
            .save(&out)?;
            print_json(&json!({ "polygons": mesh.polygons.len(), "segments": segs.len() }))
        }
        ExtractCmd::Vps {
            mesh,
            segments,
            pose,
            seed,
            size,
            eps_deg,
            min_pts,
            out_dir,
        } => {
            let mesh = read_mesh(&mesh)?;
            let segs = segments_from_file(&mesh, &segments)?;
            let scene = CadScene::new(&mesh, &polygon_segment_ids(&segs, mesh.polygons.len()))?;
            let pf = PoseFile::load(&pose)?;
            let pose = pf.pose()?;
            std::fs::create_dir_all(&out_dir)?;
            let mut counts = Vec::new();
            for (k, intr) in make_view_set_sized(seed, size).into_iter().enumerate() {
                let layers = scene.render(&RenderConfig::new(intr, pose))?;
                let vps = extract_vps(&visible_segments(&layers, &segs), &pose, &intr, eps_deg, min_pts)?;
                counts.push(vps.len());
                write_json(&out_dir.join(format!("{}_{k}_vps.json", pf.pano_id)), &VpFile { vps })?;
            }
            print_json(&json!({ "pano_id": pf.pano_id, "vps_per_view": counts }))
        }
        ExtractCmd::Occurrence {
            mesh,
            segments,
            poses,
            seed,
            size,
            min_pixels,
            out,
        } => {
            let mesh = read_mesh(&mesh)?;
            let segs = segments_from_file(&mesh, &segments)?;
            let scene = CadScene::new(&mesh, &polygon_segment_ids(&segs, mesh.polygons.len()))?;
            let poses = poses
                .iter()
                .map(|p| Ok(PoseFile::load(p)?.pose()?))
                .collect::<Result<Vec<CameraPose>>>()?;
            let views = make_view_set_sized(seed, size);
            let counts = plane_occurrence(
                &segs,
                &poses,
                |pose| views.iter().map(|intr| scene.render(&RenderConfig::new(*intr, *pose))).collect(),
                min_pixels,
            )?;
            let report = json!({
                "counts": counts,
                "histogram": occurrence_histogram(&counts),
                "seen_from_two_or_more": counts.iter().filter(|&&c| c >= 2).count(),
            });
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
            print_json(&report)
        }
    }
}

fn dataset(cmd: DatasetCmd) -> Result<()> {
    match cmd {
        DatasetCmd::Split {
            records,
            kind,
            seed,
            fractions,
            cell,
            out,
        } => {
            let records = load_records(&records)?;
            let fr: [f64; 3] = fractions.try_into().map_err(|_| anyhow::anyhow!("need three fractions"))?;
            let spec = match kind {
                SplitKindArg::Random => SplitSpec::random(seed, fr),
                SplitKindArg::Spatial => SplitSpec::spatial(seed, fr, cell),
            };
            let labels = split(&records, &spec)?;
            let assign: Vec<SplitAssignment> = records
                .iter()
                .zip(&labels)
                .map(|(r, s)| SplitAssignment {
                    pano_id: r.pano_id.clone(),
                    split: *s,
                })
                .collect();
            write_json(&out, &assign)?;
            let count = |s| labels.iter().filter(|l| **l == Some(s)).count();
            print_json(&json!({
                "train": count(Split::Train),
                "valid": count(Split::Valid),
                "test": count(Split::Test),
                "excluded": labels.iter().filter(|l| l.is_none()).count(),
            }))
        }
        DatasetCmd::Manifest {
            records,
            splits,
            products_dir,
            quality,
            out,
        } => {
            let records = load_records(&records)?;
            let assign: Vec<SplitAssignment> = serde_json::from_str(&std::fs::read_to_string(&splits)?)?;
            let by_id: std::collections::HashMap<&str, Option<Split>> =
                assign.iter().map(|a| (a.pano_id.as_str(), a.split)).collect();
            let labels = records
                .iter()
                .map(|r| {
                    by_id
                        .get(r.pano_id.as_str())
                        .copied()
                        .with_context(|| format!("{} missing from split file", r.pano_id))
                })
                .collect::<Result<Vec<_>>>()?;
            let quality: Option<HashSet<String>> = quality.map(load_quality_list).transpose()?;
            let manifest = build_manifest(&records, &labels, &products_dir, quality.as_ref())?;
            manifest.save(&out)?;
            for m in &manifest.missing {
                log::warn!("missing {}", m.display());
            }
            print_json(&json!({
                "entries": manifest.entries.len(),
                "missing": manifest.missing.len(),
                "quality_pass_ratio": manifest.quality_pass_ratio,
            }))
        }
        DatasetCmd::Stats { records } => print_json(&annotation_count_stats(&load_records(&records)?)),
        DatasetCmd::Sil { pred, gt } => {
            let (pw, ph, pc, p) = read_pfm(&pred)?;
            let (gw, gh, gc, g) = read_pfm(&gt)?;
            if (pw, ph, pc) != (gw, gh, gc) || pc != 1 {
                bail!("depth maps must be single-channel and the same size");
            }
            let p: Vec<f64> = p.into_iter().map(f64::from).collect();
            let g: Vec<f64> = g.into_iter().map(f64::from).collect();
            print_json(&json!({ "sil": compute_sil(&p, &g, None)? }))
        }
    }
}

fn synth(cmd: SynthCmd) -> Result<()> {
    match cmd {
        SynthCmd::City {
            seed,
            buildings,
            area,
            viewpoints,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let city = generate_city(&SceneSpec {
                area,
                ..SceneSpec::new(seed, buildings)
            })?;
            save_mesh(&city.mesh, out_dir.join("city.obj"))?;
            write_json(&out_dir.join("labels.json"), &city.segment_labels)?;
            let poses = street_viewpoints(&city, viewpoints, 3.0, seed);
            for (i, p) in poses.iter().enumerate() {
                PoseFile::from_pose(&format!("s{i:03}"), p).save(out_dir.join(format!("s{i:03}_pose.json")))?;
            }
            print_json(&json!({
                "polygons": city.mesh.polygons.len(),
                "segments": city.segment_labels.iter().max().copied().unwrap_or(0),
                "viewpoints": poses.len(),
            }))
        }
        SynthCmd::Pano {
            mesh,
            pose,
            segments,
            height,
            out,
        } => {
            let mesh = read_mesh(&mesh)?;
            let labels = load_segments(&mesh, segments.as_deref())?;
            let pano = synth_panorama(&mesh, &labels, &PoseFile::load(&pose)?.pose()?, height)?;
            pano.image.save(&out)?;
            print_json(&json!({ "width": pano.image.width(), "height": pano.image.height() }))
        }
        SynthCmd::Pipeline {
            seed,
            viewpoints,
            pano_height,
            view_size,
            out_dir,
        } => {
            let cfg = PipelineConfig {
                seed,
                n_viewpoints: viewpoints,
                pano_height,
                view_size,
                ..PipelineConfig::default()
            };
            let report = run_pipeline(&cfg, &out_dir)?;
            write_json(&out_dir.join("report.json"), &report)?;
            print_json(&report)
        }
    }
}

fn serve(a: ServeArgs) -> Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(cityframe_service::serve(ServiceConfig {
        data_dir: a.data_dir,
        mesh_path: a.mesh,
        field_path: a.field,
        segments_path: a.segments,
        listen: a.listen,
    }))?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Citymodel(c) => citymodel(c),
        Command::Georeg(c) => georeg(c),
        Command::Pose(c) => pose(c),
        Command::Render(c) => render(c),
        Command::Extract(c) => extract(c),
        Command::Dataset(c) => dataset(c),
        Command::Synth(c) => synth(c),
        Command::Serve(a) => serve(a),
    }
}
