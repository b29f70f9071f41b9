use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(args: &[&str]) -> Value {
    let out = Command::new(env!("CARGO_BIN_EXE_cityframe"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn cityframe");
    assert!(
        out.status.success(),
        "cityframe {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synthetic_workflow_through_the_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let city = d.join("city");

    let r = run(&["synth", "city", "--seed", "3", "--buildings", "6", "--area", "14400", "--viewpoints", "2", "--out-dir", p(&city)]);
    assert_eq!(r["viewpoints"], 2);
    let mesh = city.join("city.obj");
    let pose0 = city.join("s000_pose.json");

    let r = run(&["citymodel", "elevation", "--mesh", p(&mesh), "--x", "-3.5", "--y", "2"]);
    assert_eq!(r["elevation"].as_f64().unwrap(), 0.0);

    let segs = d.join("segments.json");
    let r = run(&["extract", "segments", "--mesh", p(&mesh), "--out", p(&segs)]);
    assert!(r["segments"].as_u64().unwrap() > 1);

    let pano = d.join("s000.png");
    let r = run(&["synth", "pano", "--mesh", p(&mesh), "--pose", p(&pose0), "--segments", p(&segs), "--height", "64", "--out", p(&pano)]);
    assert_eq!(r["width"], 128);

    let products = d.join("products");
    let r = run(&[
        "render", "viewpoint", "--pano", p(&pano), "--pose", p(&pose0), "--mesh", p(&mesh), "--segments", p(&segs),
        "--seed", "1", "--size", "24", "--out-dir", p(&products),
    ]);
    let yaws: Vec<f64> = r["views"].as_array().unwrap().iter().map(|v| v["yaw_deg"].as_f64().unwrap()).collect();
    let expected: Vec<f64> = (0..8).map(|k| 45.0 * k as f64).collect();
    assert!(yaws.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-9), "{yaws:?}");
    assert!(products.join("s000_7_segm.png").is_file());

    let r = run(&[
        "extract", "vps", "--mesh", p(&mesh), "--segments", p(&segs), "--pose", p(&pose0), "--seed", "1", "--size", "24",
        "--out-dir", p(&products),
    ]);
    assert_eq!(r["vps_per_view"].as_array().unwrap().len(), 8);
    assert!(products.join("s000_0_vps.json").is_file());

    let pose1 = city.join("s001_pose.json");
    let r = run(&[
        "extract", "occurrence", "--mesh", p(&mesh), "--segments", p(&segs), "--poses", p(&pose0), p(&pose1),
        "--size", "24", "--min-pixels", "1",
    ]);
    let hist: Vec<u64> = serde_json::from_value(r["histogram"].clone()).unwrap();
    assert_eq!(hist.iter().sum::<u64>(), r["counts"].as_array().unwrap().len() as u64);

    let sil = run(&["dataset", "sil", "--pred", p(&products.join("s000_0_dpth.pfm")), "--gt", p(&products.join("s000_0_dpth.pfm"))]);
    assert_eq!(sil["sil"].as_f64().unwrap(), 0.0);
}

#[test]
fn pipeline_then_pose_and_dataset_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let r = run(&["synth", "pipeline", "--seed", "2", "--viewpoints", "2", "--pano-height", "64", "--view-size", "24", "--out-dir", p(d)]);
    assert_eq!(r["manifest_entries"], 16);

    let out = d.join("resolved.json");
    let r = run(&[
        "pose", "solve", "--pano", "v000", "--corr", p(&d.join("v000_corr.json")), "--init", p(&d.join("v000_pose.json")),
        "--out", p(&out),
    ]);
    assert!(r["residuals_deg"].as_array().unwrap().iter().all(|x| x.as_f64().unwrap() < 1e-6));

    let records = d.join("records.json");
    let splits = d.join("splits.json");
    let r = run(&["dataset", "split", "--records", p(&records), "--seed", "4", "--fractions", "0.5,0.25,0.25", "--out", p(&splits)]);
    assert_eq!(r["train"].as_u64().unwrap() + r["valid"].as_u64().unwrap() + r["test"].as_u64().unwrap(), 2);

    std::fs::write(d.join("quality.txt"), "v000_0\nv000_1\n").unwrap();
    let r = run(&[
        "dataset", "manifest", "--records", p(&records), "--splits", p(&splits), "--products-dir", p(&d.join("products")),
        "--quality", p(&d.join("quality.txt")), "--out", p(&d.join("m.json")),
    ]);
    assert_eq!(r["entries"], 16);
    assert_eq!(r["missing"], 0);
    assert_eq!(r["quality_pass_ratio"].as_f64().unwrap(), 2.0 / 16.0);

    let r = run(&["dataset", "stats", "--records", p(&records)]);
    assert!(r["min"].as_u64().unwrap() >= 8);
}

#[test]
fn georeg_fit_warp_invert_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let (lat0, lon0) = (51.5, -0.12);
    let m_per_deg = 6_378_137.0f64.to_radians();
    let mut csv = String::from("x_cad,y_cad,lat,lon\n");
    for i in 0..6 {
        for j in 0..6 {
            let (x, y) = (i as f64 * 80.0, j as f64 * 80.0);
            // rigid shift plus a gentle bend
            let (ex, ny) = (x + 12.0 + 0.01 * y, y - 7.0);
            let lat = lat0 + ny / m_per_deg;
            let lon = lon0 + ex / (m_per_deg * lat0.to_radians().cos());
            csv.push_str(&format!("{x},{y},{lat},{lon}\n"));
        }
    }
    let pairs = d.join("pairs.csv");
    std::fs::write(&pairs, csv).unwrap();
    let field = d.join("field.json");
    let r = run(&["georeg", "fit", "--pairs", p(&pairs), "--cell", "50", "--lambda-grid", "0.01,0.1,1", "--out", p(&field)]);
    assert!(r["fit_rmse"].as_f64().unwrap() < 1.0, "{r}");

    let w = run(&["georeg", "warp", "--field", p(&field), "--x", "123.4", "--y", "210.5"]);
    let local: [f64; 2] = serde_json::from_value(w["local"].clone()).unwrap();
    let back = run(&["georeg", "invert", "--field", p(&field), "--x", &local[0].to_string(), "--y", &local[1].to_string()]);
    let cad: [f64; 2] = serde_json::from_value(back["cad"].clone()).unwrap();
    assert!((cad[0] - 123.4).abs() < 1e-6 && (cad[1] - 210.5).abs() < 1e-6, "{cad:?}");

    let lat = w["lat"].as_f64().unwrap().to_string();
    let lon = w["lon"].as_f64().unwrap().to_string();
    let back = run(&["georeg", "invert", "--field", p(&field), "--lat", &lat, "--lon", &lon]);
    let cad: [f64; 2] = serde_json::from_value(back["cad"].clone()).unwrap();
    assert!((cad[0] - 123.4).abs() < 1e-5 && (cad[1] - 210.5).abs() < 1e-5, "{cad:?}");
}
