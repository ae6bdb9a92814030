use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn parallax(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parallax"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = parallax(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn ground_truth_flow_gives_exact_depth_in_every_bucket() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok_json(dir, &["gen", "--out", "s", "--seed", "2"]);
    let solved = ok_json(dir, &["solve", "--sample", "s", "--out", "p", "--flow", "gt"]);
    assert!(solved["solved"].as_u64().unwrap() > 20_000);
    let report = ok_json(dir, &["eval", "--pred", "p", "--gt", "s", "--out", "m"]);
    for entry in report["depth"].as_array().unwrap() {
        assert!(entry["mae"].as_f64().unwrap() < 0.01, "{entry}");
    }
    for entry in report["height"].as_array().unwrap() {
        assert!(entry["mae"].as_f64().unwrap() < 0.01, "{entry}");
    }
    let csv = std::fs::read_to_string(dir.join("m/metrics.csv")).unwrap();
    assert!(csv.starts_with("kind,bucket,metric,value,count\n"));
    let saved: Value = serde_json::from_slice(&std::fs::read(dir.join("m/metrics.json")).unwrap()).unwrap();
    assert_eq!(saved["depth"], report["depth"]);
}

#[test]
fn explicit_inputs_match_sample_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok_json(dir, &["gen", "--out", "s", "--preset", "random", "--seed", "4", "--size", "96x64"]);
    ok_json(dir, &["solve", "--sample", "s", "--out", "a", "--flow", "gt"]);
    ok_json(
        dir,
        &[
            "solve", "--source", "s/source.ppm", "--target", "s/target.ppm", "--calib", "s/calib.json", "--pair",
            "s/pair.json", "--out", "b", "--flow", "file:s/gt_flow.pfm",
        ],
    );
    for name in ["gamma.pfm", "gamma_mask.pgm", "depth.pfm", "height.pfm"] {
        assert_eq!(std::fs::read(dir.join("a").join(name)).unwrap(), std::fs::read(dir.join("b").join(name)).unwrap(), "{name}");
    }
}

#[test]
fn plane_only_scene_reconstructs_flat() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok_json(dir, &["gen", "--out", "s", "--size", "128x80"]);
    let mut scene: Value = serde_json::from_slice(&std::fs::read(dir.join("s/scene.json")).unwrap()).unwrap();
    scene["boxes"] = Value::Array(vec![]);
    std::fs::write(dir.join("flat.json"), serde_json::to_vec(&scene).unwrap()).unwrap();
    ok_json(dir, &["gen", "--out", "f", "--scene", "flat.json"]);
    ok_json(dir, &["solve", "--sample", "f", "--out", "p", "--flow", "gt"]);
    let recon = ok_json(dir, &["recon", "--gamma", "p/gamma.pfm", "--sample", "f", "--out", "r"]);
    assert!(recon["depth_cells"].as_u64().unwrap() > 1000);
    assert!(recon["max_abs_height"].as_f64().unwrap() < 1e-3, "{recon}");
    for name in ["depth.pfm", "height.pfm", "points.ply", "gamma.ppm", "depth.ppm", "height.ppm"] {
        assert!(dir.join("r").join(name).exists(), "{name}");
    }
}

#[test]
fn fit_plane_recovers_the_road() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok_json(dir, &["gen", "--out", "s", "--preset", "random", "--seed", "9"]);
    let fit = ok_json(dir, &["fit-plane", "--points", "s/points.ply", "--compare", "s/pair.json", "--out", "plane.json"]);
    assert!(fit["angle_error_deg"].as_f64().unwrap() < 0.5, "{fit}");
    assert!(fit["h_c_error"].as_f64().unwrap() < 0.01, "{fit}");
    assert!(dir.join("plane.json").exists());
}

#[test]
fn warp_and_energy_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok_json(dir, &["gen", "--out", "s", "--size", "128x80"]);
    let warp = ok_json(dir, &["warp", "--sample", "s", "--out", "w"]);
    assert!(warp["road_mae"].as_f64().unwrap() < 2.0 / 255.0, "{warp}");
    assert!(dir.join("w/warped.ppm").exists() && dir.join("w/warped_mask.pgm").exists());

    let exact = ok_json(dir, &["energy", "--sample", "s", "--gamma", "s/gt_gamma.pfm"]);
    assert_eq!(exact["sparse"].as_f64().unwrap(), 0.0);
    let total = exact["total"].as_f64().unwrap();
    let parts = exact["photometric"].as_f64().unwrap() + 0.1 * exact["smoothness"].as_f64().unwrap();
    assert!((total - parts).abs() <= 1e-9 * total.max(1.0));
}

#[test]
fn errors_are_structured() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = parallax(dir, &["eval", "--pred", "nope", "--gt", "missing"]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["error"], "MissingFile");

    let out = parallax(dir, &["solve", "--sample", "s"]);
    assert_eq!(out.status.code(), Some(2));

    ok_json(dir, &["gen", "--out", "s", "--size", "64x40"]);
    let out = parallax(dir, &["solve", "--source", "s/source.ppm", "--target", "s/target.ppm", "--calib", "s/calib.json", "--pair", "s/pair.json", "--out", "p", "--flow", "gt"]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["error"], "InvalidParameter");
}
