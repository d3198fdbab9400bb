use std::path::Path;
use std::process::{Command, Output};

fn mcam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcam")).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn design_prints_a_summary_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcam(&["design", "--preset", "tiled", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&out);
    assert_eq!(s["details"]["regime"], "tiled");
    assert!((s["details"]["r_pix_um"].as_f64().unwrap() - 2.2).abs() < 1e-9);
    assert!(dir.path().join("manifest.json").exists());
    assert!(dir.path().join("design.csv").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"preset": "continuous", "binning": 1, "efficiency": 1.0}"#).unwrap();
    let out = mcam(&[
        "throughput",
        "--config",
        path(&cfg),
        "--preset",
        "multi_view",
        "--binning",
        "2",
        "--efficiency",
        "0.5",
        "--out",
        path(&dir.path().join("out")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d = &json(&out)["details"];
    assert_eq!(d["frame_bytes"], 177_240_960u64);
    assert_eq!(d["binning"], 2);
    assert!((d["max_fps"].as_f64().unwrap() - 14.1).abs() < 0.01);
}

#[test]
fn missing_seed_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcam(&["render", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn every_bad_field_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"array": {"magnification": 0}, "overlap": 2, "extra": 1}"#).unwrap();
    let out = mcam(&["design", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for field in ["array.magnification", "overlap", "extra"] {
        assert!(err.contains(field), "{field} missing from {err}");
    }
}

#[test]
fn stitching_a_tiled_array_is_a_regime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcam(&["stitch", "--preset", "tiled", "--seed", "1", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn stitch_is_repeatable_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        let out_dir = dir.path().join(threads);
        let out = mcam(&["stitch", "--seed", "9", "--threads", threads, "--out", path(&out_dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(out_dir.join("manifest.json")).unwrap()
    };
    assert_eq!(run("1"), run("4"));
}
