//! Output directories written by pipeline runs.

use std::path::Path;

use mcam_core::io::{read_png_gray, sha256_hex, Manifest, PyramidManifest};
use mcam_core::pipeline::{run, validate_config, Overrides};
use mcam_core::McamError;

fn run_text(text: &str, dir: &Path) -> mcam_core::Result<mcam_core::pipeline::RunSummary> {
    let o = Overrides { output_dir: Some(dir.to_path_buf()), ..Default::default() };
    run(&validate_config(Some(text), &o)?)
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn stitch_manifest_hashes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_text(r#"{"mode": "stitch", "preset": "continuous", "seed": 2}"#, dir.path()).unwrap();
    let m = manifest(dir.path());
    assert_eq!(m.mode, "stitch");
    assert_eq!(m.files.len(), s.files);
    for f in &m.files {
        let bytes = std::fs::read(dir.path().join(&f.path)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes, "{}", f.path);
        assert_eq!(sha256_hex(&bytes), f.sha256, "{}", f.path);
    }
    let comp = read_png_gray(&dir.path().join("composite.png")).unwrap();
    let pm: PyramidManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pyramid/pyramid.json")).unwrap()).unwrap();
    assert_eq!((pm.levels[0].width, pm.levels[0].height), (comp.ncols(), comp.nrows()));
    let res = std::fs::read_to_string(dir.path().join("resolution.csv")).unwrap();
    assert!(res.lines().last().unwrap().starts_with("resolved_um,,11.0"), "{res}");
}

#[test]
fn binned_render_halves_frames() {
    let dir = tempfile::tempdir().unwrap();
    run_text(r#"{"mode": "render", "seed": 1, "binning": 2, "noise_std": 0.01}"#, dir.path()).unwrap();
    let frames: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("frames/frames.json")).unwrap()).unwrap();
    let first = frames[0]["file"].as_str().unwrap();
    let img = read_png_gray(&dir.path().join("frames").join(first)).unwrap();
    assert_eq!(img.dim(), (127, 171));
    assert_eq!(frames.as_array().unwrap().len(), 4);
}

#[test]
fn png_scene_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = ndarray::Array2::from_shape_fn((400, 400), |(r, c)| ((r / 10 + c / 10) % 2) as f32);
    std::fs::write(dir.path().join("scene.png"), mcam_core::io::encode_png(&img, 8).unwrap()).unwrap();
    std::fs::write(dir.path().join("scene.json"), r#"{"extent_mm": [8.0, 8.0], "sample_pitch_um": 5.0}"#).unwrap();
    let text = format!(
        r#"{{"mode": "render", "seed": 1, "scene": {{"kind": "png", "png_path": {:?}, "metadata_path": {:?}}}}}"#,
        dir.path().join("scene.png"),
        dir.path().join("scene.json")
    );
    let s = run_text(&text, &dir.path().join("out")).unwrap();
    assert_eq!(s.details["frames"], 4);
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let e = run_text(r#"{"mode": "depth", "preset": "tiled", "seed": 1}"#, dir.path()).unwrap_err();
    assert!(matches!(e, McamError::Regime(_)));
    assert_eq!(e.exit_code(), 3);
    let e = run_text(r#"{"mode": "render", "scene": {"kind": "png"}}"#, dir.path()).unwrap_err();
    let McamError::Validation(fields) = &e else { panic!("{e}") };
    let names: Vec<&str> = fields.iter().map(|f| f.field.as_str()).collect();
    assert_eq!(names, ["seed", "scene.png_path", "scene.metadata_path"]);
    assert_eq!(e.exit_code(), 2);
}
