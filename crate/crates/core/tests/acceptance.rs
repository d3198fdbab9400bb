//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.

use std::time::{Duration, Instant};

use mcam_core::acquisition::{
    check_coverage, frame_bytes, max_frame_rate, plan_tiled_scan, select_focus, throughput_report, DataPath,
};
use mcam_core::array_model::{
    classify_axis, design_report, ArrayConfig, ArrayLayout, CameraIndex, Regime, StepMode,
};
use mcam_core::depth3d::{
    analytic_sweep, match_features, run_depth_sweep, shared_windows, sweep_planes, DepthCalibration, MatchOptions,
    SweepOptions,
};
use mcam_core::pipeline::{self, central_pair, Mode, Overrides, SceneSettings, SceneSource};
use mcam_core::presets::{self, Preset};
use mcam_core::registration::{
    calibrate, calibrated_tiles, composite, feather_ramps, feather_weights, measure_resolution, nominal_calibration,
    ResolutionMeasurement,
};
use mcam_core::scene_sim::{
    render_array, render_camera, CameraFrame, HeightField, NoiseTexture, RenderOptions, Roi, RoiSelection, Scene,
    SceneContent, StageOffset, TargetLayout,
};
use mcam_core::{acquisition, Length};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn within(value: f64, nominal: f64, rel: f64) -> bool {
    ((value - nominal) / nominal).abs() <= rel
}

// 1. Design table for the three prototype presets.
fn table_one() -> Check {
    let cases = [
        (Preset::MultiView, 22.0, 20.0, 34.32, 32.0),
        (Preset::Continuous, 11.0, 10.0, 17.16, 16.0),
        (Preset::Tiled, 2.2, 2.0, 3.432, 3.5),
    ];
    let mut out = Vec::new();
    for (p, r_exact, r_nominal, fov_exact, fov_nominal) in cases {
        let d = design_report(&p.config());
        let r = d.r_pix.as_um();
        let fov = d.camera_fov.0.min(d.camera_fov.1).as_mm();
        ensure((r - r_exact).abs() < 1e-9, format!("{}: r_pix {r} µm, expected {r_exact}", p.name()))?;
        ensure((fov - fov_exact).abs() < 1e-9, format!("{}: FOV {fov} mm, expected {fov_exact}", p.name()))?;
        ensure(within(r, r_nominal, 0.15), format!("{}: r_pix {r} not within 15% of {r_nominal}", p.name()))?;
        ensure(within(fov, fov_nominal, 0.15), format!("{}: FOV {fov} not within 15% of {fov_nominal}", p.name()))?;
        out.push(format!("{} r={r:.1}µm fov={fov:.2}mm", p.name()));
    }
    Ok(out.join(", "))
}

/// Minimum number of cameras covering interior points of a 1-D row of
/// `n` cameras at pitch `p` with field `fov`, by direct counting.
fn min_views(fov: f64, p: f64, n: usize) -> usize {
    let centres: Vec<f64> = (0..n).map(|i| i as f64 * p).collect();
    // Probe the middle pitch cell, away from the row ends.
    let lo = centres[n / 2];
    (0..997)
        .map(|k| {
            let x = lo + p * (k as f64 + 0.5) / 997.0;
            centres.iter().filter(|&&c| (x - c).abs() <= fov / 2.0).count()
        })
        .min()
        .unwrap()
}

// 2. Regime classification against the inequalities and direct counting.
fn regime_boundaries() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for _ in 0..1000 {
        let delta = rng.random_range(0.8..5.0);
        let n_px = rng.random_range(500..6000usize);
        let s = delta * n_px as f64;
        let p = rng.random_range(s.max(2000.0)..30_000.0f64.max(s * 1.01));
        let m = rng.random_range(0.01..3.0);
        let cov = classify_axis(Length::um(s), Length::um(p), m).map_err(err)?;
        let fov = s / m;
        let margin = ((fov / p) - (fov / p).round()).abs();
        if margin < 1e-6 {
            continue;
        }
        let expect = if m <= s / (2.0 * p) {
            Regime::MultiView
        } else if m <= s / p {
            Regime::Continuous
        } else {
            Regime::Tiled
        };
        ensure(cov.regime == expect, format!("δ={delta} s={s} p={p} M={m}: {:?} vs {expect:?}", cov.regime))?;
        ensure(
            (cov.overlap_fraction >= 0.0) == (expect != Regime::Tiled),
            format!("overlap sign {} disagrees with {expect:?}", cov.overlap_fraction),
        )?;
        let views = min_views(fov, p, 2 * (fov / p).ceil() as usize + 3);
        ensure(
            cov.views_per_point as usize == views,
            format!("views {} vs counted {views} at fov/p={}", cov.views_per_point, fov / p),
        )?;
        checked += 1;
    }
    ensure(checked > 950, format!("only {checked} samples away from boundaries"))?;
    // Exact boundaries.
    let (s, p) = (Length::um(3432.0), Length::mm(13.5));
    let m_c = s / p;
    ensure(classify_axis(s, p, m_c).map_err(err)?.regime == Regime::Continuous, "M = s/p must be continuous")?;
    ensure(
        classify_axis(s, p, m_c * (1.0 + 1e-9)).map_err(err)?.regime == Regime::Tiled,
        "M just above s/p must be tiled",
    )?;
    ensure(
        classify_axis(s, p, m_c / 2.0).map_err(err)?.regime == Regime::MultiView,
        "M = s/2p must be multi-view",
    )?;
    Ok(format!("{checked} random samples consistent, boundaries exact"))
}

fn target_settings() -> SceneSettings {
    SceneSettings {
        source: SceneSource::ResolutionTarget {
            groups_um: None,
            bars_per_group: 5,
            texture_seed: 7,
            texture_cell_um: None,
        },
        extent_mm: Some((30.0, 30.0)),
        sample_pitch_um: None,
    }
}

fn resolution_line(
    m: &ResolutionMeasurement,
    px: f64,
    mag: f64,
) -> Result<String, String> {
    let coarse = m.contrast_at(2.0 * px).ok_or("no group at 2δ/M")?;
    let fine = m.contrast_at(px).ok_or("no group at δ/M")?;
    ensure(coarse >= 0.26, format!("M={mag}: 2δ/M group contrast {coarse:.3} below 0.26"))?;
    ensure(fine < 0.26, format!("M={mag}: δ/M group contrast {fine:.3} reaches 0.26"))?;
    ensure(
        (m.resolved_um() - 2.0 * px).abs() < 1e-9,
        format!("M={mag}: resolved {} µm, expected {}", m.resolved_um(), 2.0 * px),
    )?;
    Ok(format!("M={mag}: {:.1}µm (C={coarse:.2}/{fine:.2})", m.resolved_um()))
}

// 3. Resolution through render, stitch and measurement at desk scale.
fn resolution_pipeline() -> Check {
    let mut out = Vec::new();
    for preset in [Preset::MultiView, Preset::Continuous] {
        let cfg = presets::desk(preset);
        let (scene, layout) = pipeline::build_scene(&target_settings(), &cfg, 30.0).map_err(err)?;
        let layout: TargetLayout = layout.ok_or("target layout missing")?;
        let set = render_array(&scene, &cfg, StageOffset::default(), 3, &RenderOptions::default()).map_err(err)?;
        let cal = calibrate(&set).map_err(err)?;
        let c = composite(&set, &cal).map_err(err)?;
        let m = measure_resolution(&c, &layout);
        out.push(resolution_line(&m, cfg.object_pixel().as_um(), cfg.magnification)?);
    }
    // Tiled: per-axis zero-overlap scan placed by nominal stage geometry.
    let cfg = presets::desk(Preset::Tiled);
    let (scene, layout) = pipeline::build_scene(&target_settings(), &cfg, 30.0).map_err(err)?;
    let layout = layout.ok_or("target layout missing")?;
    let plan = plan_tiled_scan(&cfg, 0.0, StepMode::PerAxis, true).map_err(err)?;
    let mut sets = Vec::new();
    let mut cals = Vec::new();
    for (i, &(x, y)) in plan.lateral_offsets.iter().enumerate() {
        let o = RenderOptions { exposure_id: i as u64, ..Default::default() };
        let set = render_array(&scene, &cfg, StageOffset::lateral(x, y), 3, &o).map_err(err)?;
        cals.push(nominal_calibration(&set).map_err(err)?);
        sets.push(set);
    }
    let c = acquisition::assemble_tiled_composite(&sets, &cals).map_err(err)?;
    let m = measure_resolution(&c, &layout);
    out.push(resolution_line(&m, cfg.object_pixel().as_um(), cfg.magnification)?);
    Ok(out.join(", "))
}

// 4. Stitching accuracy against known sensor misplacements.
fn stitching_accuracy() -> Check {
    let mut cfg = presets::desk(Preset::Continuous);
    let delta = cfg.sensor.pixel_pitch;
    let shifts_px = [(0.0, 0.0), (1.37, -0.62), (-2.21, 0.83), (0.54, 1.91)];
    cfg.layout.sensor_shifts = shifts_px.iter().map(|&(x, y)| (delta * x, delta * y)).collect();
    cfg.validate().map_err(err)?;
    let px = cfg.object_pixel().as_um();
    let scene = Scene::new(
        SceneContent::Noise(NoiseTexture::new(5, 8.0 * px)),
        (Length::mm(12.0), Length::mm(12.0)),
        Length::um(px / 2.0),
    )
    .map_err(err)?;
    let set = render_array(&scene, &cfg, StageOffset::default(), 4, &RenderOptions::default()).map_err(err)?;
    let cal = calibrate(&set).map_err(err)?;
    let nominal = nominal_calibration(&set).map_err(err)?;

    // Ground truth anchors: nominal plus sensor shift relative to camera 0.
    let mut sq = 0.0;
    for (k, cam) in cal.cameras.iter().enumerate() {
        let i = cfg.layout.linear(*cam);
        let truth = (
            nominal.tile_positions[k].0 + shifts_px[i].0 - shifts_px[0].0,
            nominal.tile_positions[k].1 + shifts_px[i].1 - shifts_px[0].1,
        );
        let a = cal.tile_positions[k];
        sq += (a.0 - truth.0).powi(2) + (a.1 - truth.1).powi(2);
    }
    let anchor_rms = (sq / cal.cameras.len() as f64).sqrt();
    ensure(anchor_rms < 0.2, format!("anchor RMS {anchor_rms:.4} px"))?;

    let c = composite(&set, &cal).map_err(err)?;
    let (h, w) = c.raster.dim();
    // Camera 0's misplacement moves the whole composite on the object plane.
    let e0 = (Length::um(shifts_px[0].0 * px), Length::um(shifts_px[0].1 * px));
    let truth = scene.sample_grid((c.origin.0 + e0.0, c.origin.1 + e0.1), c.pixel_size, (h, w));
    let (mut se, mut n, mut lo, mut hi) = (0.0, 0.0, f64::INFINITY, f64::NEG_INFINITY);
    for ((r, col), &covered) in c.covered.indexed_iter() {
        if !covered {
            continue;
        }
        let t = truth[[r, col]] as f64;
        se += (c.raster[[r, col]] as f64 - t).powi(2);
        n += 1.0;
        lo = lo.min(t);
        hi = hi.max(t);
    }
    let rel = (se / n).sqrt() / (hi - lo);
    ensure(rel < 0.02, format!("composite RMS {:.3}% of range", 100.0 * rel))?;

    let tiles = calibrated_tiles(&set, &cal).map_err(err)?;
    let ramps = feather_ramps(&tiles);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20_000 {
        let (u, v) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
        let wts = feather_weights(&tiles, ramps, u, v);
        if !wts.is_empty() {
            worst = worst.max((wts.iter().map(|e| e.1).sum::<f64>() - 1.0).abs());
        }
    }
    ensure(worst < 1e-12, format!("feather weights deviate from 1 by {worst:e}"))?;
    Ok(format!("anchor RMS {anchor_rms:.3} px, composite RMS {:.2}%, Σw-1 ≤ {worst:.1e}", 100.0 * rel))
}

fn sweep_scene(cfg: &ArrayConfig) -> Result<Scene, String> {
    let px = cfg.object_pixel().as_um();
    Scene::new(
        SceneContent::Noise(NoiseTexture::new(41, 8.0 * px)),
        (Length::mm(20.0), Length::mm(20.0)),
        Length::um(px / 2.0),
    )
    .map_err(err)
}

// 5. Depth sweep over ±3 mm.
fn depth_sweep() -> Check {
    let cfg = presets::prototype(0.1);
    let pair = central_pair(&cfg).map_err(err)?;
    let scene = sweep_scene(&cfg)?;

    // Height per pixel of total disparity at the working distance.
    let depth = cfg.object_distance().as_um();
    let sens = depth * depth * cfg.sensor.pixel_pitch.as_um() / (cfg.layout.pitch_x.as_um() * cfg.image_distance().as_um());
    ensure((sens - 224.5).abs() < 1.0, format!("sensitivity {sens:.1} µm/px"))?;

    // Matcher precision: total disparity against the exact projection.
    let opts = MatchOptions::default();
    let (roi_a, roi_b) = shared_windows(&cfg, pair, 256);
    let shot = |z: f64, cam, roi: Roi| -> Result<CameraFrame, String> {
        let s = scene.clone().with_height(HeightField::Flat(Length::um(z)));
        let o = RenderOptions { rois: RoiSelection::All(roi), ..Default::default() };
        render_camera(&s, &cfg, cam, StageOffset::default(), 5, &o).map_err(err)
    };
    let cal = DepthCalibration::from_focus_pair(&shot(0.0, pair.0, roi_a)?, &shot(0.0, pair.1, roi_b)?, &cfg, Length::ZERO, &opts)
        .map_err(err)?;
    // Precision is measured on inliers; gross false matches are counted
    // separately and left to the median.
    let (mut se, mut n, mut total) = (0.0, 0.0, 0.0);
    for z in [-3000.0, -1200.0, 1700.0, 3000.0] {
        let set = match_features(&shot(z, pair.0, roi_a)?, &shot(z, pair.1, roi_b)?, &cfg, &cal, &opts).map_err(err)?;
        let expect = set.baseline_um() * cfg.image_distance().as_um() / (depth - z) / set.pixel_um;
        for m in &set.matches {
            let (d1, d2) = set.disparities(m);
            let r = d1 + d2 - expect;
            total += 1.0;
            if r.abs() < 1.0 {
                se += r * r;
                n += 1.0;
            }
        }
    }
    let precision = (se / n).sqrt();
    let outliers = 1.0 - n / total;
    ensure(precision <= 0.2, format!("matcher precision {precision:.3} px"))?;
    ensure(outliers <= 0.05, format!("{:.1}% of matches are off by a pixel or more", 100.0 * outliers))?;

    let sweep = SweepOptions { step: Length::um(100.0), pair, seed: 5, ..Default::default() };
    let report = run_depth_sweep(&cfg, &scene, &sweep).map_err(err)?;
    ensure(report.planes.len() == 61, format!("{} planes", report.planes.len()))?;
    ensure(report.rmse_um <= 50.0, format!("rendered RMSE {:.2} µm", report.rmse_um))?;
    let planes = sweep_planes(sweep.z_min, sweep.z_max, sweep.step).map_err(err)?;
    let analytic = analytic_sweep(&cfg, &planes, pair).map_err(err)?;
    // Exact up to floating-point round-off of the projection and its inverse.
    ensure(analytic.rmse_um < 1e-9, format!("analytic RMSE {:e} µm", analytic.rmse_um))?;
    Ok(format!(
        "RMSE {:.2} µm over 61 planes, matcher {precision:.3} px ({:.1}% outliers), analytic {:.1e} µm, {sens:.0} µm/px",
        report.rmse_um,
        100.0 * outliers,
        analytic.rmse_um
    ))
}

// 6. Scan plans and their coverage.
fn tiled_coverage() -> Check {
    let cfg = presets::prototype(1.0);
    let r_pix = cfg.object_pixel() * 2.0;
    let mut out = Vec::new();
    for (overlap, mode, expect) in [(0.1, StepMode::UniformShortAxis, 25), (0.0, StepMode::PerAxis, 12)] {
        let plan = plan_tiled_scan(&cfg, overlap, mode, true).map_err(err)?;
        ensure(plan.len() == expect, format!("{mode:?}: {} positions, expected {expect}", plan.len()))?;
        let t = plan.max_travel();
        ensure(t.0.as_mm() <= 13.5 && t.1.as_mm() <= 13.5, format!("travel {t:?}"))?;
        let rep = check_coverage(&cfg, &plan, r_pix / 2.0).map_err(err)?;
        ensure(rep.complete(), format!("{mode:?}: {} uncovered samples", rep.uncovered))?;
        out.push(format!("{expect} positions, travel {:.2}/{:.2} mm", t.0.as_mm(), t.1.as_mm()));
    }
    Ok(out.join("; "))
}

// 7. Best-slice selection on synthetic stacks.
fn focus_selection() -> Check {
    let mut cfg = presets::desk(Preset::Tiled);
    cfg.layout = ArrayLayout::new(1, 1, cfg.layout.pitch_x, cfg.layout.pitch_y);
    let px = cfg.object_pixel().as_um();
    let roi = Roi::centered(&cfg, cfg.sensor.pixels_x as f64 / 2.0, cfg.sensor.pixels_y as f64 / 2.0, 128, 128);
    let cam = CameraIndex::new(0, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut correct, mut invariant) = (0, 0);
    for trial in 0..100u64 {
        let k = rng.random_range(0..10usize);
        let surface = (k as f64 - 4.5) * 10.0;
        let scene = Scene::new(
            SceneContent::Noise(NoiseTexture::new(1000 + trial, 2.0 * px)),
            (Length::mm(2.0), Length::mm(2.0)),
            Length::um(px / 2.0),
        )
        .map_err(err)?
        .with_height(HeightField::Flat(Length::um(surface)));
        let frames = (0..10)
            .map(|i| {
                let z = Length::um((i as f64 - 4.5) * 10.0);
                let o = RenderOptions {
                    noise_std: 0.002,
                    exposure_id: trial * 10 + i,
                    rois: RoiSelection::All(roi),
                    ..Default::default()
                };
                render_camera(&scene, &cfg, cam, StageOffset::axial(z), 8, &o).map_err(err)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&CameraFrame> = frames.iter().collect();
        let d = select_focus(&refs).map_err(err)?;
        if d.chosen == k {
            correct += 1;
        }
        let (a, b) = (rng.random_range(0.2..5.0f32), rng.random_range(-1.0..1.0f32));
        let mapped: Vec<CameraFrame> = frames
            .iter()
            .map(|f| CameraFrame { pixels: f.pixels.mapv(|v| a * v + b), ..f.clone() })
            .collect();
        let refs: Vec<&CameraFrame> = mapped.iter().collect();
        if select_focus(&refs).map_err(err)?.chosen == d.chosen {
            invariant += 1;
        }
    }
    ensure(correct >= 99, format!("{correct}/100 correct"))?;
    ensure(invariant == 100, format!("affine map changed the choice in {} trials", 100 - invariant))?;
    Ok(format!("{correct}/100 correct, affine-invariant in {invariant}/100"))
}

// 8. Data-path arithmetic.
fn throughput_arithmetic() -> Check {
    let sensor = presets::prototype_sensor();
    let full = frame_bytes(&sensor, 54, 1, None).map_err(err)?;
    ensure(full == 708_963_840, format!("frame bytes {full}"))?;
    let fps = |b: u64| max_frame_rate(b, 5e9).map_err(err);
    let base = fps(full)?;
    let binned = fps(frame_bytes(&sensor, 54, 2, None).map_err(err)?)?;
    let crop = fps(frame_bytes(&sensor, 54, 1, Some((3072, 3072))).map_err(err)?)?;
    ensure(format!("{base:.2}") == "7.05", format!("full-frame rate {base}"))?;
    ensure(format!("{binned:.1}") == "28.2", format!("binned rate {binned}"))?;
    ensure(format!("{crop:.1}") == "9.8", format!("cropped rate {crop}"))?;
    let r = throughput_report(&sensor, 54, 1, None, DataPath::default()).map_err(err)?;
    ensure(r.buffer_frames == 180, format!("buffer frames {}", r.buffer_frames))?;
    Ok(format!("{full} B, {base:.2}/{binned:.1}/{crop:.1} fps"))
}

fn tree(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

// 9. Byte-identical outputs regardless of thread count.
fn determinism() -> Check {
    let root = tempfile::tempdir().map_err(err)?;
    let text = r#"{"noise_std": 0.01}"#;
    let mut trees = Vec::new();
    for threads in [1, 8] {
        let dir = root.path().join(format!("t{threads}"));
        let o = Overrides {
            mode: Some(Mode::Pipeline),
            output_dir: Some(dir.clone()),
            seed: Some(11),
            threads: Some(threads),
            ..Default::default()
        };
        let cfg = pipeline::validate_config(Some(text), &o).map_err(err)?;
        pipeline::run(&cfg).map_err(err)?;
        trees.push(tree(&dir));
    }
    ensure(!trees[0].is_empty(), "no files written")?;
    let names: Vec<&String> = trees[0].iter().map(|t| &t.0).collect();
    ensure(
        names == trees[1].iter().map(|t| &t.0).collect::<Vec<_>>(),
        "file lists differ",
    )?;
    if let Some((a, _)) = trees[0].iter().zip(&trees[1]).find(|(a, b)| a.1 != b.1) {
        return Err(format!("{} differs between thread counts", a.0));
    }
    Ok(format!("{} files identical with 1 and 8 threads", trees[0].len()))
}

type Criterion = (u32, &'static str, fn() -> Check, Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "design table", table_one, Duration::from_secs(1)),
        (2, "regime boundaries", regime_boundaries, Duration::from_secs(5)),
        (3, "resolution pipeline", resolution_pipeline, Duration::from_secs(120)),
        (4, "stitching accuracy", stitching_accuracy, Duration::from_secs(60)),
        (5, "depth sweep", depth_sweep, Duration::from_secs(180)),
        (6, "tiled coverage", tiled_coverage, Duration::from_secs(10)),
        (7, "focus selection", focus_selection, Duration::from_secs(60)),
        (8, "throughput arithmetic", throughput_arithmetic, Duration::from_secs(1)),
        (9, "determinism", determinism, Duration::from_secs(120)),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check, budget) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let result = check();
        let took = t.elapsed();
        let (status, detail) = match result {
            Ok(d) if took <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the {budget:?} budget")),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {id} [{name}]: {status} ({:.2}s) {detail}", took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
