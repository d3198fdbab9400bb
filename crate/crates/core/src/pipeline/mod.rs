//! End-to-end runs driven by a [`RunConfig`]: every mode writes its
//! artifacts through one [`Artifacts`] committer and finishes with a
//! manifest of file hashes.

pub mod config;

pub use config::{validate_config, FocusSettings, Mode, Overrides, RunConfig, SceneSettings, SceneSource, SweepSettings};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::acquisition::{
    apply_focus, assemble_tiled_composite, check_coverage, plan_tiled_scan, select_focus_sets, throughput_report,
};
use crate::array_model::{design_report, ArrayConfig, CameraIndex, Regime};
use crate::depth3d::{
    analytic_sweep, build_height_map, match_features, run_depth_sweep, shared_windows, sweep_planes, DepthCalibration,
    MatchOptions, SweepOptions,
};
use crate::error::{McamError, Result};
use crate::io::{import_scene_png, Artifacts, Manifest, SceneSidecar};
use crate::presets::desk_scale;
use crate::registration::{
    build_pyramid, calibrate, composite, measure_resolution, nominal_calibration, Composite, CompositeInfo,
    ResolutionMeasurement,
};
use crate::scene_sim::{
    make_resolution_target, render_array, render_camera, render_focal_stack, HeightField, NoiseTexture, RenderOptions,
    ResolutionTargetSpec, RoiSelection, Scene, SceneContent, StageOffset, TargetBackground, TargetLayout,
};
use crate::units::Length;

/// What a run produced. Contains no timings so repeated runs compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub config_sha256: String,
    /// Entries in the run's manifest.
    pub files: usize,
    pub details: Value,
}

/// Execute `cfg` on a dedicated thread pool.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| McamError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let (manifest, details) = run_mode(cfg, &cfg.output_dir)?;
        Ok(RunSummary {
            mode: cfg.mode,
            output_dir: cfg.output_dir.clone(),
            config_sha256: manifest.config_sha256.clone(),
            files: manifest.files.len(),
            details,
        })
    })
}

fn run_mode(cfg: &RunConfig, dir: &Path) -> Result<(Manifest, Value)> {
    let mut art = Artifacts::create(dir)?;
    let details = match cfg.mode {
        Mode::Design => design(cfg, &mut art)?,
        Mode::Render => render(cfg, &mut art)?,
        Mode::Stitch => stitch(cfg, &mut art)?,
        Mode::Depth => depth(cfg, &mut art)?,
        Mode::Tiled => tiled(cfg, &mut art)?,
        Mode::Throughput => throughput(cfg, &mut art)?,
        Mode::Pipeline => pipeline(cfg, &mut art)?,
    };
    art.write_json("summary.json", &details)?;
    let manifest = art.finish(cfg.mode.name(), &cfg.hash())?;
    Ok((manifest, details))
}

/// Geometry that gets rendered: the 2×2 desk-scale sub-array or the full array.
pub fn working_array(cfg: &RunConfig) -> Result<ArrayConfig> {
    if cfg.desk {
        desk_scale(&cfg.array, 2, 2, 342)
    } else {
        Ok(cfg.array.clone())
    }
}

/// Build the configured scene for `array`. Returns the target layout when the
/// scene is a resolution target.
pub fn build_scene(
    settings: &SceneSettings,
    array: &ArrayConfig,
    default_extent_mm: f64,
) -> Result<(Scene, Option<TargetLayout>)> {
    let px = array.object_pixel().as_um();
    let extent_mm = settings.extent_mm.unwrap_or((default_extent_mm, default_extent_mm));
    let extent = (Length::mm(extent_mm.0), Length::mm(extent_mm.1));
    let pitch = Length::um(settings.sample_pitch_um.unwrap_or(px / 2.0));
    match &settings.source {
        SceneSource::ResolutionTarget {
            groups_um,
            bars_per_group,
            texture_seed,
            texture_cell_um,
        } => {
            let groups = groups_um.clone().unwrap_or_else(|| vec![8.0 * px, 4.0 * px, 2.0 * px, px]);
            let mut spec = ResolutionTargetSpec::new(groups.into_iter().map(Length::um).collect(), *bars_per_group);
            spec.background = TargetBackground::Texture {
                seed: *texture_seed,
                cell_um: texture_cell_um.unwrap_or(8.0 * px),
            };
            let (scene, layout) = make_resolution_target(&spec, extent, pitch)?;
            Ok((scene, Some(layout)))
        }
        SceneSource::Noise { seed, cell_um } => {
            let content = SceneContent::Noise(NoiseTexture::new(*seed, cell_um.unwrap_or(8.0 * px)));
            Ok((Scene::new(content, extent, pitch)?, None))
        }
        SceneSource::Checker { period_um } => {
            let content = SceneContent::Checker { period: *period_um, low: 0.2, high: 0.8 };
            Ok((Scene::new(content, extent, pitch)?, None))
        }
        SceneSource::Png { path, metadata_path } => {
            let text = std::fs::read_to_string(metadata_path).map_err(|e| McamError::io(metadata_path, e))?;
            let sidecar: SceneSidecar = serde_json::from_str(&text)?;
            Ok((import_scene_png(path, &sidecar)?, None))
        }
    }
}

fn resolution_csv(m: &ResolutionMeasurement) -> String {
    let mut out = String::from("spacing_um,orientation,contrast\n");
    for g in &m.groups {
        let o = serde_json::to_value(g.orientation).ok();
        let o = o.as_ref().and_then(Value::as_str).unwrap_or("unknown");
        out.push_str(&format!("{:.6},{o},{:.6}\n", g.spacing_um, g.contrast));
    }
    match m.resolved {
        Some(r) => out.push_str(&format!("resolved_um,,{:.6}\n", r.as_um())),
        None => out.push_str("resolved_um,,none\n"),
    }
    out
}

fn write_composite(cfg: &RunConfig, art: &mut Artifacts, c: &Composite) -> Result<Value> {
    art.write_image("composite.png", &c.raster, 16)?;
    let pyramid = build_pyramid(&c.raster, cfg.tile_px)?;
    let pm = art.write_pyramid("pyramid", &pyramid, c)?;
    let info = CompositeInfo::from(c);
    art.write_json("composite.json", &info)?;
    Ok(json!({ "composite": info, "pyramid_levels": pm.levels.len() }))
}

fn design(cfg: &RunConfig, art: &mut Artifacts) -> Result<Value> {
    let report = design_report(&cfg.array);
    let mut csv = String::from("axis,regime,overlap_fraction,fov_mm,r_pix_um\n");
    for r in &report.rows {
        csv.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            r.axis,
            r.regime.name(),
            r.overlap_fraction,
            r.fov_mm,
            r.r_pix_um
        ));
    }
    art.write_text("design.csv", &csv)?;
    art.write_json("design.json", &report)?;
    Ok(json!({
        "regime": report.regime.name(),
        "r_pix_um": report.r_pix.as_um(),
        "camera_fov_mm": [report.camera_fov.0.as_mm(), report.camera_fov.1.as_mm()],
        "cameras": report.cameras,
    }))
}

fn render(cfg: &RunConfig, art: &mut Artifacts) -> Result<Value> {
    let seed = cfg.seed()?;
    let array = working_array(cfg)?;
    let (scene, _) = build_scene(&cfg.scene, &array, 30.0)?;
    let opts = RenderOptions { noise_std: cfg.noise_std, binning: cfg.binning, ..Default::default() };
    let set = render_array(&scene, &array, StageOffset::default(), seed, &opts)?;
    let records = art.write_frame_set("frames", &set)?;
    art.write_json("array.json", &array)?;
    Ok(json!({ "frames": records.len(), "regime": array.regime().name() }))
}

fn stitch(cfg: &RunConfig, art: &mut Artifacts) -> Result<Value> {
    let seed = cfg.seed()?;
    let array = working_array(cfg)?;
    let (scene, layout) = build_scene(&cfg.scene, &array, 30.0)?;
    let opts = RenderOptions { noise_std: cfg.noise_std, ..Default::default() };
    let set = render_array(&scene, &array, StageOffset::default(), seed, &opts)?;
    let cal = calibrate(&set)?;
    art.write_text("calibration.txt", &cal.to_record())?;
    let c = composite(&set, &cal)?;
    let mut details = write_composite(cfg, art, &c)?;
    details["residual_rms_px"] = json!(cal.residual_rms);
    if let Some(layout) = layout {
        let m = measure_resolution(&c, &layout);
        art.write_text("resolution.csv", &resolution_csv(&m))?;
        details["resolved_um"] = json!(m.resolved.map(|r| r.as_um()));
    }
    Ok(details)
}

/// The horizontally adjacent pair nearest the array centre.
pub fn central_pair(array: &ArrayConfig) -> Result<(CameraIndex, CameraIndex)> {
    let l = &array.layout;
    if l.cols < 2 {
        return Err(McamError::Config("depth needs at least two columns of cameras".into()));
    }
    let row = (l.rows - 1) / 2;
    let col = (l.cols - 2) / 2;
    Ok((CameraIndex::new(row, col), CameraIndex::new(row, col + 1)))
}

fn depth(cfg: &RunConfig, art: &mut Artifacts) -> Result<Value> {
    let seed = cfg.seed()?;
    let array = &cfg.array;
    if array.regime() != Regime::MultiView {
        return Err(McamError::Regime(format!("depth needs a multi-view array, got {}", array.regime().name())));
    }
    let pair = central_pair(array)?;
    let settings = match cfg.scene.source {
        SceneSource::ResolutionTarget { .. } => SceneSettings {
            source: SceneSource::Noise { seed: 41, cell_um: None },
            ..cfg.scene.clone()
        },
        _ => cfg.scene.clone(),
    };
    let (scene, _) = build_scene(&settings, array, 20.0)?;
    let opts = SweepOptions {
        z_min: Length::mm(cfg.sweep.z_min_mm),
        z_max: Length::mm(cfg.sweep.z_max_mm),
        step: Length::um(cfg.sweep.step_um),
        pair,
        roi_px: cfg.sweep.roi_px,
        noise_std: cfg.noise_std,
        seed,
        matching: MatchOptions::default(),
    };
    let report = run_depth_sweep(array, &scene, &opts)?;
    art.write_text("depth.csv", &report.to_csv()?)?;
    let planes = sweep_planes(opts.z_min, opts.z_max, opts.step)?;
    let analytic = analytic_sweep(array, &planes, pair)?;

    // Height map of a tilted plane, level at the pair's midpoint.
    let (aa, ab) = (array.camera_axis(pair.0), array.camera_axis(pair.1));
    let mid_x = ((aa.0 + ab.0) / 2.0).as_um();
    let side = (2 * cfg.sweep.roi_px).min(array.sensor.pixels_x).min(array.sensor.pixels_y);
    let (roi_a, roi_b) = shared_windows(array, pair, side);
    let shot = |s: &Scene, cam, roi, exposure| {
        let o = RenderOptions {
            noise_std: cfg.noise_std,
            exposure_id: exposure,
            rois: RoiSelection::All(roi),
            ..Default::default()
        };
        render_camera(s, array, cam, StageOffset::default(), seed, &o)
    };
    let flat = scene.clone().with_height(HeightField::Flat(Length::ZERO));
    let (fa, fb) = (shot(&flat, pair.0, roi_a, 0)?, shot(&flat, pair.1, roi_b, 0)?);
    let cal = DepthCalibration::from_focus_pair(&fa, &fb, array, Length::ZERO, &MatchOptions::default())?;
    let tilted = scene.with_height(HeightField::Plane {
        h0: Length::um(-cfg.sweep.tilt * mid_x),
        gx: cfg.sweep.tilt,
        gy: 0.0,
    });
    let exposure = planes.len() as u64 + 1;
    let (ta, tb) = (shot(&tilted, pair.0, roi_a, exposure)?, shot(&tilted, pair.1, roi_b, exposure)?);
    let set = match_features(&ta, &tb, array, &cal, &MatchOptions::default())?;
    let map = build_height_map(std::slice::from_ref(&set), &cal, array, cfg.height_map_pitch_um)?;
    art.write_height_map("heightmap", &map)?;
    let fit = map.plane_fit();

    Ok(json!({
        "planes": report.planes.len(),
        "rmse_um": report.rmse_um,
        "analytic_rmse_um": analytic.rmse_um,
        "height_map_valid_cells": map.valid_count(),
        "height_map_slope_x": fit.map(|f| f.1),
        "true_slope_x": cfg.sweep.tilt,
    }))
}

/// Focal offsets of the axial stack, centred on the nominal focal plane.
pub fn focus_offsets(f: &FocusSettings) -> Vec<Length> {
    let c = (f.slices as f64 - 1.0) / 2.0;
    (0..f.slices).map(|i| Length::um((i as f64 - c) * f.step_um)).collect()
}

fn tiled(cfg: &RunConfig, art: &mut Artifacts) -> Result<Value> {
    let seed = cfg.seed()?;
    let array = working_array(cfg)?;
    let axial = focus_offsets(&cfg.focus);
    let plan =
        plan_tiled_scan(&array, cfg.overlap, cfg.step_mode, cfg.serpentine)?.with_axial(axial.clone())?;
    art.write_text("plan.csv", &plan.to_csv()?)?;
    let (scene, layout) = build_scene(&cfg.scene, &array, 30.0)?;
    let scene = scene.with_height(HeightField::Flat(Length::um(cfg.focus.surface_um)));

    let mut fused = Vec::with_capacity(plan.len());
    let mut calibrations = Vec::with_capacity(plan.len());
    let mut focus_csv = String::from("position,row,col,chosen,z_um,featureless\n");
    for (i, &lateral) in plan.lateral_offsets.iter().enumerate() {
        let opts = RenderOptions {
            noise_std: cfg.noise_std,
            exposure_id: (i * axial.len()) as u64,
            ..Default::default()
        };
        let stack = render_focal_stack(&scene, &array, lateral, &axial, seed, &opts)?;
        let decisions = select_focus_sets(&stack)?;
        for d in &decisions {
            focus_csv.push_str(&format!(
                "{i},{},{},{},{:.6},{}\n",
                d.camera.row,
                d.camera.col,
                d.chosen,
                axial[d.chosen].as_um(),
                d.featureless
            ));
        }
        let set = apply_focus(&stack, &decisions)?;
        calibrations.push(nominal_calibration(&set)?);
        fused.push(set);
    }
    art.write_text("focus.csv", &focus_csv)?;
    let c = assemble_tiled_composite(&fused, &calibrations)?;
    let mut details = write_composite(cfg, art, &c)?;
    let coverage = check_coverage(&array, &plan, array.object_pixel())?;
    art.write_json("coverage.json", &coverage)?;
    details["positions"] = json!(plan.len());
    details["coverage_complete"] = json!(coverage.complete());
    if let Some(layout) = layout {
        let m = measure_resolution(&c, &layout);
        art.write_text("resolution.csv", &resolution_csv(&m))?;
        details["resolved_um"] = json!(m.resolved.map(|r| r.as_um()));
    }
    Ok(details)
}

fn throughput(cfg: &RunConfig, art: &mut Artifacts) -> Result<Value> {
    let report = throughput_report(
        &cfg.array.sensor,
        cfg.array.layout.camera_count(),
        cfg.binning,
        cfg.crop_px,
        cfg.data_path,
    )?;
    art.write_text("throughput.csv", &report.to_csv()?)?;
    art.write_json("throughput.json", &report)?;
    Ok(serde_json::to_value(&report)?)
}

/// Modes the full pipeline chains for an array in `regime`.
pub fn pipeline_stages(regime: Regime) -> Vec<Mode> {
    let mut stages = vec![Mode::Design, Mode::Throughput];
    match regime {
        Regime::MultiView => stages.extend([Mode::Stitch, Mode::Depth]),
        Regime::Continuous => stages.push(Mode::Stitch),
        Regime::Tiled => stages.push(Mode::Tiled),
    }
    stages
}

fn pipeline(cfg: &RunConfig, art: &mut Artifacts) -> Result<Value> {
    cfg.seed()?;
    let mut details = serde_json::Map::new();
    for mode in pipeline_stages(cfg.array.regime()) {
        let name = mode.name();
        let sub = cfg.for_mode(mode, art.root().join(name));
        let (manifest, d) = run_mode(&sub, &sub.output_dir)?;
        art.absorb(name, &manifest)?;
        details.insert(name.to_string(), d);
    }
    Ok(Value::Object(details))
}
