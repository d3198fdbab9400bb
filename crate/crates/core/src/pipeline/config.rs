//! Run configuration: a JSON document with unit-suffixed keys.
//!
//! Parsing is strict. Unknown keys, wrong types and out-of-range values are
//! all collected and reported together as [`McamError::Validation`].
//! Precedence, lowest first: built-in defaults, the named preset, explicit
//! keys in the document, command-line overrides.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::acquisition::DataPath;
use crate::array_model::{ArrayConfig, StepMode};
use crate::error::{FieldError, McamError, Result};
use crate::presets::Preset;
use crate::units::Length;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Design,
    Render,
    Stitch,
    Depth,
    Tiled,
    Throughput,
    Pipeline,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Design,
        Mode::Render,
        Mode::Stitch,
        Mode::Depth,
        Mode::Tiled,
        Mode::Throughput,
        Mode::Pipeline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Design => "design",
            Mode::Render => "render",
            Mode::Stitch => "stitch",
            Mode::Depth => "depth",
            Mode::Tiled => "tiled",
            Mode::Throughput => "throughput",
            Mode::Pipeline => "pipeline",
        }
    }

    pub fn from_name(name: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Modes that render frames and therefore need a seed.
    pub fn is_stochastic(self) -> bool {
        !matches!(self, Mode::Design | Mode::Throughput)
    }
}

/// Where the object comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SceneSource {
    /// Bar groups over a random texture. Spacings default to 8, 4, 2 and 1
    /// object pixels.
    ResolutionTarget {
        groups_um: Option<Vec<f64>>,
        bars_per_group: usize,
        texture_seed: u64,
        texture_cell_um: Option<f64>,
    },
    /// Multi-octave random texture; the finest cell defaults to 8 object pixels.
    Noise { seed: u64, cell_um: Option<f64> },
    Checker { period_um: f64 },
    /// Grayscale PNG with its sidecar record.
    Png { path: PathBuf, metadata_path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSettings {
    pub source: SceneSource,
    /// Defaults to 30×30 mm (20×20 mm for depth runs).
    pub extent_mm: Option<(f64, f64)>,
    /// Defaults to half the object-side pixel.
    pub sample_pitch_um: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub z_min_mm: f64,
    pub z_max_mm: f64,
    pub step_um: f64,
    pub roi_px: usize,
    /// Slope of the tilted surface used for the height map.
    pub tilt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusSettings {
    pub slices: usize,
    pub step_um: f64,
    /// Height of the object surface relative to the nominal focal plane.
    pub surface_um: f64,
}

/// A validated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub preset: Preset,
    pub array: ArrayConfig,
    /// Render a 2×2 desk-scale sub-array instead of the full array.
    pub desk: bool,
    pub scene: SceneSettings,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    /// Worker threads, 0 = one per core.
    pub threads: usize,
    pub noise_std: f64,
    pub overlap: f64,
    pub step_mode: StepMode,
    pub serpentine: bool,
    pub binning: usize,
    pub crop_px: Option<(usize, usize)>,
    pub data_path: DataPath,
    pub sweep: SweepSettings,
    pub focus: FocusSettings,
    pub tile_px: usize,
    pub height_map_pitch_um: f64,
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form, ignoring where the output goes and
    /// how many threads produce it.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.threads = 0;
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| McamError::Validation(vec![FieldError::new("seed", "required for this mode")]))
    }

    /// Copy with a different mode and output directory.
    pub fn for_mode(&self, mode: Mode, output_dir: PathBuf) -> RunConfig {
        RunConfig {
            mode,
            output_dir,
            ..self.clone()
        }
    }
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub preset: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub overlap: Option<f64>,
    pub binning: Option<usize>,
    pub efficiency: Option<f64>,
    pub threads: Option<usize>,
}

impl Overrides {
    fn apply(&self, obj: &mut Map<String, Value>) {
        let mut set = |k: &str, v: Value| {
            obj.insert(k.to_string(), v);
        };
        if let Some(m) = self.mode {
            set("mode", Value::from(m.name()));
        }
        if let Some(p) = &self.preset {
            set("preset", Value::from(p.as_str()));
        }
        if let Some(o) = &self.output_dir {
            set("output_dir", Value::from(o.to_string_lossy().into_owned()));
        }
        if let Some(s) = self.seed {
            set("seed", Value::from(s));
        }
        if let Some(o) = self.overlap {
            set("overlap", Value::from(o));
        }
        if let Some(b) = self.binning {
            set("binning", Value::from(b));
        }
        if let Some(e) = self.efficiency {
            set("efficiency", Value::from(e));
        }
        if let Some(t) = self.threads {
            set("threads", Value::from(t));
        }
    }
}

/// Typed access to one JSON object that remembers every problem.
struct Section<'a> {
    obj: Map<String, Value>,
    prefix: String,
    errors: &'a mut Vec<FieldError>,
}

impl<'a> Section<'a> {
    fn new(value: Value, prefix: &str, errors: &'a mut Vec<FieldError>) -> Option<Section<'a>> {
        match value {
            Value::Object(obj) => Some(Section {
                obj,
                prefix: prefix.to_string(),
                errors,
            }),
            _ => {
                errors.push(FieldError::new(prefix.trim_end_matches('.'), "expected an object"));
                None
            }
        }
    }

    fn path(&self, key: &str) -> String {
        format!("{}{key}", self.prefix)
    }

    fn take<T: DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        let v = self.obj.remove(key)?;
        match serde_json::from_value(v) {
            Ok(t) => Some(t),
            Err(e) => {
                let field = self.path(key);
                self.errors.push(FieldError::new(field, e.to_string()));
                None
            }
        }
    }

    fn take_raw(&mut self, key: &str) -> Option<Value> {
        self.obj.remove(key)
    }

    fn error(&mut self, key: &str, message: impl Into<String>) {
        let field = self.path(key);
        self.errors.push(FieldError::new(field, message));
    }

    /// Report whatever was not consumed.
    fn finish(self) {
        let mut keys: Vec<String> = self.obj.keys().cloned().collect();
        keys.sort();
        for k in keys {
            self.errors.push(FieldError::new(format!("{}{k}", self.prefix), "unknown key"));
        }
    }
}

fn positive(s: &mut Section, key: &str, v: Option<f64>) -> Option<f64> {
    match v {
        Some(x) if !(x > 0.0) || !x.is_finite() => {
            s.error(key, format!("domain: must be positive, got {x}"));
            None
        }
        other => other,
    }
}

/// Merge explicit `array` keys over the preset configuration.
fn merge_array(base: &ArrayConfig, value: Value, errors: &mut Vec<FieldError>) -> ArrayConfig {
    let mut cfg = base.clone();
    let Some(mut s) = Section::new(value, "array.", errors) else { return cfg };
    if let Some(v) = s.take::<usize>("rows") {
        cfg.layout.rows = v;
    }
    if let Some(v) = s.take::<usize>("cols") {
        cfg.layout.cols = v;
    }
    let pitch = s.take::<f64>("pitch_mm");
    if let Some(v) = positive(&mut s, "pitch_mm", pitch) {
        cfg.layout.pitch_x = Length::mm(v);
        cfg.layout.pitch_y = Length::mm(v);
    }
    let pitch_y = s.take::<f64>("pitch_y_mm");
    if let Some(v) = positive(&mut s, "pitch_y_mm", pitch_y) {
        cfg.layout.pitch_y = Length::mm(v);
    }
    let pixel = s.take::<f64>("pixel_um");
    if let Some(v) = positive(&mut s, "pixel_um", pixel) {
        cfg.sensor.pixel_pitch = Length::um(v);
    }
    if let Some(v) = s.take::<usize>("pixels_x") {
        cfg.sensor.pixels_x = v;
    }
    if let Some(v) = s.take::<usize>("pixels_y") {
        cfg.sensor.pixels_y = v;
    }
    if let Some(v) = s.take::<u32>("bit_depth") {
        cfg.sensor.bit_depth = v;
    }
    let focal = s.take::<f64>("focal_length_mm");
    if let Some(v) = positive(&mut s, "focal_length_mm", focal) {
        cfg.lens.focal_length = Length::mm(v);
    }
    let f_number = s.take::<f64>("f_number");
    if let Some(v) = positive(&mut s, "f_number", f_number) {
        cfg.lens.f_number = v;
    }
    let diameter = s.take::<f64>("lens_diameter_mm");
    if let Some(v) = positive(&mut s, "lens_diameter_mm", diameter) {
        cfg.lens.outer_diameter = Length::mm(v);
    }
    let m = s.take::<f64>("magnification");
    if let Some(v) = positive(&mut s, "magnification", m) {
        cfg.magnification = v;
    }
    s.finish();
    cfg
}

fn parse_scene(value: Option<Value>, errors: &mut Vec<FieldError>) -> SceneSettings {
    let default_target = SceneSource::ResolutionTarget {
        groups_um: None,
        bars_per_group: 5,
        texture_seed: 7,
        texture_cell_um: None,
    };
    let mut out = SceneSettings {
        source: default_target,
        extent_mm: None,
        sample_pitch_um: None,
    };
    let Some(value) = value else { return out };
    let Some(mut s) = Section::new(value, "scene.", errors) else { return out };
    let kind = s.take::<String>("kind").unwrap_or_else(|| "resolution_target".into());
    out.extent_mm = s.take("extent_mm");
    if let Some((x, y)) = out.extent_mm {
        if !(x > 0.0 && y > 0.0) {
            s.error("extent_mm", "domain: extents must be positive");
        }
    }
    let pitch = s.take::<f64>("sample_pitch_um");
    out.sample_pitch_um = positive(&mut s, "sample_pitch_um", pitch);
    out.source = match kind.as_str() {
        "resolution_target" => {
            let groups_um: Option<Vec<f64>> = s.take("groups_um");
            if let Some(g) = &groups_um {
                if g.is_empty() || g.windows(2).any(|w| w[1] >= w[0]) || g.iter().any(|v| !(*v > 0.0)) {
                    s.error("groups_um", "spacings must be positive and strictly decreasing");
                }
            }
            let bars_per_group = s.take("bars_per_group").unwrap_or(5);
            if bars_per_group == 0 {
                s.error("bars_per_group", "must be at least 1");
            }
            let cell = s.take::<f64>("cell_um");
            SceneSource::ResolutionTarget {
                groups_um,
                bars_per_group,
                texture_seed: s.take("seed").unwrap_or(7),
                texture_cell_um: positive(&mut s, "cell_um", cell),
            }
        }
        "noise" => {
            let cell = s.take::<f64>("cell_um");
            SceneSource::Noise {
                seed: s.take("seed").unwrap_or(41),
                cell_um: positive(&mut s, "cell_um", cell),
            }
        }
        "checker" => {
            let period = s.take::<f64>("period_um");
            SceneSource::Checker {
                period_um: positive(&mut s, "period_um", period).unwrap_or(100.0),
            }
        }
        "png" => {
            let path = s.take::<PathBuf>("png_path");
            let meta = s.take::<PathBuf>("metadata_path");
            if path.is_none() {
                s.error("png_path", "required for png scenes");
            }
            if meta.is_none() {
                s.error("metadata_path", "required for png scenes");
            }
            SceneSource::Png {
                path: path.unwrap_or_default(),
                metadata_path: meta.unwrap_or_default(),
            }
        }
        other => {
            s.error("kind", format!("unknown scene kind {other:?}"));
            out.source
        }
    };
    s.finish();
    out
}

fn parse_sweep(value: Option<Value>, errors: &mut Vec<FieldError>) -> SweepSettings {
    let mut out = SweepSettings {
        z_min_mm: -3.0,
        z_max_mm: 3.0,
        step_um: 100.0,
        roi_px: 256,
        tilt: 0.05,
    };
    let Some(value) = value else { return out };
    let Some(mut s) = Section::new(value, "sweep.", errors) else { return out };
    out.z_min_mm = s.take("z_min_mm").unwrap_or(out.z_min_mm);
    out.z_max_mm = s.take("z_max_mm").unwrap_or(out.z_max_mm);
    let step = s.take::<f64>("step_um");
    out.step_um = positive(&mut s, "step_um", step).unwrap_or(out.step_um);
    out.roi_px = s.take("roi_px").unwrap_or(out.roi_px);
    out.tilt = s.take("tilt").unwrap_or(out.tilt);
    if !(out.z_max_mm >= out.z_min_mm) {
        s.error("z_max_mm", "must not be below z_min_mm");
    }
    if out.roi_px < 64 {
        s.error("roi_px", "must be at least 64");
    }
    if !(out.tilt.abs() < 1.0) {
        s.error("tilt", "domain: slope must be below 1 in magnitude");
    }
    s.finish();
    out
}

fn parse_focus(value: Option<Value>, errors: &mut Vec<FieldError>) -> FocusSettings {
    let mut out = FocusSettings {
        slices: 10,
        step_um: 10.0,
        surface_um: 15.0,
    };
    let Some(value) = value else { return out };
    let Some(mut s) = Section::new(value, "focus.", errors) else { return out };
    out.slices = s.take("slices").unwrap_or(out.slices);
    let step = s.take::<f64>("step_um");
    out.step_um = positive(&mut s, "step_um", step).unwrap_or(out.step_um);
    out.surface_um = s.take("surface_um").unwrap_or(out.surface_um);
    if out.slices < 2 {
        s.error("slices", "a focus stack needs at least 2 slices");
    }
    s.finish();
    out
}

/// Parse and validate a configuration document (may be empty) with
/// command-line overrides applied on top.
pub fn validate_config(text: Option<&str>, overrides: &Overrides) -> Result<RunConfig> {
    let mut root = match text {
        Some(t) => match serde_json::from_str::<Value>(t) {
            Ok(Value::Object(o)) => o,
            Ok(_) => return Err(McamError::Validation(vec![FieldError::new("$", "expected a JSON object")])),
            Err(e) => return Err(McamError::Validation(vec![FieldError::new("$", e.to_string())])),
        },
        None => Map::new(),
    };
    overrides.apply(&mut root);
    let mut errors = Vec::new();
    let mut s = Section {
        obj: root,
        prefix: String::new(),
        errors: &mut errors,
    };

    let mode_name = s.take::<String>("mode");
    let mode = match mode_name.as_deref() {
        None => {
            s.error("mode", "required (or give a subcommand)");
            Mode::Design
        }
        Some(m) => Mode::from_name(m).unwrap_or_else(|| {
            s.error("mode", format!("unknown mode {m:?}"));
            Mode::Design
        }),
    };
    let preset_name = s.take::<String>("preset").unwrap_or_else(|| "multi_view".into());
    let preset = Preset::from_name(&preset_name).unwrap_or_else(|_| {
        s.error("preset", format!("unknown preset {preset_name:?}"));
        Preset::MultiView
    });
    let seed = s.take::<u64>("seed");
    let output_dir = s.take::<PathBuf>("output_dir").unwrap_or_else(|| PathBuf::from("mcam-out"));
    let threads = s.take::<usize>("threads").unwrap_or(0);
    let desk = s.take::<bool>("desk").unwrap_or(true);
    let noise_std = s.take::<f64>("noise_std").unwrap_or(0.0);
    let overlap = s.take::<f64>("overlap").unwrap_or(0.1);
    let step_mode = s.take::<StepMode>("step_mode").unwrap_or_default();
    let serpentine = s.take::<bool>("serpentine").unwrap_or(true);
    let binning = s.take::<usize>("binning").unwrap_or(1);
    let crop_px = s.take::<(usize, usize)>("crop_px");
    let efficiency = s.take::<f64>("efficiency").unwrap_or(1.0);
    let bandwidth = s.take::<f64>("bandwidth_gb_per_s").unwrap_or(5.0);
    let buffer = s.take::<f64>("buffer_gb").unwrap_or(128.0);
    let tile_px = s.take::<usize>("tile_px").unwrap_or(256);
    let hm_pitch = s.take::<f64>("height_map_pitch_um").unwrap_or(50.0);
    let array_raw = s.take_raw("array");
    let scene_raw = s.take_raw("scene");
    let sweep_raw = s.take_raw("sweep");
    let focus_raw = s.take_raw("focus");

    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        s.error("noise_std", "domain: must be finite and non-negative");
    }
    if !(0.0..1.0).contains(&overlap) {
        s.error("overlap", format!("domain: must be in [0, 1), got {overlap}"));
    }
    if binning == 0 {
        s.error("binning", "must be at least 1");
    }
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        s.error("efficiency", format!("domain: must be in (0, 1], got {efficiency}"));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        s.error("bandwidth_gb_per_s", "domain: must be positive");
    }
    if !(buffer > 0.0) || !buffer.is_finite() {
        s.error("buffer_gb", "domain: must be positive");
    }
    if tile_px < 16 || !tile_px.is_power_of_two() {
        s.error("tile_px", "must be a power of two of at least 16");
    }
    if !(hm_pitch > 0.0) || !hm_pitch.is_finite() {
        s.error("height_map_pitch_um", "domain: must be positive");
    }
    if mode.is_stochastic() && seed.is_none() && mode_name.is_some() {
        s.error("seed", format!("required for {} runs", mode.name()));
    }
    s.finish();

    let base = preset.config();
    let array = match array_raw {
        Some(v) => merge_array(&base, v, &mut errors),
        None => base,
    };
    if let Err(e) = array.validate() {
        errors.push(FieldError::new("array", e.to_string()));
    }
    let scene = parse_scene(scene_raw, &mut errors);
    let sweep = parse_sweep(sweep_raw, &mut errors);
    let focus = parse_focus(focus_raw, &mut errors);

    if !errors.is_empty() {
        return Err(McamError::Validation(errors));
    }
    Ok(RunConfig {
        mode,
        preset,
        array,
        desk,
        scene,
        seed,
        output_dir,
        threads,
        noise_std,
        overlap,
        step_mode,
        serpentine,
        binning,
        crop_px,
        data_path: DataPath {
            bandwidth_bytes_per_s: bandwidth * 1e9,
            buffer_bytes: buffer * 1e9,
            efficiency,
        },
        sweep,
        focus,
        tile_px,
        height_map_pitch_um: hm_pitch,
    })
}
