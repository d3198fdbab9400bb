//! Geometry and design math of a planar camera array.
//!
//! The array is a `rows × cols` grid of identical lens/sensor pairs on a common
//! plane. Axis `x` runs along the sensor's long side (`pixels_x`, layout
//! columns) and `y` along the short side (`pixels_y`, layout rows).

use serde::{Deserialize, Serialize};

use crate::error::{domain, McamError, Result};
use crate::units::{Area, Length};

/// Image sensor of one micro-camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub pixel_pitch: Length,
    pub pixels_x: usize,
    pub pixels_y: usize,
    pub bit_depth: u32,
}

impl SensorSpec {
    pub fn new(pixel_pitch: Length, pixels_x: usize, pixels_y: usize, bit_depth: u32) -> Result<Self> {
        let spec = SensorSpec {
            pixel_pitch,
            pixels_x,
            pixels_y,
            bit_depth,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_pitch.as_um() > 0.0) || !self.pixel_pitch.is_finite() {
            return Err(domain(format!("pixel pitch must be positive, got {}", self.pixel_pitch)));
        }
        if self.pixels_x == 0 || self.pixels_y == 0 {
            return Err(domain("sensor must have at least one pixel per axis"));
        }
        if self.bit_depth == 0 || self.bit_depth > 16 {
            return Err(domain(format!("bit depth must be in 1..=16, got {}", self.bit_depth)));
        }
        Ok(())
    }

    /// Active width along `x`.
    pub fn width_x(&self) -> Length {
        self.pixel_pitch * self.pixels_x as f64
    }

    /// Active width along `y`.
    pub fn width_y(&self) -> Length {
        self.pixel_pitch * self.pixels_y as f64
    }

    pub fn width(&self, axis: Axis) -> Length {
        match axis {
            Axis::X => self.width_x(),
            Axis::Y => self.width_y(),
        }
    }

    pub fn pixels(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.pixels_x,
            Axis::Y => self.pixels_y,
        }
    }
}

/// Objective lens of one micro-camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensSpec {
    pub focal_length: Length,
    pub f_number: f64,
    pub outer_diameter: Length,
}

impl LensSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length.as_um() > 0.0) || !self.focal_length.is_finite() {
            return Err(domain("focal length must be positive"));
        }
        if !(self.f_number > 0.0) || !self.f_number.is_finite() {
            return Err(domain("f-number must be positive"));
        }
        if !(self.outer_diameter.as_um() > 0.0) {
            return Err(domain("lens outer diameter must be positive"));
        }
        Ok(())
    }

    pub fn aperture_diameter(&self) -> Length {
        self.focal_length / self.f_number
    }
}

/// Grid placement of the micro-cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayLayout {
    pub rows: usize,
    pub cols: usize,
    pub pitch_x: Length,
    pub pitch_y: Length,
    /// Per-camera lateral sensor displacement on the image plane (assembly
    /// tolerance), row-major. Empty means a perfect grid.
    #[serde(default)]
    pub sensor_shifts: Vec<(Length, Length)>,
}

impl ArrayLayout {
    pub fn new(rows: usize, cols: usize, pitch_x: Length, pitch_y: Length) -> Self {
        ArrayLayout {
            rows,
            cols,
            pitch_x,
            pitch_y,
            sensor_shifts: Vec::new(),
        }
    }

    pub fn camera_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn pitch(&self, axis: Axis) -> Length {
        match axis {
            Axis::X => self.pitch_x,
            Axis::Y => self.pitch_y,
        }
    }

    pub fn count(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.cols,
            Axis::Y => self.rows,
        }
    }

    /// Row-major camera index list.
    pub fn cameras(&self) -> impl Iterator<Item = CameraIndex> + '_ {
        (0..self.rows).flat_map(move |row| (0..self.cols).map(move |col| CameraIndex { row, col }))
    }

    pub fn linear(&self, cam: CameraIndex) -> usize {
        cam.row * self.cols + cam.col
    }

    pub fn sensor_shift(&self, cam: CameraIndex) -> (Length, Length) {
        self.sensor_shifts
            .get(self.linear(cam))
            .copied()
            .unwrap_or((Length::ZERO, Length::ZERO))
    }
}

/// Position of a camera in the layout grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CameraIndex {
    pub row: usize,
    pub col: usize,
}

impl CameraIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        CameraIndex { row, col }
    }
}

impl std::fmt::Display for CameraIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "r{}c{}", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

/// Full array description; every derived geometric quantity comes from here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub sensor: SensorSpec,
    pub lens: LensSpec,
    pub layout: ArrayLayout,
    pub magnification: f64,
}

impl ArrayConfig {
    pub fn new(sensor: SensorSpec, lens: LensSpec, layout: ArrayLayout, magnification: f64) -> Result<Self> {
        let cfg = ArrayConfig {
            sensor,
            lens,
            layout,
            magnification,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        self.lens.validate()?;
        let l = &self.layout;
        if l.rows == 0 || l.cols == 0 {
            return Err(domain("layout needs at least one row and one column"));
        }
        for axis in Axis::BOTH {
            if self.layout.pitch(axis) < self.sensor.width(axis) {
                return Err(domain(format!(
                    "pitch {} along {} is smaller than the sensor width {}",
                    self.layout.pitch(axis),
                    axis.name(),
                    self.sensor.width(axis)
                )));
            }
        }
        if self.lens.outer_diameter > l.pitch_x.min(l.pitch_y) {
            return Err(domain(format!(
                "lens outer diameter {} does not fit the array pitch",
                self.lens.outer_diameter
            )));
        }
        if !l.sensor_shifts.is_empty() && l.sensor_shifts.len() != l.camera_count() {
            return Err(McamError::Config(format!(
                "sensor_shifts has {} entries for {} cameras",
                l.sensor_shifts.len(),
                l.camera_count()
            )));
        }
        if !(self.magnification > 0.0) || !self.magnification.is_finite() {
            return Err(domain(format!("magnification must be positive, got {}", self.magnification)));
        }
        Ok(())
    }

    pub fn with_magnification(&self, magnification: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.magnification = magnification;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Object-side size of one pixel, δ/M.
    pub fn object_pixel(&self) -> Length {
        self.sensor.pixel_pitch / self.magnification
    }

    pub fn image_distance(&self) -> Length {
        image_distance(&self.lens, self.magnification).expect("validated config")
    }

    pub fn object_distance(&self) -> Length {
        object_distance(&self.lens, self.magnification).expect("validated config")
    }

    /// Object-plane position of a camera's optical axis for a centred array.
    pub fn camera_axis(&self, cam: CameraIndex) -> (Length, Length) {
        let l = &self.layout;
        let x = l.pitch_x * (cam.col as f64 - (l.cols as f64 - 1.0) / 2.0);
        let y = l.pitch_y * (cam.row as f64 - (l.rows as f64 - 1.0) / 2.0);
        (x, y)
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self).aggregate()
    }
}

/// Magnification at which adjacent FOVs abut exactly, M = s/p.
pub fn continuous_magnification(sensor_width: Length, pitch: Length) -> Result<f64> {
    let s = sensor_width.as_um();
    let p = pitch.as_um();
    if !(s > 0.0) || !(p > 0.0) || !s.is_finite() || !p.is_finite() {
        return Err(domain("sensor width and pitch must be positive"));
    }
    if s > p {
        return Err(domain(format!("sensor width {sensor_width} exceeds pitch {pitch}")));
    }
    Ok(s / p)
}

/// Pixel-limited full-pitch resolution 2δ/M on the object plane.
pub fn pixel_limited_resolution(pixel_pitch: Length, magnification: f64) -> Result<Length> {
    if !(pixel_pitch.as_um() > 0.0) || !(magnification > 0.0) {
        return Err(domain("pixel pitch and magnification must be positive"));
    }
    Ok(pixel_pitch * 2.0 / magnification)
}

/// Thin-lens image distance I_d = f(1 + M).
pub fn image_distance(lens: &LensSpec, magnification: f64) -> Result<Length> {
    if !(magnification > 0.0) || !magnification.is_finite() {
        return Err(domain("magnification must be positive"));
    }
    if !(lens.focal_length.as_um() > 0.0) {
        return Err(domain("focal length must be positive"));
    }
    Ok(lens.focal_length * (1.0 + magnification))
}

/// Thin-lens object distance O_d = f(1 + 1/M).
pub fn object_distance(lens: &LensSpec, magnification: f64) -> Result<Length> {
    if !(magnification > 0.0) || !magnification.is_finite() {
        return Err(domain("magnification must be positive"));
    }
    if !(lens.focal_length.as_um() > 0.0) {
        return Err(domain("focal length must be positive"));
    }
    Ok(lens.focal_length * (1.0 + 1.0 / magnification))
}

/// Coverage regime along one axis. Ordered by increasing coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Tiled,
    Continuous,
    MultiView,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Tiled => "tiled",
            Regime::Continuous => "continuous",
            Regime::MultiView => "multi_view",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisCoverage {
    pub regime: Regime,
    /// `1 − p·M/s`; negative values are gaps.
    pub overlap_fraction: f64,
    pub views_per_point: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub x: AxisCoverage,
    pub y: AxisCoverage,
}

impl RegimeReport {
    pub fn axis(&self, axis: Axis) -> AxisCoverage {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
        }
    }

    /// The weaker coverage of the two axes.
    pub fn aggregate(&self) -> Regime {
        self.x.regime.min(self.y.regime)
    }
}

/// Classify one axis from sensor width, pitch and magnification.
///
/// Everything derives from the coverage ratio `r = (s/p)/M` (FOV over pitch),
/// so regime, overlap sign and view count can never disagree.
pub fn classify_axis(sensor_width: Length, pitch: Length, magnification: f64) -> Result<AxisCoverage> {
    let abutting = continuous_magnification(sensor_width, pitch)?;
    if !(magnification > 0.0) {
        return Err(domain("magnification must be positive"));
    }
    let ratio = abutting / magnification;
    let regime = if ratio >= 2.0 {
        Regime::MultiView
    } else if ratio >= 1.0 {
        Regime::Continuous
    } else {
        Regime::Tiled
    };
    Ok(AxisCoverage {
        regime,
        overlap_fraction: 1.0 - 1.0 / ratio,
        views_per_point: ratio.floor() as u64,
    })
}

pub fn classify_regime(config: &ArrayConfig) -> RegimeReport {
    let axis = |a: Axis| {
        classify_axis(config.sensor.width(a), config.layout.pitch(a), config.magnification)
            .expect("validated config")
    };
    RegimeReport {
        x: axis(Axis::X),
        y: axis(Axis::Y),
    }
}

/// Object-side FOV of a single camera, (s_x/M, s_y/M).
pub fn camera_object_fov(config: &ArrayConfig) -> (Length, Length) {
    let m = config.magnification;
    (config.sensor.width_x() / m, config.sensor.width_y() / m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovExtent {
    pub x: Length,
    pub y: Length,
    /// Set when the axis is tiled and the extent contains gaps.
    pub gap_x: bool,
    pub gap_y: bool,
}

impl FovExtent {
    pub fn area(&self) -> Area {
        Area::um2(self.x.as_um() * self.y.as_um())
    }

    pub fn has_gaps(&self) -> bool {
        self.gap_x || self.gap_y
    }
}

/// Outer extent `(n − 1)·p + s/M` per axis; tiled axes are flagged as gappy.
pub fn total_fov_extent(config: &ArrayConfig) -> FovExtent {
    let (fov_x, fov_y) = camera_object_fov(config);
    let report = classify_regime(config);
    let l = &config.layout;
    FovExtent {
        x: l.pitch_x * (l.cols as f64 - 1.0) + fov_x,
        y: l.pitch_y * (l.rows as f64 - 1.0) + fov_y,
        gap_x: report.x.regime == Regime::Tiled && l.cols > 1,
        gap_y: report.y.regime == Regime::Tiled && l.rows > 1,
    }
}

/// Cameras needed to cover `area` in the multi-view regime, ⌈A / 4p²⌉.
pub fn cameras_for_multiview_area(area: Area, pitch: Length) -> Result<u64> {
    let a = area.as_um2();
    let p = pitch.as_um();
    if !(a > 0.0) || !(p > 0.0) {
        return Err(domain("area and pitch must be positive"));
    }
    Ok((a / (4.0 * p * p)).ceil() as u64)
}

/// How the lateral scan step is chosen for tiled imaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Each axis steps by its own FOV times `(1 − overlap)`.
    PerAxis,
    /// Both axes step by the short-axis FOV times `(1 − overlap)`.
    #[default]
    UniformShortAxis,
}

/// Scan positions needed along one axis to fill a pitch with FOV-sized steps.
pub fn scan_count(fov: Length, pitch: Length, overlap: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(domain(format!("overlap must be in [0, 1), got {overlap}")));
    }
    if !(fov.as_um() > 0.0) || !(pitch.as_um() > 0.0) {
        return Err(domain("fov and pitch must be positive"));
    }
    if fov >= pitch {
        return Ok(1);
    }
    let step = fov * (1.0 - overlap);
    Ok((pitch / step).ceil().max(1.0) as usize)
}

/// Lateral scan step per axis.
pub fn scan_steps(config: &ArrayConfig, overlap: f64, mode: StepMode) -> (Length, Length) {
    let (fov_x, fov_y) = camera_object_fov(config);
    match mode {
        StepMode::PerAxis => (fov_x * (1.0 - overlap), fov_y * (1.0 - overlap)),
        StepMode::UniformShortAxis => {
            let step = fov_x.min(fov_y) * (1.0 - overlap);
            (step, step)
        }
    }
}

/// Scan grid `(count_x, count_y)` that fills the inter-camera gaps.
pub fn scan_grid(config: &ArrayConfig, overlap: f64, mode: StepMode) -> Result<(usize, usize)> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(domain(format!("overlap must be in [0, 1), got {overlap}")));
    }
    let report = classify_regime(config);
    if report.x.regime != Regime::Tiled && report.y.regime != Regime::Tiled {
        return Err(McamError::Regime(format!(
            "array is {} / {} and has no gaps to scan",
            report.x.regime.name(),
            report.y.regime.name()
        )));
    }
    let (fov_x, fov_y) = camera_object_fov(config);
    let (step_x, step_y) = scan_steps(config, overlap, mode);
    let count = |fov: Length, step: Length, pitch: Length| -> usize {
        if fov >= pitch {
            1
        } else {
            (pitch / step).ceil().max(1.0) as usize
        }
    };
    Ok((
        count(fov_x, step_x, config.layout.pitch_x),
        count(fov_y, step_y, config.layout.pitch_y),
    ))
}

/// One row of the exported design table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignRow {
    pub axis: &'static str,
    pub regime: Regime,
    pub overlap_fraction: f64,
    pub fov_mm: f64,
    pub r_pix_um: f64,
}

/// Per-axis design summary of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignReport {
    pub rows: Vec<DesignRow>,
    pub regime: Regime,
    pub r_pix: Length,
    pub camera_fov: (Length, Length),
    pub extent: FovExtent,
    pub image_distance: Length,
    pub object_distance: Length,
    pub cameras: usize,
    pub snapshot_pixels: u64,
}

pub fn design_report(config: &ArrayConfig) -> DesignReport {
    let report = classify_regime(config);
    let r_pix = pixel_limited_resolution(config.sensor.pixel_pitch, config.magnification).expect("validated config");
    let fov = camera_object_fov(config);
    let rows = Axis::BOTH
        .iter()
        .map(|&axis| {
            let cov = report.axis(axis);
            DesignRow {
                axis: axis.name(),
                regime: cov.regime,
                overlap_fraction: cov.overlap_fraction,
                fov_mm: match axis {
                    Axis::X => fov.0.as_mm(),
                    Axis::Y => fov.1.as_mm(),
                },
                r_pix_um: r_pix.as_um(),
            }
        })
        .collect();
    DesignReport {
        rows,
        regime: report.aggregate(),
        r_pix,
        camera_fov: fov,
        extent: total_fov_extent(config),
        image_distance: config.image_distance(),
        object_distance: config.object_distance(),
        cameras: config.layout.camera_count(),
        snapshot_pixels: (config.layout.camera_count() * config.sensor.pixels_x * config.sensor.pixels_y) as u64,
    }
}

/// Number of cameras whose object-plane FOV contains the point `(x, y)`.
pub fn covering_cameras(config: &ArrayConfig, x: Length, y: Length) -> usize {
    let (fov_x, fov_y) = camera_object_fov(config);
    config
        .layout
        .cameras()
        .filter(|&cam| {
            let (ax, ay) = config.camera_axis(cam);
            (x - ax).abs() <= fov_x / 2.0 && (y - ay).abs() <= fov_y / 2.0
        })
        .count()
}
