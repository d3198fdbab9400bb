//! Per-camera forward model.
//!
//! Each sensor pixel is back-projected through a pinhole at the lens onto the
//! local object surface, integrated over its footprint, defocused with a
//! Gaussian whose σ is half the circle of confusion, and optionally corrupted
//! by additive read noise. The image is not inverted: sensor `+x` maps to
//! object `+x`.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{Rect, Scene};
use crate::array_model::{ArrayConfig, CameraIndex};
use crate::error::{McamError, Result};
use crate::raster::{self, Image};
use crate::units::Length;

/// Sample-stage position: lateral displacement of the array relative to the
/// sample and axial position of the focal plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageOffset {
    pub x: Length,
    pub y: Length,
    pub z: Length,
}

impl StageOffset {
    pub fn lateral(x: Length, y: Length) -> Self {
        StageOffset { x, y, z: Length::ZERO }
    }

    pub fn axial(z: Length) -> Self {
        StageOffset {
            z,
            ..Default::default()
        }
    }
}

/// Sensor window in full-resolution sensor pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    pub fn full(config: &ArrayConfig) -> Self {
        Roi {
            x0: 0,
            y0: 0,
            width: config.sensor.pixels_x,
            height: config.sensor.pixels_y,
        }
    }

    /// A `width × height` window centred on sensor pixel coordinate `(cx, cy)`,
    /// clamped to the sensor.
    pub fn centered(config: &ArrayConfig, cx: f64, cy: f64, width: usize, height: usize) -> Self {
        let w = width.min(config.sensor.pixels_x);
        let h = height.min(config.sensor.pixels_y);
        let x0 = (cx - w as f64 / 2.0).round().clamp(0.0, (config.sensor.pixels_x - w) as f64) as usize;
        let y0 = (cy - h as f64 / 2.0).round().clamp(0.0, (config.sensor.pixels_y - h) as f64) as usize;
        Roi {
            x0,
            y0,
            width: w,
            height: h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum RoiSelection {
    #[default]
    Full,
    All(Roi),
    /// Row-major, one per camera.
    PerCamera(Vec<Roi>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    /// Standard deviation of additive Gaussian read noise (intensity units).
    pub noise_std: f64,
    pub exposure_id: u64,
    pub rois: RoiSelection,
    /// Per-camera photometric response, row-major; empty means unity.
    pub camera_gains: Vec<f64>,
    pub binning: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            noise_std: 0.0,
            exposure_id: 0,
            rois: RoiSelection::Full,
            camera_gains: Vec::new(),
            binning: 1,
        }
    }
}

impl RenderOptions {
    fn roi_for(&self, config: &ArrayConfig, cam: CameraIndex) -> Result<Roi> {
        let roi = match &self.rois {
            RoiSelection::Full => Roi::full(config),
            RoiSelection::All(r) => *r,
            RoiSelection::PerCamera(v) => *v
                .get(config.layout.linear(cam))
                .ok_or_else(|| McamError::Config(format!("no ROI for camera {cam}")))?,
        };
        if roi.width == 0
            || roi.height == 0
            || roi.x0 + roi.width > config.sensor.pixels_x
            || roi.y0 + roi.height > config.sensor.pixels_y
        {
            return Err(McamError::Config(format!("ROI {roi:?} does not fit the sensor")));
        }
        Ok(roi)
    }

    fn gain_for(&self, config: &ArrayConfig, cam: CameraIndex) -> f64 {
        self.camera_gains.get(config.layout.linear(cam)).copied().unwrap_or(1.0)
    }
}

/// One camera's exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub pixels: Image,
    pub camera: CameraIndex,
    /// Object-plane position of the optical axis (grid position plus stage offset).
    pub optical_axis: (Length, Length),
    /// Focal-plane height the frame was exposed at.
    pub z_offset: Length,
    pub exposure_id: u64,
    /// Sensor window covered by `pixels`, in unbinned sensor pixels.
    pub roi: Roi,
    pub binning: usize,
}

impl CameraFrame {
    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    /// Object-plane size of one frame pixel.
    pub fn object_pixel(&self, config: &ArrayConfig) -> Length {
        config.object_pixel() * self.binning as f64
    }

    /// Nominal object-plane position of the top-left corner of pixel (0, 0)
    /// on the in-focus plane, for an ideally assembled sensor.
    pub fn nominal_corner(&self, config: &ArrayConfig) -> (Length, Length) {
        let d = config.object_pixel();
        let x = self.optical_axis.0 + d * (self.roi.x0 as f64 - config.sensor.pixels_x as f64 / 2.0);
        let y = self.optical_axis.1 + d * (self.roi.y0 as f64 - config.sensor.pixels_y as f64 / 2.0);
        (x, y)
    }

    /// Nominal optical-axis position in this frame's continuous pixel
    /// coordinates (pixel centres at integers).
    pub fn nominal_axis_px(&self, config: &ArrayConfig) -> (f64, f64) {
        let b = self.binning as f64;
        (
            (config.sensor.pixels_x as f64 / 2.0 - self.roi.x0 as f64) / b - 0.5,
            (config.sensor.pixels_y as f64 / 2.0 - self.roi.y0 as f64) / b - 0.5,
        )
    }
}

/// All cameras of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub frames: Vec<CameraFrame>,
    pub config: ArrayConfig,
    pub stage_offset: StageOffset,
}

impl FrameSet {
    pub fn frame(&self, cam: CameraIndex) -> Option<&CameraFrame> {
        self.frames.iter().find(|f| f.camera == cam)
    }
}

/// Defocus blur σ in sensor pixels for a height error `dh`.
///
/// The image-side circle of confusion is `(f/N)·M·|dh|/O_d`.
pub fn defocus_sigma_px(config: &ArrayConfig, dh: Length) -> f64 {
    let coc = config.lens.aperture_diameter().as_um() * config.magnification * dh.as_um().abs()
        / config.object_distance().as_um();
    coc / 2.0 / config.sensor.pixel_pitch.as_um()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn frame_seed(seed: u64, cam: CameraIndex, exposure: u64) -> u64 {
    [cam.row as u64, cam.col as u64, exposure]
        .iter()
        .fold(splitmix64(seed), |h, &v| splitmix64(h ^ v))
}

const BLUR_LEVEL_STEP: f64 = 0.25;

/// Blur each pixel by its own σ, interpolating between uniformly blurred
/// copies at σ = 0, 0.25, 0.5, … px.
fn variable_blur(img: &Image, sigma: &Array2<f64>) -> Image {
    let (lo, hi) = sigma
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    if hi - lo < 1e-9 {
        return raster::gaussian_blur(img, lo);
    }
    let first = (lo / BLUR_LEVEL_STEP).floor() as usize;
    let last = (hi / BLUR_LEVEL_STEP).ceil() as usize;
    let levels: Vec<Image> = (first..=last)
        .into_par_iter()
        .map(|k| raster::gaussian_blur(img, k as f64 * BLUR_LEVEL_STEP))
        .collect();
    Array2::from_shape_fn(img.dim(), |idx| {
        let t = sigma[idx] / BLUR_LEVEL_STEP;
        let k = (t.floor() as usize).clamp(first, last);
        let frac = (t - k as f64).clamp(0.0, 1.0) as f32;
        let a = levels[k - first][idx];
        if k == last {
            a
        } else {
            a * (1.0 - frac) + levels[k + 1 - first][idx] * frac
        }
    })
}

/// Render one camera of the array.
pub fn render_camera(
    scene: &Scene,
    config: &ArrayConfig,
    cam: CameraIndex,
    stage: StageOffset,
    seed: u64,
    opts: &RenderOptions,
) -> Result<CameraFrame> {
    config.validate()?;
    if cam.row >= config.layout.rows || cam.col >= config.layout.cols {
        return Err(McamError::Config(format!("camera {cam} is outside the layout")));
    }
    let obj_px = config.object_pixel().as_um();
    if scene.sample_pitch.as_um() > obj_px / 2.0 * (1.0 + 1e-9) {
        return Err(McamError::Render(format!(
            "scene sample pitch {} is coarser than half the back-projected pixel ({} µm)",
            scene.sample_pitch,
            obj_px / 2.0
        )));
    }
    if opts.binning == 0 {
        return Err(McamError::Config("binning factor must be at least 1".into()));
    }
    let roi = opts.roi_for(config, cam)?;

    let delta = config.sensor.pixel_pitch.as_um();
    let od = config.object_distance().as_um();
    let id = config.image_distance().as_um();
    let (ax, ay) = config.camera_axis(cam);
    let (ax, ay) = ((ax + stage.x).as_um(), (ay + stage.y).as_um());
    let (ex, ey) = config.layout.sensor_shift(cam);
    let (ex, ey) = (ex.as_um(), ey.as_um());
    let z = stage.z.as_um();
    let gain = opts.gain_for(config, cam);
    let half_w = config.sensor.pixels_x as f64 / 2.0;
    let half_h = config.sensor.pixels_y as f64 / 2.0;

    // Margin so the blur sees real content at the window edges.
    let view = Rect::new(
        ax + ((roi.x0 as f64 - half_w) * delta + ex) / config.magnification,
        ay + ((roi.y0 as f64 - half_h) * delta + ey) / config.magnification,
        ax + (((roi.x0 + roi.width) as f64 - half_w) * delta + ex) / config.magnification,
        ay + (((roi.y0 + roi.height) as f64 - half_h) * delta + ey) / config.magnification,
    );
    let (hmin, hmax) = scene.height.range(&Rect::centered(
        (view.x0 + view.x1) / 2.0,
        (view.y0 + view.y1) / 2.0,
        view.width(),
        view.height(),
    ));
    let worst_dh = (hmin - z).abs().max((hmax - z).abs());
    let sigma_max = defocus_sigma_px(config, Length::um(worst_dh));
    let margin = if sigma_max > 1e-9 { (3.0 * sigma_max).ceil() as usize + 1 } else { 0 };
    let (ew, eh) = (roi.width + 2 * margin, roi.height + 2 * margin);

    let flat = scene.height.is_flat();
    let rows: Vec<(Vec<f32>, Vec<f64>)> = (0..eh)
        .into_par_iter()
        .map(|r| {
            let v = roi.y0 as f64 + r as f64 - margin as f64 + 0.5;
            let y_img = (v - half_h) * delta + ey;
            let mut vals = Vec::with_capacity(ew);
            let mut sig = Vec::with_capacity(ew);
            for c in 0..ew {
                let u = roi.x0 as f64 + c as f64 - margin as f64 + 0.5;
                let x_img = (u - half_w) * delta + ex;
                let mut h = scene.height.at(ax + x_img * od / id, ay + y_img * od / id);
                if !flat {
                    for _ in 0..3 {
                        let scale = (od - h) / id;
                        let next = scene.height.at(ax + x_img * scale, ay + y_img * scale);
                        let done = (next - h).abs() < 1e-9;
                        h = next;
                        if done {
                            break;
                        }
                    }
                }
                let scale = (od - h) / id;
                let (x, y) = (ax + x_img * scale, ay + y_img * scale);
                let half = 0.5 * delta * scale;
                vals.push((scene.box_average(&Rect::centered(x, y, half, half)) * gain) as f32);
                sig.push(defocus_sigma_px(config, Length::um(h - z)));
            }
            (vals, sig)
        })
        .collect();

    let mut img = Array2::<f32>::zeros((eh, ew));
    let mut sigma = Array2::<f64>::zeros((eh, ew));
    for (r, (vals, sig)) in rows.into_iter().enumerate() {
        img.row_mut(r).iter_mut().zip(vals).for_each(|(d, v)| *d = v);
        sigma.row_mut(r).iter_mut().zip(sig).for_each(|(d, v)| *d = v);
    }
    let blurred = variable_blur(&img, &sigma);
    let mut pixels = blurred
        .slice(ndarray::s![margin..margin + roi.height, margin..margin + roi.width])
        .to_owned();

    if opts.noise_std > 0.0 {
        let normal = Normal::new(0.0, opts.noise_std)
            .map_err(|e| McamError::Config(format!("noise std: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(seed, cam, opts.exposure_id));
        pixels.iter_mut().for_each(|p| {
            *p = (*p as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        });
    }

    let frame = CameraFrame {
        pixels,
        camera: cam,
        optical_axis: (Length::um(ax), Length::um(ay)),
        z_offset: stage.z,
        exposure_id: opts.exposure_id,
        roi,
        binning: 1,
    };
    if opts.binning > 1 {
        apply_binning(&frame, opts.binning)
    } else {
        Ok(frame)
    }
}

/// Render every camera of the layout, row-major.
pub fn render_array(
    scene: &Scene,
    config: &ArrayConfig,
    stage: StageOffset,
    seed: u64,
    opts: &RenderOptions,
) -> Result<FrameSet> {
    let cams: Vec<CameraIndex> = config.layout.cameras().collect();
    let frames = cams
        .par_iter()
        .map(|&cam| render_camera(scene, config, cam, stage, seed, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameSet {
        frames,
        config: config.clone(),
        stage_offset: stage,
    })
}

/// One frame set per focal-plane height; exposure ids count up from
/// `opts.exposure_id`.
pub fn render_focal_stack(
    scene: &Scene,
    config: &ArrayConfig,
    lateral: (Length, Length),
    z_offsets: &[Length],
    seed: u64,
    opts: &RenderOptions,
) -> Result<Vec<FrameSet>> {
    if let Some(z) = z_offsets.iter().find(|z| !z.is_finite()) {
        return Err(McamError::Domain(format!("non-finite focal offset {z}")));
    }
    z_offsets
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let o = RenderOptions {
                exposure_id: opts.exposure_id + i as u64,
                ..opts.clone()
            };
            render_array(scene, config, StageOffset { x: lateral.0, y: lateral.1, z }, seed, &o)
        })
        .collect()
}

/// Average `factor × factor` pixel blocks.
pub fn apply_binning(frame: &CameraFrame, factor: usize) -> Result<CameraFrame> {
    let pixels = raster::bin(&frame.pixels, factor).ok_or_else(|| {
        McamError::Domain(format!(
            "binning factor {factor} does not divide frame dimensions {}×{}",
            frame.width(),
            frame.height()
        ))
    })?;
    Ok(CameraFrame {
        pixels,
        binning: frame.binning * factor,
        ..frame.clone()
    })
}
