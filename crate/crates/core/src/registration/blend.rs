//! Calibration over a frame set and feathered compositing.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pairwise::{estimate_pairwise_offset, PairOffset};
use super::solve::{solve_global_poses, StitchCalibration};
use crate::array_model::{CameraIndex, Regime};
use crate::error::{McamError, Result};
use crate::raster::{self, Image};
use crate::scene_sim::FrameSet;
use crate::units::Length;

/// Minimum feather ramp in pixels.
pub const MIN_RAMP_PX: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub raster: Image,
    /// Object-plane position of the corner of pixel (0, 0).
    pub origin: (Length, Length),
    pub pixel_size: Length,
    pub weight_map_used: bool,
    /// Pixels that received at least one tile.
    pub covered: Array2<bool>,
}

impl Composite {
    /// Continuous pixel coordinates (centres at integers) of an object point.
    pub fn to_pixel(&self, x: Length, y: Length) -> (f64, f64) {
        ((x - self.origin.0) / self.pixel_size - 0.5, (y - self.origin.1) / self.pixel_size - 0.5)
    }

    pub fn coverage_fraction(&self) -> f64 {
        if self.covered.is_empty() {
            return 0.0;
        }
        self.covered.iter().filter(|&&c| c).count() as f64 / self.covered.len() as f64
    }
}

/// One image placed in composite coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Tile<'a> {
    pub image: &'a Image,
    /// Composite position of the corner of pixel (0, 0).
    pub anchor: (f64, f64),
    pub gain: f64,
}

impl Tile<'_> {
    fn extent(&self) -> (f64, f64, f64, f64) {
        let (h, w) = self.image.dim();
        (self.anchor.0, self.anchor.1, self.anchor.0 + w as f64, self.anchor.1 + h as f64)
    }
}

/// Feather ramps `(x, y)`: half the narrowest overlap between neighbouring
/// tiles along each axis, at least [`MIN_RAMP_PX`].
pub fn feather_ramps(tiles: &[Tile]) -> (f64, f64) {
    let (mut ox, mut oy) = (f64::INFINITY, f64::INFINITY);
    for (i, a) in tiles.iter().enumerate() {
        let ea = a.extent();
        for b in &tiles[i + 1..] {
            let eb = b.extent();
            let wx = ea.2.min(eb.2) - ea.0.max(eb.0);
            let wy = ea.3.min(eb.3) - ea.1.max(eb.1);
            if wx <= 0.0 || wy <= 0.0 {
                continue;
            }
            // Neighbours side by side share a narrow band across x.
            if wx < wy {
                ox = ox.min(wx);
            } else {
                oy = oy.min(wy);
            }
        }
    }
    let ramp = |o: f64| if o.is_finite() { (o / 2.0).max(MIN_RAMP_PX) } else { MIN_RAMP_PX };
    (ramp(ox), ramp(oy))
}

fn edge_weight(f: f64, len: usize, ramp: f64) -> f64 {
    let d = (f + 0.5).min(len as f64 - 0.5 - f);
    (d / ramp).clamp(0.0, 1.0)
}

/// Normalised blending weights of every tile covering composite point
/// `(u, v)` (continuous coordinates, pixel corners at integers).
pub fn feather_weights(tiles: &[Tile], ramps: (f64, f64), u: f64, v: f64) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = tiles
        .iter()
        .enumerate()
        .filter_map(|(k, t)| {
            let (h, w) = t.image.dim();
            let fx = u - t.anchor.0 - 0.5;
            let fy = v - t.anchor.1 - 0.5;
            if fx <= -0.5 || fy <= -0.5 || fx >= w as f64 - 0.5 || fy >= h as f64 - 0.5 {
                return None;
            }
            let wgt = edge_weight(fx, w, ramps.0) * edge_weight(fy, h, ramps.1);
            (wgt > 0.0).then_some((k, wgt))
        })
        .collect();
    let total: f64 = out.iter().map(|e| e.1).sum();
    out.iter_mut().for_each(|e| e.1 /= total);
    out
}

/// Blend tiles onto the grid spanning their union. `origin` is the
/// object-plane position of composite coordinate (0, 0).
pub fn composite_tiles(tiles: &[Tile], pixel_size: Length, origin: (Length, Length)) -> Composite {
    if tiles.is_empty() {
        return Composite {
            raster: Array2::zeros((0, 0)),
            origin,
            pixel_size,
            weight_map_used: false,
            covered: Array2::from_elem((0, 0), false),
        };
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for t in tiles {
        let e = t.extent();
        x0 = x0.min(e.0);
        y0 = y0.min(e.1);
        x1 = x1.max(e.2);
        y1 = y1.max(e.3);
    }
    // Snap to the grid within rounding noise of the anchors.
    let snap = |v: f64| if (v - v.round()).abs() < 1e-6 { v.round() } else { v };
    let (gx0, gy0) = (snap(x0).floor(), snap(y0).floor());
    let w = (snap(x1).ceil() - gx0) as usize;
    let h = (snap(y1).ceil() - gy0) as usize;
    let ramps = feather_ramps(tiles);
    let extents: Vec<(f64, f64, f64, f64)> = tiles.iter().map(Tile::extent).collect();

    let rows: Vec<(Vec<f32>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|r| {
            let v = gy0 + r as f64 + 0.5;
            let active: Vec<usize> = (0..tiles.len()).filter(|&k| extents[k].1 < v && v < extents[k].3).collect();
            let sub: Vec<Tile> = active.iter().map(|&k| tiles[k]).collect();
            let mut vals = vec![0.0f32; w];
            let mut cov = vec![false; w];
            for c in 0..w {
                let u = gx0 + c as f64 + 0.5;
                let weights = feather_weights(&sub, ramps, u, v);
                if weights.is_empty() {
                    continue;
                }
                let mut acc = 0.0f64;
                for (k, wt) in weights {
                    let t = &sub[k];
                    let s = raster::bilinear(t.image, u - t.anchor.0 - 0.5, v - t.anchor.1 - 0.5) as f64;
                    acc += wt * t.gain * s;
                }
                vals[c] = acc as f32;
                cov[c] = true;
            }
            (vals, cov)
        })
        .collect();

    let mut raster = Array2::<f32>::zeros((h, w));
    let mut covered = Array2::from_elem((h, w), false);
    for (r, (vals, cov)) in rows.into_iter().enumerate() {
        raster.row_mut(r).iter_mut().zip(vals).for_each(|(d, v)| *d = v);
        covered.row_mut(r).iter_mut().zip(cov).for_each(|(d, v)| *d = v);
    }
    Composite {
        raster,
        origin: (origin.0 + pixel_size * gx0, origin.1 + pixel_size * gy0),
        pixel_size,
        weight_map_used: tiles.len() > 1,
        covered,
    }
}

/// Nominal anchors (composite pixels) of every frame relative to the first.
pub fn nominal_anchors(frames: &FrameSet) -> Result<(Vec<(f64, f64)>, Length)> {
    let first = frames
        .frames
        .first()
        .ok_or_else(|| McamError::Config("frame set is empty".into()))?;
    let pixel = first.object_pixel(&frames.config);
    if frames.frames.iter().any(|f| f.binning != first.binning) {
        return Err(McamError::Config("all frames must share one binning factor".into()));
    }
    let c0 = first.nominal_corner(&frames.config);
    Ok((
        frames
            .frames
            .iter()
            .map(|f| {
                let c = f.nominal_corner(&frames.config);
                ((c.0 - c0.0) / pixel, (c.1 - c0.1) / pixel)
            })
            .collect(),
        pixel,
    ))
}

/// Measure every 4-connected pair of the frame set.
pub fn measure_pairs(frames: &FrameSet) -> Result<Vec<PairOffset>> {
    let (anchors, _) = nominal_anchors(frames)?;
    let index: Vec<CameraIndex> = frames.frames.iter().map(|f| f.camera).collect();
    let mut jobs = Vec::new();
    for (i, a) in index.iter().enumerate() {
        for (j, b) in index.iter().enumerate() {
            if (a.row == b.row && b.col == a.col + 1) || (a.col == b.col && b.row == a.row + 1) {
                jobs.push((i, j));
            }
        }
    }
    Ok(jobs
        .par_iter()
        .map(|&(i, j)| {
            let nominal = (anchors[j].0 - anchors[i].0, anchors[j].1 - anchors[i].1);
            estimate_pairwise_offset(&frames.frames[i].pixels, &frames.frames[j].pixels, (index[i], index[j]), nominal)
        })
        .collect())
}

/// Solve anchors and gains from a frame set of an overlapping array.
pub fn calibrate(frames: &FrameSet) -> Result<StitchCalibration> {
    let regime = frames.config.regime();
    if regime == Regime::Tiled {
        return Err(McamError::Regime(
            "tiled arrays have no inter-camera overlap; calibrate per scan position instead".into(),
        ));
    }
    let (_, pixel) = nominal_anchors(frames)?;
    let pairs = measure_pairs(frames)?;
    let cameras: Vec<CameraIndex> = frames.frames.iter().map(|f| f.camera).collect();
    let mut cal = solve_global_poses(&pairs, &cameras, pixel)?;
    cal.reference_origin = frames.frames[0].nominal_corner(&frames.config);
    cal.valid_for_depth = frames.stage_offset.z;
    Ok(cal)
}

/// Calibration built from nominal geometry alone (no measurement).
pub fn nominal_calibration(frames: &FrameSet) -> Result<StitchCalibration> {
    let (anchors, pixel) = nominal_anchors(frames)?;
    Ok(StitchCalibration {
        cameras: frames.frames.iter().map(|f| f.camera).collect(),
        tile_positions: anchors,
        gains: vec![1.0; frames.frames.len()],
        composite_pixel_size: pixel,
        valid_for_depth: frames.stage_offset.z,
        reference_origin: frames.frames[0].nominal_corner(&frames.config),
        residual_rms: 0.0,
    })
}

/// Tiles of a frame set placed by a calibration. Frames missing from the set
/// are skipped; frames unknown to the calibration are an error.
pub fn calibrated_tiles<'a>(frames: &'a FrameSet, cal: &StitchCalibration) -> Result<Vec<Tile<'a>>> {
    frames
        .frames
        .iter()
        .map(|f| {
            let k = cal
                .index_of(f.camera)
                .ok_or_else(|| McamError::Config(format!("camera {} is not in the calibration", f.camera)))?;
            Ok(Tile {
                image: &f.pixels,
                anchor: cal.tile_positions[k],
                gain: cal.gains[k],
            })
        })
        .collect()
}

pub fn composite(frames: &FrameSet, cal: &StitchCalibration) -> Result<Composite> {
    if let Some(f) = frames.frames.iter().find(|f| {
        (f.object_pixel(&frames.config).as_um() - cal.composite_pixel_size.as_um()).abs() > 1e-9
    }) {
        return Err(McamError::Config(format!(
            "frame {} pixel size does not match the calibration",
            f.camera
        )));
    }
    let tiles = calibrated_tiles(frames, cal)?;
    Ok(composite_tiles(&tiles, cal.composite_pixel_size, cal.reference_origin))
}

/// Serializable summary of a composite for manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeInfo {
    pub width: usize,
    pub height: usize,
    pub origin_um: (f64, f64),
    pub pixel_size_um: f64,
    pub coverage: f64,
}

impl From<&Composite> for CompositeInfo {
    fn from(c: &Composite) -> Self {
        CompositeInfo {
            width: c.raster.ncols(),
            height: c.raster.nrows(),
            origin_um: (c.origin.0.as_um(), c.origin.1.as_um()),
            pixel_size_um: c.pixel_size.as_um(),
            coverage: c.coverage_fraction(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{self, Preset};
    use crate::scene_sim::{render_array, NoiseTexture, RenderOptions, Scene, SceneContent, StageOffset};

    #[test]
    fn weights_partition_unity_everywhere() {
        let a = Array2::zeros((40, 60));
        let b = Array2::zeros((40, 60));
        let c = Array2::zeros((40, 60));
        let tiles = [
            Tile { image: &a, anchor: (0.0, 0.0), gain: 1.0 },
            Tile { image: &b, anchor: (35.3, 2.1), gain: 1.0 },
            Tile { image: &c, anchor: (10.0, 30.7), gain: 1.0 },
        ];
        let ramps = feather_ramps(&tiles);
        assert!(ramps.0 >= MIN_RAMP_PX && ramps.1 >= MIN_RAMP_PX);
        for r in 0..80 {
            for col in 0..110 {
                let w = feather_weights(&tiles, ramps, col as f64 + 0.5, r as f64 + 0.5);
                if !w.is_empty() {
                    let s: f64 = w.iter().map(|e| e.1).sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn uniform_frames_give_uniform_composite() {
        let a = Array2::from_elem((30, 50), 0.3f32);
        let b = Array2::from_elem((30, 50), 0.3f32);
        let tiles = [
            Tile { image: &a, anchor: (0.0, 0.0), gain: 1.0 },
            Tile { image: &b, anchor: (40.0, 0.0), gain: 1.0 },
        ];
        let c = composite_tiles(&tiles, Length::um(2.0), (Length::ZERO, Length::ZERO));
        assert_eq!(c.raster.dim(), (30, 90));
        assert!(c.raster.iter().all(|&v| (v - 0.3).abs() < 1e-6));
        assert!(c.covered.iter().all(|&v| v));
    }

    #[test]
    fn dropped_frame_leaves_zero_hole() {
        let a = Array2::from_elem((30, 50), 0.8f32);
        let c = composite_tiles(
            &[
                Tile { image: &a, anchor: (0.0, 0.0), gain: 1.0 },
                Tile { image: &a, anchor: (100.0, 0.0), gain: 1.0 },
            ],
            Length::um(1.0),
            (Length::ZERO, Length::ZERO),
        );
        assert_eq!(c.raster[[10, 75]], 0.0);
        assert!(!c.covered[[10, 75]]);
        assert!((c.raster[[10, 10]] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn calibrated_desk_continuous_array_matches_nominal() {
        let cfg = presets::desk(Preset::Continuous);
        let scene = Scene::new(
            SceneContent::Noise(NoiseTexture::new(2, 20.0)),
            (Length::mm(8.0), Length::mm(8.0)),
            Length::um(2.0),
        )
        .unwrap();
        let fs = render_array(&scene, &cfg, StageOffset::default(), 0, &RenderOptions::default()).unwrap();
        let cal = calibrate(&fs).unwrap();
        let nom = nominal_calibration(&fs).unwrap();
        for (a, b) in cal.tile_positions.iter().zip(&nom.tile_positions) {
            assert!((a.0 - b.0).abs() < 0.1 && (a.1 - b.1).abs() < 0.1, "{a:?} vs {b:?}");
        }
        let comp = composite(&fs, &cal).unwrap();
        assert!(comp.coverage_fraction() > 0.999);
    }

    #[test]
    fn tiled_config_refuses_calibration() {
        let cfg = presets::desk(Preset::Tiled);
        let scene = Scene::new(SceneContent::Uniform(0.5), (Length::mm(8.0), Length::mm(8.0)), Length::um(0.5)).unwrap();
        let fs = render_array(&scene, &cfg, StageOffset::default(), 0, &RenderOptions::default()).unwrap();
        assert!(matches!(calibrate(&fs), Err(McamError::Regime(_))));
    }
}
