//! Stereo depth from overlapping camera pairs.
//!
//! A point seen by two cameras with baseline `p` sits at depth
//! `p·I_d/(d1 + d2)` from the lens plane, where `d1` and `d2` are its signed
//! image-plane distances from each camera's optical axis along the baseline.
//! Heights are reported relative to the calibrated focal plane,
//! `h = O_d − depth`.

pub mod heightmap;
pub mod matching;
pub mod sweep;

use serde::{Deserialize, Serialize};

pub use heightmap::{build_height_map, height_map_from_points, HeightMap, HeightMapMethod, SparsePoint};
pub use matching::{interest_points, match_features, Match, MatchOptions, MatchSet, MIN_MATCHES};
pub use sweep::{
    analytic_sweep, run_depth_sweep, shared_windows, sweep_planes, DepthExperimentReport, PlaneResult, SweepOptions,
};

use crate::array_model::{ArrayConfig, CameraIndex};
use crate::error::{McamError, Result};
use crate::scene_sim::CameraFrame;
use crate::units::Length;

/// Depth from disparities (all lengths in the same unit).
pub fn triangulate(d1: Length, d2: Length, pitch: Length, image_distance: Length) -> Result<Length> {
    let sum = (d1 + d2).as_um();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(McamError::Domain(format!(
            "total disparity {} must be positive and finite",
            d1 + d2
        )));
    }
    Ok(Length::um(pitch.as_um() * image_distance.as_um() / sum))
}

/// Calibrated optical-axis positions (full-resolution sensor coordinates,
/// pixel `j` spanning `[j, j + 1)`) measured on an in-focus plane.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DepthCalibration {
    pub axes: Vec<(CameraIndex, (f64, f64))>,
    /// Height of the plane the calibration was measured on.
    pub focus_height: Length,
}

impl DepthCalibration {
    /// Nominal sensor centres for every camera.
    pub fn nominal() -> Self {
        DepthCalibration::default()
    }

    pub fn nominal_axis(config: &ArrayConfig) -> (f64, f64) {
        (config.sensor.pixels_x as f64 / 2.0, config.sensor.pixels_y as f64 / 2.0)
    }

    pub fn axis(&self, cam: CameraIndex, config: &ArrayConfig) -> (f64, f64) {
        self.axes
            .iter()
            .find(|(c, _)| *c == cam)
            .map(|e| e.1)
            .unwrap_or_else(|| Self::nominal_axis(config))
    }

    /// Expected total disparity (sensor pixels) on the calibrated plane.
    pub fn focus_disparity_px(&self, baseline_um: f64, config: &ArrayConfig) -> f64 {
        let id = config.image_distance().as_um();
        let depth = config.object_distance().as_um() - self.focus_height.as_um();
        baseline_um * id / depth / config.sensor.pixel_pitch.as_um()
    }

    /// Absorb assembly offsets of `b` relative to `a` from frames of a flat
    /// scene at `focus_height`. Camera `a` keeps the nominal axis.
    pub fn from_focus_pair(
        a: &CameraFrame,
        b: &CameraFrame,
        config: &ArrayConfig,
        focus_height: Length,
        opts: &MatchOptions,
    ) -> Result<Self> {
        let seed = DepthCalibration {
            axes: Vec::new(),
            focus_height,
        };
        let set = match_features(a, b, config, &seed, opts)?;
        if set.sparse {
            return Err(McamError::Degenerate(format!(
                "only {} matches on the calibration plane",
                set.matches.len()
            )));
        }
        let u = set.baseline_dir();
        let expect = seed.focus_disparity_px(set.baseline_um(), config);
        let mut rx: Vec<f64> = set
            .matches
            .iter()
            .map(|m| m.point_a.0 - m.point_b.0 - expect * u.0)
            .collect();
        let mut ry: Vec<f64> = set
            .matches
            .iter()
            .map(|m| m.point_a.1 - m.point_b.1 - expect * u.1)
            .collect();
        let (mx, my) = (median(&mut rx), median(&mut ry));
        let na = Self::nominal_axis(config);
        Ok(DepthCalibration {
            axes: vec![(a.camera, na), (b.camera, (na.0 - mx, na.1 - my))],
            focus_height,
        })
    }

    /// Height relative to the focal plane of one match, with the object-plane
    /// position of the point (µm).
    pub fn locate(&self, set: &MatchSet, m: &Match, config: &ArrayConfig) -> Result<SparsePoint> {
        let (d1, d2) = set.disparities(m);
        let px = Length::um(set.pixel_um);
        let depth = triangulate(px * d1, px * d2, Length::um(set.baseline_um()), config.image_distance())?;
        let scale = set.pixel_um * depth.as_um() / config.image_distance().as_um();
        Ok(SparsePoint {
            x_um: set.axis_a_um.0 + m.point_a.0 * scale,
            y_um: set.axis_a_um.1 + m.point_a.1 * scale,
            h_um: (config.object_distance() - depth).as_um(),
        })
    }
}

/// Median (mean of the two middles for even counts); NaN when empty.
pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn triangulation_examples() {
        let d = triangulate(Length::mm(0.6762), Length::mm(0.6762), Length::mm(13.5), Length::mm(27.555)).unwrap();
        assert!((d.as_mm() - 275.06).abs() < 0.01, "{}", d.as_mm());
        let half = triangulate(Length::mm(1.3524), Length::mm(1.3524), Length::mm(13.5), Length::mm(27.555)).unwrap();
        assert!((half.as_um() * 2.0 - d.as_um()).abs() < 1e-9);
        assert!(triangulate(Length::ZERO, Length::ZERO, Length::mm(13.5), Length::mm(27.555)).is_err());
        assert!(triangulate(Length::mm(-1.0), Length::mm(0.5), Length::mm(13.5), Length::mm(27.555)).is_err());
    }

    #[test]
    fn swap_symmetry_and_monotonicity() {
        let (p, id) = (Length::mm(13.5), Length::mm(27.555));
        let a = triangulate(Length::um(400.0), Length::um(950.0), p, id).unwrap();
        let b = triangulate(Length::um(950.0), Length::um(400.0), p, id).unwrap();
        assert_eq!(a, b);
        let mut last = f64::INFINITY;
        for k in 1..50 {
            let d = triangulate(Length::um(10.0 * k as f64), Length::um(1000.0), p, id).unwrap().as_um();
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn in_focus_disparity_inverts_to_object_distance() {
        let cfg = presets::prototype(0.1);
        let cal = DepthCalibration::nominal();
        let px = cal.focus_disparity_px(13_500.0, &cfg);
        let delta = cfg.sensor.pixel_pitch;
        let depth = triangulate(delta * (px / 2.0), delta * (px / 2.0), Length::mm(13.5), cfg.image_distance()).unwrap();
        assert!((depth - cfg.object_distance()).as_um().abs() < 1e-9);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
