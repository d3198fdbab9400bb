//! Axial sweep of a flat target through the focal plane of one camera pair.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matching::{match_features, MatchOptions};
use super::{median, triangulate, DepthCalibration};
use crate::array_model::{ArrayConfig, CameraIndex, Regime};
use crate::error::{McamError, Result};
use crate::scene_sim::{render_camera, HeightField, RenderOptions, Roi, RoiSelection, Scene, StageOffset};
use crate::units::Length;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneResult {
    pub true_z_um: f64,
    pub est_z_um: f64,
    pub n_matches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthExperimentReport {
    pub planes: Vec<PlaneResult>,
    pub rmse_um: f64,
}

impl DepthExperimentReport {
    pub fn from_planes(planes: Vec<PlaneResult>) -> Self {
        let n = planes.len().max(1) as f64;
        let rmse_um = (planes.iter().map(|p| (p.est_z_um - p.true_z_um).powi(2)).sum::<f64>() / n).sqrt();
        DepthExperimentReport { planes, rmse_um }
    }

    /// `true_z_um,est_z_um,n_matches` rows followed by an `rmse_um,<value>` line.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        let csv_err = |e: csv::Error| McamError::Parse(format!("csv: {e}"));
        w.write_record(["true_z_um", "est_z_um", "n_matches"]).map_err(csv_err)?;
        for p in &self.planes {
            w.write_record([format!("{:.6}", p.true_z_um), format!("{:.6}", p.est_z_um), p.n_matches.to_string()])
                .map_err(csv_err)?;
        }
        w.write_record(["rmse_um".to_string(), format!("{:.6}", self.rmse_um)]).map_err(csv_err)?;
        let bytes = w.into_inner().map_err(|e| McamError::Parse(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| McamError::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub z_min: Length,
    pub z_max: Length,
    pub step: Length,
    pub pair: (CameraIndex, CameraIndex),
    /// Side of the square sensor window rendered around the shared region.
    pub roi_px: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub matching: MatchOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            z_min: Length::mm(-3.0),
            z_max: Length::mm(3.0),
            step: Length::um(10.0),
            pair: (CameraIndex::new(0, 0), CameraIndex::new(0, 1)),
            roi_px: 256,
            noise_std: 0.0,
            seed: 0,
            matching: MatchOptions::default(),
        }
    }
}

/// Plane heights `z_min, z_min + step, …, z_max`.
pub fn sweep_planes(z_min: Length, z_max: Length, step: Length) -> Result<Vec<Length>> {
    if !(step.as_um() > 0.0) || !step.is_finite() {
        return Err(McamError::Domain(format!("sweep step {step} must be positive")));
    }
    if !(z_max >= z_min) || !z_min.is_finite() || !z_max.is_finite() {
        return Err(McamError::Domain(format!("sweep range {z_min}..{z_max} is empty")));
    }
    let n = ((z_max - z_min) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| z_min + step * k as f64).collect())
}

/// Sweep with exact forward-model disparities instead of rendered frames.
pub fn analytic_sweep(config: &ArrayConfig, planes: &[Length], pair: (CameraIndex, CameraIndex)) -> Result<DepthExperimentReport> {
    let (aa, ab) = (config.camera_axis(pair.0), config.camera_axis(pair.1));
    let (bx, by) = ((ab.0 - aa.0).as_um(), (ab.1 - aa.1).as_um());
    let base = bx.hypot(by);
    let u = (bx / base, by / base);
    let id = config.image_distance();
    let od = config.object_distance().as_um();
    // Lateral sample positions across the shared region.
    let probes = [0.25, 0.5, 0.75];
    let planes = planes
        .iter()
        .map(|&z| {
            let mut est = Vec::new();
            for &t in &probes {
                let (x, y) = (aa.0.as_um() + t * bx, aa.1.as_um() + t * by);
                let depth = od - z.as_um();
                let ra = ((x - aa.0.as_um()) * id.as_um() / depth, (y - aa.1.as_um()) * id.as_um() / depth);
                let rb = ((x - ab.0.as_um()) * id.as_um() / depth, (y - ab.1.as_um()) * id.as_um() / depth);
                let d1 = u.0 * ra.0 + u.1 * ra.1;
                let d2 = -(u.0 * rb.0 + u.1 * rb.1);
                let d = triangulate(Length::um(d1), Length::um(d2), Length::um(base), id)?;
                est.push(od - d.as_um());
            }
            Ok(PlaneResult {
                true_z_um: z.as_um(),
                est_z_um: median(&mut est),
                n_matches: probes.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DepthExperimentReport::from_planes(planes))
}

/// Sensor windows of both cameras centred on the projection of the point
/// midway between their axes on the focal plane.
pub fn shared_windows(config: &ArrayConfig, pair: (CameraIndex, CameraIndex), side: usize) -> (Roi, Roi) {
    let (aa, ab) = (config.camera_axis(pair.0), config.camera_axis(pair.1));
    let mid = ((aa.0 + ab.0) / 2.0, (aa.1 + ab.1) / 2.0);
    let m = config.magnification;
    let delta = config.sensor.pixel_pitch;
    let centre = |axis: (Length, Length)| {
        let cx = config.sensor.pixels_x as f64 / 2.0 + (mid.0 - axis.0) * m / delta;
        let cy = config.sensor.pixels_y as f64 / 2.0 + (mid.1 - axis.1) * m / delta;
        Roi::centered(config, cx, cy, side, side)
    };
    (centre(aa), centre(ab))
}

/// Render a flat copy of `scene` at every plane, match the pair, triangulate
/// and compare the median height with the truth.
pub fn run_depth_sweep(config: &ArrayConfig, scene: &Scene, opts: &SweepOptions) -> Result<DepthExperimentReport> {
    if config.regime() != Regime::MultiView {
        return Err(McamError::Regime(format!(
            "depth sweep needs a multi-view array, got {}",
            config.regime().name()
        )));
    }
    let planes = sweep_planes(opts.z_min, opts.z_max, opts.step)?;
    let (roi_a, roi_b) = shared_windows(config, opts.pair, opts.roi_px);
    let render = |z: Length, exposure: u64, cam: CameraIndex, roi: Roi| {
        let s = scene.clone().with_height(HeightField::Flat(z));
        render_camera(
            &s,
            config,
            cam,
            StageOffset::default(),
            opts.seed,
            &RenderOptions {
                noise_std: opts.noise_std,
                exposure_id: exposure,
                rois: RoiSelection::All(roi),
                ..Default::default()
            },
        )
    };

    let focus_a = render(Length::ZERO, 0, opts.pair.0, roi_a)?;
    let focus_b = render(Length::ZERO, 0, opts.pair.1, roi_b)?;
    let cal = DepthCalibration::from_focus_pair(&focus_a, &focus_b, config, Length::ZERO, &opts.matching)?;

    let results = planes
        .par_iter()
        .enumerate()
        .map(|(i, &z)| {
            let fa = render(z, i as u64 + 1, opts.pair.0, roi_a)?;
            let fb = render(z, i as u64 + 1, opts.pair.1, roi_b)?;
            let set = match_features(&fa, &fb, config, &cal, &opts.matching)?;
            let mut heights: Vec<f64> = set
                .matches
                .iter()
                .filter_map(|m| cal.locate(&set, m, config).ok().map(|p| p.h_um))
                .collect();
            Ok(PlaneResult {
                true_z_um: z.as_um(),
                est_z_um: median(&mut heights),
                n_matches: heights.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DepthExperimentReport::from_planes(results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::ArrayLayout;
    use crate::presets;

    #[test]
    fn plane_counts() {
        assert_eq!(sweep_planes(Length::mm(-3.0), Length::mm(3.0), Length::um(10.0)).unwrap().len(), 601);
        assert_eq!(sweep_planes(Length::mm(-3.0), Length::mm(3.0), Length::um(100.0)).unwrap().len(), 61);
        assert!(sweep_planes(Length::ZERO, Length::mm(1.0), Length::ZERO).is_err());
    }

    #[test]
    fn analytic_path_is_exact() {
        let mut cfg = presets::prototype(0.1);
        cfg.layout = ArrayLayout::new(1, 2, Length::mm(13.5), Length::mm(13.5));
        let planes = sweep_planes(Length::mm(-3.0), Length::mm(3.0), Length::um(10.0)).unwrap();
        let r = analytic_sweep(&cfg, &planes, (CameraIndex::new(0, 0), CameraIndex::new(0, 1))).unwrap();
        assert!(r.rmse_um < 1e-9, "{}", r.rmse_um);
    }

    #[test]
    fn csv_has_header_rows_and_summary() {
        let r = DepthExperimentReport::from_planes(vec![
            PlaneResult { true_z_um: 0.0, est_z_um: 3.0, n_matches: 5 },
            PlaneResult { true_z_um: 10.0, est_z_um: 6.0, n_matches: 7 },
        ]);
        assert!((r.rmse_um - 12.5f64.sqrt()).abs() < 1e-12);
        let csv = r.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "true_z_um,est_z_um,n_matches");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("rmse_um,"));
    }

    #[test]
    fn shared_windows_sit_symmetric_about_the_axes() {
        let cfg = presets::prototype(0.1);
        let (a, b) = shared_windows(&cfg, (CameraIndex::new(0, 0), CameraIndex::new(0, 1)), 256);
        let ca = a.x0 as f64 + 128.0 - 2104.0;
        let cb = b.x0 as f64 + 128.0 - 2104.0;
        assert!((ca - 613.6).abs() < 1.0 && (cb + 613.6).abs() < 1.0, "{ca} {cb}");
    }
}
