//! Lateral scan plans for arrays with gaps between camera footprints.
//!
//! Offsets start at zero and step toward `+x`/`+y`, so each camera fills the
//! pitch cell whose lower corner is the lower corner of its stage-zero FOV.

use serde::{Deserialize, Serialize};

use crate::array_model::{camera_object_fov, scan_grid, scan_steps, ArrayConfig, StepMode};
use crate::error::{McamError, Result};
use crate::units::Length;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    /// Stage positions in visiting order.
    pub lateral_offsets: Vec<(Length, Length)>,
    /// Focal-plane offsets visited at every lateral position.
    pub axial_offsets: Vec<Length>,
    pub overlap: f64,
    pub step_mode: StepMode,
    pub grid: (usize, usize),
    pub step: (Length, Length),
}

impl ScanPlan {
    pub fn len(&self) -> usize {
        self.lateral_offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lateral_offsets.is_empty()
    }

    /// Largest offset magnitude per axis.
    pub fn max_travel(&self) -> (Length, Length) {
        self.lateral_offsets.iter().fold((Length::ZERO, Length::ZERO), |acc, o| {
            (acc.0.max(o.0.abs()), acc.1.max(o.1.abs()))
        })
    }

    /// Replace the axial stack visited at every lateral position.
    pub fn with_axial(mut self, axial: Vec<Length>) -> Result<Self> {
        if axial.is_empty() || axial.iter().any(|z| !z.is_finite()) {
            return Err(McamError::Domain("axial offsets must be finite and non-empty".into()));
        }
        self.axial_offsets = axial;
        Ok(self)
    }

    /// `index,dx_um,dy_um,dz_um`, one row per (lateral, axial) position.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| McamError::Parse(format!("csv: {e}"));
        w.write_record(["index", "dx_um", "dy_um", "dz_um"]).map_err(csv_err)?;
        let mut index = 0usize;
        for &(dx, dy) in &self.lateral_offsets {
            for &dz in &self.axial_offsets {
                w.write_record([
                    index.to_string(),
                    format!("{:.6}", dx.as_um()),
                    format!("{:.6}", dy.as_um()),
                    format!("{:.6}", dz.as_um()),
                ])
                .map_err(csv_err)?;
                index += 1;
            }
        }
        let bytes = w.into_inner().map_err(|e| McamError::Parse(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| McamError::Parse(e.to_string()))
    }
}

/// Plan the lateral positions that fill the gaps of a tiled array.
pub fn plan_tiled_scan(config: &ArrayConfig, overlap: f64, mode: StepMode, serpentine: bool) -> Result<ScanPlan> {
    let (nx, ny) = scan_grid(config, overlap, mode)?;
    let (sx, sy) = scan_steps(config, overlap, mode);
    let mut lateral_offsets = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for k in 0..nx {
            let i = if serpentine && j % 2 == 1 { nx - 1 - k } else { k };
            lateral_offsets.push((sx * i as f64, sy * j as f64));
        }
    }
    Ok(ScanPlan {
        lateral_offsets,
        axial_offsets: vec![Length::ZERO],
        overlap,
        step_mode: mode,
        grid: (nx, ny),
        step: (sx, sy),
    })
}

/// Result of sampling the array footprint against a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub samples: u64,
    pub uncovered: u64,
    pub spacing: Length,
    /// Object-plane rectangle `(x0, y0, x1, y1)` that was sampled.
    pub footprint: (Length, Length, Length, Length),
}

impl CoverageReport {
    pub fn complete(&self) -> bool {
        self.uncovered == 0
    }

    pub fn covered_fraction(&self) -> f64 {
        1.0 - self.uncovered as f64 / self.samples.max(1) as f64
    }
}

/// Rectangle formed by the pitch cells of all cameras.
pub fn array_footprint(config: &ArrayConfig) -> (Length, Length, Length, Length) {
    let (fx, fy) = camera_object_fov(config);
    let first = config.camera_axis(crate::array_model::CameraIndex::new(0, 0));
    let x0 = first.0 - fx / 2.0;
    let y0 = first.1 - fy / 2.0;
    let l = &config.layout;
    (x0, y0, x0 + l.pitch_x * l.cols as f64, y0 + l.pitch_y * l.rows as f64)
}

/// Sample points `lo, lo + spacing, …, hi` (the last one clamped to `hi`).
fn samples(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let n = ((hi - lo) / spacing).ceil() as usize;
    (0..=n).map(|i| (lo + i as f64 * spacing).min(hi)).collect()
}

/// For each sample, the set of plan positions whose footprint (on any camera
/// row or column) contains it, as a bitset.
fn covering_positions(coords: &[f64], axes: &[f64], offsets: &[f64], half_fov: f64) -> Vec<Vec<u64>> {
    let words = offsets.len().div_ceil(64);
    let tol = 1e-6;
    coords
        .iter()
        .map(|&x| {
            let mut bits = vec![0u64; words];
            for (k, &o) in offsets.iter().enumerate() {
                if axes.iter().any(|&a| (x - (a + o)).abs() <= half_fov + tol) {
                    bits[k / 64] |= 1 << (k % 64);
                }
            }
            bits
        })
        .collect()
}

/// Dense-grid coverage check of the array footprint at `spacing`.
///
/// A footprint of camera `(r, c)` at position `k` is the product of an
/// x-interval depending on `(c, k)` and a y-interval depending on `(r, k)`.
/// A point is therefore covered exactly when the positions covering its x
/// coordinate and those covering its y coordinate intersect, which lets the
/// full grid be checked through per-axis bitsets.
pub fn check_coverage(config: &ArrayConfig, plan: &ScanPlan, spacing: Length) -> Result<CoverageReport> {
    if !(spacing.as_um() > 0.0) || !spacing.is_finite() {
        return Err(McamError::Domain(format!("sampling spacing {spacing} must be positive")));
    }
    let footprint = array_footprint(config);
    let (fx, fy) = camera_object_fov(config);
    let l = &config.layout;
    let cam = crate::array_model::CameraIndex::new;
    let ax: Vec<f64> = (0..l.cols).map(|c| config.camera_axis(cam(0, c)).0.as_um()).collect();
    let ay: Vec<f64> = (0..l.rows).map(|r| config.camera_axis(cam(r, 0)).1.as_um()).collect();
    let ox: Vec<f64> = plan.lateral_offsets.iter().map(|o| o.0.as_um()).collect();
    let oy: Vec<f64> = plan.lateral_offsets.iter().map(|o| o.1.as_um()).collect();
    let xs = samples(footprint.0.as_um(), footprint.2.as_um(), spacing.as_um());
    let ys = samples(footprint.1.as_um(), footprint.3.as_um(), spacing.as_um());
    let bx = covering_positions(&xs, &ax, &ox, fx.as_um() / 2.0);
    let by = covering_positions(&ys, &ay, &oy, fy.as_um() / 2.0);

    // Group identical bitsets so each distinct pair is tested once.
    let group = |sets: Vec<Vec<u64>>| {
        let mut map: std::collections::BTreeMap<Vec<u64>, u64> = std::collections::BTreeMap::new();
        for s in sets {
            *map.entry(s).or_default() += 1;
        }
        map
    };
    let (gx, gy) = (group(bx), group(by));
    let mut uncovered = 0u64;
    for (sx, nx) in &gx {
        for (sy, ny) in &gy {
            if !sx.iter().zip(sy).any(|(a, b)| a & b != 0) {
                uncovered += nx * ny;
            }
        }
    }
    Ok(CoverageReport {
        samples: xs.len() as u64 * ys.len() as u64,
        uncovered,
        spacing,
        footprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::{pixel_limited_resolution, Regime};
    use crate::presets;

    #[test]
    fn prototype_scan_counts() {
        let cfg = presets::prototype(1.0);
        let uniform = plan_tiled_scan(&cfg, 0.10, StepMode::UniformShortAxis, true).unwrap();
        assert_eq!(uniform.len(), 25);
        assert_eq!(uniform.grid, (5, 5));
        let per_axis = plan_tiled_scan(&cfg, 0.0, StepMode::PerAxis, true).unwrap();
        assert_eq!(per_axis.len(), 12);
        assert_eq!(per_axis.grid, (3, 4));
        assert!(plan_tiled_scan(&presets::prototype(0.2), 0.1, StepMode::PerAxis, true).is_err());
    }

    #[test]
    fn serpentine_reverses_odd_rows_and_offsets_are_unique() {
        let cfg = presets::prototype(1.0);
        let plan = plan_tiled_scan(&cfg, 0.0, StepMode::PerAxis, true).unwrap();
        let step = plan.step.0;
        assert_eq!(plan.lateral_offsets[2].0, step * 2.0);
        assert_eq!(plan.lateral_offsets[3].0, step * 2.0);
        assert_eq!(plan.lateral_offsets[5].0, Length::ZERO);
        let raster = plan_tiled_scan(&cfg, 0.0, StepMode::PerAxis, false).unwrap();
        assert_eq!(raster.lateral_offsets[3].0, Length::ZERO);
        for (i, a) in plan.lateral_offsets.iter().enumerate() {
            for b in &plan.lateral_offsets[i + 1..] {
                assert_ne!(a, b);
            }
        }
        // Consecutive serpentine positions are one step apart.
        for w in plan.lateral_offsets.windows(2) {
            let d = (w[1].0 - w[0].0).abs() + (w[1].1 - w[0].1).abs();
            assert!((d - plan.step.0).abs().as_um() < 1e-9 || (d - plan.step.1).abs().as_um() < 1e-9);
        }
    }

    #[test]
    fn plans_stay_within_one_pitch_and_cover_the_array() {
        let cfg = presets::prototype(1.0);
        assert_eq!(cfg.regime(), Regime::Tiled);
        let r_pix = pixel_limited_resolution(cfg.sensor.pixel_pitch, cfg.magnification).unwrap();
        for (ov, mode) in [(0.1, StepMode::UniformShortAxis), (0.0, StepMode::PerAxis)] {
            let plan = plan_tiled_scan(&cfg, ov, mode, true).unwrap();
            let t = plan.max_travel();
            assert!(t.0 <= cfg.layout.pitch_x && t.1 <= cfg.layout.pitch_y);
            let rep = check_coverage(&cfg, &plan, r_pix / 2.0).unwrap();
            assert!(rep.complete(), "{rep:?}");
            assert!(rep.samples > 1_000_000_000);
        }
    }

    #[test]
    fn dropping_a_position_leaves_a_gap() {
        let cfg = presets::desk(presets::Preset::Tiled);
        let mut plan = plan_tiled_scan(&cfg, 0.0, StepMode::PerAxis, false).unwrap();
        plan.lateral_offsets.remove(4);
        let rep = check_coverage(&cfg, &plan, cfg.object_pixel()).unwrap();
        assert!(!rep.complete());
        // One FOV per camera is missing.
        let (fx, fy) = camera_object_fov(&cfg);
        let fp = rep.footprint;
        let area = (fp.2 - fp.0) * (fp.3 - fp.1).as_um();
        let expect = 4.0 * fx.as_um() * fy.as_um() / area.as_um();
        assert!((1.0 - rep.covered_fraction() - expect).abs() < 0.01, "{} {expect}", rep.covered_fraction());
    }

    #[test]
    fn csv_lists_every_lateral_and_axial_position() {
        let cfg = presets::prototype(1.0);
        let plan = plan_tiled_scan(&cfg, 0.0, StepMode::PerAxis, true)
            .unwrap()
            .with_axial(vec![Length::ZERO, Length::um(10.0)])
            .unwrap();
        let csv = plan.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "index,dx_um,dy_um,dz_um");
        assert_eq!(lines.len(), 1 + 24);
        assert!(lines[2].ends_with(",10.000000"));
    }
}
