//! Bar-target contrast read-out on a composite.

use serde::{Deserialize, Serialize};

use super::blend::Composite;
use crate::raster;
use crate::scene_sim::{BarOrientation, TargetLayout};
use crate::units::Length;

/// Michelson contrast a group must reach to count as resolved.
pub const CONTRAST_THRESHOLD: f64 = 0.26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupContrast {
    pub spacing_um: f64,
    pub orientation: BarOrientation,
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionMeasurement {
    /// Coarsest first.
    pub groups: Vec<GroupContrast>,
    /// Finest spacing reached before the first failing group; `None` if even
    /// the coarsest group fails.
    pub resolved: Option<Length>,
}

impl ResolutionMeasurement {
    /// Resolved spacing in µm, `+∞` when nothing is resolved.
    pub fn resolved_um(&self) -> f64 {
        self.resolved.map_or(f64::INFINITY, |l| l.as_um())
    }

    pub fn contrast_at(&self, spacing_um: f64) -> Option<f64> {
        self.groups
            .iter()
            .filter(|g| (g.spacing_um - spacing_um).abs() < 1e-9)
            .map(|g| g.contrast)
            .reduce(f64::min)
    }
}

pub fn michelson(profile: &[f64]) -> f64 {
    let max = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = profile.iter().cloned().fold(f64::INFINITY, f64::min);
    if profile.is_empty() || max + min <= 1e-12 {
        0.0
    } else {
        (max - min) / (max + min)
    }
}

/// Contrast across the bars of one group, averaged along the central 60% of
/// the bar length. Groups not fully covered by the composite score 0.
fn group_contrast(c: &Composite, g: &crate::scene_sim::BarGroup) -> f64 {
    let r = g.rect();
    let d = c.pixel_size.as_um();
    let (ox, oy) = (c.origin.0.as_um(), c.origin.1.as_um());
    let eps = 1e-6;
    let (h, w) = c.raster.dim();
    let to_px = |v: f64, o: f64| (v - o) / d;
    let (across0, across1, along0, along1) = match g.orientation {
        BarOrientation::Vertical => (to_px(r.x0, ox), to_px(r.x1, ox), to_px(r.y0, oy), to_px(r.y1, oy)),
        BarOrientation::Horizontal => (to_px(r.y0, oy), to_px(r.y1, oy), to_px(r.x0, ox), to_px(r.x1, ox)),
    };
    let a0 = (across0 - eps).ceil().max(0.0) as i64;
    let a1 = (across1 + eps).floor() as i64;
    let len = along1 - along0;
    let l0 = (along0 + 0.2 * len).ceil().max(0.0) as i64;
    let l1 = (along1 - 0.2 * len).floor() as i64;
    let (lim_across, lim_along) = match g.orientation {
        BarOrientation::Vertical => (w as i64, h as i64),
        BarOrientation::Horizontal => (h as i64, w as i64),
    };
    if a1 - a0 < 2 || l1 <= l0 || a1 > lim_across || l1 > lim_along {
        return 0.0;
    }
    let (a0, a1, l0, l1) = (a0 as usize, a1 as usize, l0 as usize, l1 as usize);
    let (view, cov) = match g.orientation {
        BarOrientation::Vertical => (c.raster.slice(ndarray::s![l0..l1, a0..a1]), c.covered.slice(ndarray::s![l0..l1, a0..a1])),
        BarOrientation::Horizontal => (c.raster.slice(ndarray::s![a0..a1, l0..l1]), c.covered.slice(ndarray::s![a0..a1, l0..l1])),
    };
    if cov.iter().any(|&v| !v) {
        return 0.0;
    }
    let profile = match g.orientation {
        BarOrientation::Vertical => raster::column_profile(&view),
        BarOrientation::Horizontal => raster::row_profile(&view),
    };
    michelson(&profile)
}

/// Read every group's contrast and report the finest resolved spacing.
pub fn measure_resolution(composite: &Composite, layout: &TargetLayout) -> ResolutionMeasurement {
    let mut groups: Vec<GroupContrast> = layout
        .groups
        .iter()
        .map(|g| GroupContrast {
            spacing_um: g.spacing,
            orientation: g.orientation,
            contrast: group_contrast(composite, g),
        })
        .collect();
    groups.sort_by(|a, b| b.spacing_um.total_cmp(&a.spacing_um));
    let mut resolved = None;
    for s in layout.spacings() {
        let worst = groups
            .iter()
            .filter(|g| g.spacing_um == s)
            .map(|g| g.contrast)
            .fold(f64::INFINITY, f64::min);
        if worst < CONTRAST_THRESHOLD {
            break;
        }
        resolved = Some(Length::um(s));
    }
    ResolutionMeasurement { groups, resolved }
}
