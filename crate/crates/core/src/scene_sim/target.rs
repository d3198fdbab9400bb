//! Bar-pattern resolution targets.

use serde::{Deserialize, Serialize};

use super::scene::{BarGroup, BarOrientation, NoiseTexture, Scene, SceneContent};
use crate::error::{McamError, Result};
use crate::units::Length;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetOrientation {
    Horizontal,
    #[default]
    Vertical,
    Both,
}

/// What sits between the bar groups.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TargetBackground {
    #[default]
    Dark,
    /// Random texture, useful when the target also drives registration.
    Texture { seed: u64, cell_um: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionTargetSpec {
    /// Full-pitch spacings, strictly decreasing.
    pub bar_groups: Vec<Length>,
    pub bars_per_group: usize,
    #[serde(default)]
    pub orientation: TargetOrientation,
    /// Top-left corner of the first group; defaults to a layout centred on the origin.
    #[serde(default)]
    pub anchor: Option<(Length, Length)>,
    #[serde(default)]
    pub background: TargetBackground,
}

impl ResolutionTargetSpec {
    pub fn new(bar_groups: Vec<Length>, bars_per_group: usize) -> Self {
        ResolutionTargetSpec {
            bar_groups,
            bars_per_group,
            orientation: TargetOrientation::Vertical,
            anchor: None,
            background: TargetBackground::Dark,
        }
    }
}

/// Where each group ended up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetLayout {
    pub groups: Vec<BarGroup>,
}

impl TargetLayout {
    /// Distinct spacings, coarsest first.
    pub fn spacings(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.groups.iter().map(|g| g.spacing).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s.dedup();
        s
    }
}

/// Bar length as a multiple of the group spacing.
pub const BAR_LENGTH_PERIODS: f64 = 5.0;

fn snap_up(v: f64, q: f64) -> f64 {
    (v / q).ceil() * q
}

/// Lay out bar groups left to right with each group starting on a multiple
/// of its own spacing.
pub fn make_resolution_target(
    spec: &ResolutionTargetSpec,
    extent: (Length, Length),
    sample_pitch: Length,
) -> Result<(Scene, TargetLayout)> {
    if spec.bar_groups.is_empty() || spec.bars_per_group == 0 {
        return Err(McamError::Config("resolution target needs at least one group with one bar pair".into()));
    }
    if spec.bar_groups.windows(2).any(|w| w[1] >= w[0]) {
        return Err(McamError::Config("bar group spacings must be strictly decreasing".into()));
    }
    if let Some(s) = spec.bar_groups.iter().find(|s| s.as_um() < 2.0 * sample_pitch.as_um() * (1.0 - 1e-12)) {
        return Err(McamError::Render(format!(
            "spacing {s} is below twice the sample pitch {sample_pitch} and cannot be represented"
        )));
    }

    let pairs = spec.bars_per_group as f64;
    let orientations: Vec<BarOrientation> = match spec.orientation {
        TargetOrientation::Vertical => vec![BarOrientation::Vertical],
        TargetOrientation::Horizontal => vec![BarOrientation::Horizontal],
        TargetOrientation::Both => vec![BarOrientation::Vertical, BarOrientation::Horizontal],
    };
    let footprint = |s: f64, o: BarOrientation| match o {
        BarOrientation::Vertical => (s * pairs, s * BAR_LENGTH_PERIODS),
        BarOrientation::Horizontal => (s * BAR_LENGTH_PERIODS, s * pairs),
    };
    let gap = |s: f64| 2.0 * s;

    let mut total_w = 0.0;
    let mut max_h: f64 = 0.0;
    for s in spec.bar_groups.iter().map(|s| s.as_um()) {
        for &o in &orientations {
            let (w, h) = footprint(s, o);
            total_w += w + gap(s);
            max_h = max_h.max(h);
        }
    }
    let (ax, ay) = match spec.anchor {
        Some((x, y)) => (x.as_um(), y.as_um()),
        None => (-total_w / 2.0, -max_h / 2.0),
    };

    let mut groups = Vec::new();
    let mut cursor = ax;
    for s in spec.bar_groups.iter().map(|s| s.as_um()) {
        for &o in &orientations {
            let x0 = snap_up(cursor, s);
            let y0 = snap_up(ay, s);
            let (w, _) = footprint(s, o);
            groups.push(BarGroup {
                spacing: s,
                pairs: spec.bars_per_group,
                orientation: o,
                x0,
                y0,
                length: s * BAR_LENGTH_PERIODS,
            });
            cursor = x0 + w + gap(s);
        }
    }

    let background = match &spec.background {
        TargetBackground::Dark => SceneContent::Uniform(0.0),
        TargetBackground::Texture { seed, cell_um } => SceneContent::Noise(NoiseTexture::new(*seed, *cell_um)),
    };
    let scene = Scene::new(
        SceneContent::Bars {
            groups: groups.clone(),
            background: Box::new(background),
        },
        extent,
        sample_pitch,
    )?;
    let bounds = scene.bounds();
    for g in &groups {
        let r = g.rect();
        if r.intersect(&bounds) != r {
            return Err(McamError::Config(format!(
                "bar group at spacing {} µm does not fit inside the scene extent",
                g.spacing
            )));
        }
    }
    Ok((scene, TargetLayout { groups }))
}
