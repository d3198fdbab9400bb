//! Focus metric and best-slice selection for axial stacks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::CameraIndex;
use crate::error::{McamError, Result};
use crate::scene_sim::{CameraFrame, FrameSet};

/// Smallest region side the metric accepts.
pub const MIN_REGION_PX: usize = 16;

/// Rectangle in frame pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    /// Centred region covering `fraction` of each frame dimension.
    pub fn central(frame: &CameraFrame, fraction: f64) -> Region {
        let (w, h) = (frame.width(), frame.height());
        let rw = ((w as f64 * fraction).round() as usize).clamp(1, w);
        let rh = ((h as f64 * fraction).round() as usize).clamp(1, h);
        Region {
            x0: (w - rw) / 2,
            y0: (h - rh) / 2,
            width: rw,
            height: rh,
        }
    }
}

/// Variance of the 4-neighbour Laplacian over `region` (central half of the
/// frame when `None`). Pixels on the frame border are skipped.
pub fn laplacian_focus_metric(frame: &CameraFrame, region: Option<Region>) -> Result<f64> {
    let region = region.unwrap_or_else(|| Region::central(frame, 0.5));
    if region.width < MIN_REGION_PX || region.height < MIN_REGION_PX {
        return Err(McamError::Domain(format!(
            "focus region {}×{} is below {MIN_REGION_PX}×{MIN_REGION_PX} px",
            region.width, region.height
        )));
    }
    let (w, h) = (frame.width(), frame.height());
    if region.x0 + region.width > w || region.y0 + region.height > h {
        return Err(McamError::Domain("focus region exceeds the frame".into()));
    }
    let p = &frame.pixels;
    let (c0, c1) = (region.x0.max(1), (region.x0 + region.width).min(w - 1));
    let (r0, r1) = (region.y0.max(1), (region.y0 + region.height).min(h - 1));
    let mut lap = Vec::with_capacity((r1 - r0) * (c1 - c0));
    for r in r0..r1 {
        for c in c0..c1 {
            lap.push(
                p[[r - 1, c]] as f64 + p[[r + 1, c]] as f64 + p[[r, c - 1]] as f64 + p[[r, c + 1]] as f64
                    - 4.0 * p[[r, c]] as f64,
            );
        }
    }
    let n = lap.len() as f64;
    let mean = lap.iter().sum::<f64>() / n;
    Ok(lap.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusDecision {
    pub camera: CameraIndex,
    pub chosen: usize,
    pub metrics: Vec<f64>,
    /// Every slice scored zero; `chosen` is the centre slice.
    pub featureless: bool,
}

/// Lower of the two middle indices for even counts.
fn centre_index(n: usize) -> usize {
    (n - 1) / 2
}

/// Index of the largest metric; ties go to the slice nearest the centre of
/// the stack, then to the lower index.
pub fn choose_slice(metrics: &[f64]) -> (usize, bool) {
    let n = metrics.len();
    let best = metrics.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(best > 0.0) {
        return (centre_index(n), true);
    }
    let centre = (n as f64 - 1.0) / 2.0;
    let chosen = (0..n)
        .filter(|&i| metrics[i] == best)
        .min_by(|&a, &b| {
            let (da, db) = ((a as f64 - centre).abs(), (b as f64 - centre).abs());
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .expect("non-empty stack");
    (chosen, false)
}

/// Best slice of one camera's axial stack.
pub fn select_focus(stack: &[&CameraFrame]) -> Result<FocusDecision> {
    if stack.len() < 2 {
        return Err(McamError::Domain(format!("focus stack has {} slices; need at least 2", stack.len())));
    }
    let camera = stack[0].camera;
    if stack.iter().any(|f| f.camera != camera) {
        return Err(McamError::Config("focus stack mixes cameras".into()));
    }
    let metrics = stack
        .par_iter()
        .map(|f| laplacian_focus_metric(f, None))
        .collect::<Result<Vec<f64>>>()?;
    let (chosen, featureless) = choose_slice(&metrics);
    Ok(FocusDecision {
        camera,
        chosen,
        metrics,
        featureless,
    })
}

/// Per-camera decisions for an axial stack of frame sets (one set per slice).
pub fn select_focus_sets(stack: &[FrameSet]) -> Result<Vec<FocusDecision>> {
    let first = stack
        .first()
        .ok_or_else(|| McamError::Domain("focus stack is empty".into()))?;
    first
        .frames
        .iter()
        .map(|f| {
            let slices = stack
                .iter()
                .map(|s| {
                    s.frame(f.camera)
                        .ok_or_else(|| McamError::Config(format!("camera {} missing from a stack slice", f.camera)))
                })
                .collect::<Result<Vec<_>>>()?;
            select_focus(&slices)
        })
        .collect()
}

/// Frame set holding each camera's chosen slice.
pub fn apply_focus(stack: &[FrameSet], decisions: &[FocusDecision]) -> Result<FrameSet> {
    let first = stack
        .first()
        .ok_or_else(|| McamError::Domain("focus stack is empty".into()))?;
    let frames = decisions
        .iter()
        .map(|d| {
            stack
                .get(d.chosen)
                .and_then(|s| s.frame(d.camera))
                .cloned()
                .ok_or_else(|| McamError::Config(format!("no slice {} for camera {}", d.chosen, d.camera)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stage = first.stage_offset;
    stage.z = crate::units::Length::ZERO;
    Ok(FrameSet {
        frames,
        config: first.config.clone(),
        stage_offset: stage,
    })
}
