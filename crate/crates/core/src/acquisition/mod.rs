//! Tiled scanning, focus stacking and acquisition throughput.

pub mod focus;
pub mod scan;
pub mod throughput;

pub use focus::{
    apply_focus, choose_slice, laplacian_focus_metric, select_focus, select_focus_sets, FocusDecision, Region,
    MIN_REGION_PX,
};
pub use scan::{array_footprint, check_coverage, plan_tiled_scan, CoverageReport, ScanPlan};
pub use throughput::{frame_bytes, max_frame_rate, recording_capacity, throughput_report, DataPath, ThroughputReport};

use crate::error::{McamError, Result};
use crate::registration::{calibrated_tiles, composite_tiles, Composite, StitchCalibration, Tile};
use crate::scene_sim::FrameSet;

/// Blend the frames of every scan position into one composite.
///
/// With one calibration per position, each calibration's reference origin
/// (which already includes its stage offset) places that position. With a
/// single shared calibration, measured at the first position, the anchors of
/// position `i` are shifted by its stage offset relative to the first one.
pub fn assemble_tiled_composite(scans: &[FrameSet], calibrations: &[StitchCalibration]) -> Result<Composite> {
    let first = scans
        .first()
        .ok_or_else(|| McamError::Config("no scan positions to assemble".into()))?;
    if calibrations.len() != 1 && calibrations.len() != scans.len() {
        return Err(McamError::Config(format!(
            "{} calibrations for {} scan positions; give one shared or one per position",
            calibrations.len(),
            scans.len()
        )));
    }
    let pixel = calibrations[0].composite_pixel_size;
    if calibrations.iter().any(|c| (c.composite_pixel_size.as_um() - pixel.as_um()).abs() > 1e-9) {
        return Err(McamError::Config("calibrations disagree on the composite pixel size".into()));
    }
    let origin = calibrations[0].reference_origin;
    let mut tiles: Vec<Tile> = Vec::new();
    for (i, set) in scans.iter().enumerate() {
        let (cal, shift) = if calibrations.len() == 1 {
            let s = set.stage_offset;
            let s0 = first.stage_offset;
            (&calibrations[0], ((s.x - s0.x) / pixel, (s.y - s0.y) / pixel))
        } else {
            let c = &calibrations[i];
            (c, ((c.reference_origin.0 - origin.0) / pixel, (c.reference_origin.1 - origin.1) / pixel))
        };
        for mut t in calibrated_tiles(set, cal)? {
            t.anchor = (t.anchor.0 + shift.0, t.anchor.1 + shift.1);
            tiles.push(t);
        }
    }
    Ok(composite_tiles(&tiles, pixel, origin))
}
