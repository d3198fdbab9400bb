//! Calibrate-then-stitch: pairwise offsets, global solve, feathered
//! compositing, pyramid export and resolution read-out.

pub mod blend;
pub mod pairwise;
pub mod pyramid;
pub mod resolution;
pub mod solve;

pub use blend::{
    calibrate, calibrated_tiles, composite, composite_tiles, feather_ramps, feather_weights, measure_pairs,
    nominal_anchors, nominal_calibration, Composite, CompositeInfo, Tile,
};
pub use pairwise::{estimate_pairwise_offset, PairOffset, CONFIDENCE_THRESHOLD};
pub use pyramid::{build_pyramid, Pyramid, TileGrid};
pub use resolution::{measure_resolution, GroupContrast, ResolutionMeasurement, CONTRAST_THRESHOLD};
pub use solve::{solve_global_poses, StitchCalibration};
