//! Simulation and processing toolkit for planar arrays of small cameras.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod array_model;
pub mod depth3d;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod presets;
pub mod raster;
pub mod registration;
pub mod scene_sim;
pub mod units;

pub use error::{McamError, Result};
pub use units::{Area, Length};
