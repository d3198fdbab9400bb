//! Synthetic scenes and the per-camera forward renderer.

pub mod render;
pub mod scene;
pub mod target;

pub use render::{
    apply_binning, defocus_sigma_px, render_array, render_camera, render_focal_stack, CameraFrame, FrameSet,
    RenderOptions, Roi, RoiSelection, StageOffset,
};
pub use scene::{BarGroup, BarOrientation, HeightField, NoiseTexture, RasterTexture, Rect, Scene, SceneContent};
pub use target::{make_resolution_target, ResolutionTargetSpec, TargetBackground, TargetLayout, TargetOrientation};
