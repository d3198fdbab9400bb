//! Named array configurations.
//!
//! `multi_view`, `continuous` and `tiled` are the 6×9 prototype
//! (3120×4208 px sensors with 1.1 µm pixels, 13.5 mm pitch, 25.05 mm f/4
//! lenses) at M = 0.1, 0.2 and 1. `quad_board` is four 24-camera boards
//! joined into an 8×12 array at 19 mm pitch with 10 MP sensors.
//!
//! [`desk_scale`] shrinks any configuration to a small sub-array that can be
//! rendered and stitched in seconds while keeping the pixel size, optics,
//! magnification and sensor-to-pitch ratio (hence the regime and overlap).

use serde::{Deserialize, Serialize};

use crate::array_model::{ArrayConfig, ArrayLayout, LensSpec, SensorSpec};
use crate::error::{McamError, Result};
use crate::units::Length;

/// Nominal working distances reported alongside the prototype presets.
pub const NOMINAL_WD_MM: [(&str, f64); 3] = [("multi_view", 250.0), ("continuous", 140.0), ("tiled", 5.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    MultiView,
    Continuous,
    Tiled,
    QuadBoard,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::MultiView, Preset::Continuous, Preset::Tiled, Preset::QuadBoard];

    pub fn name(self) -> &'static str {
        match self {
            Preset::MultiView => "multi_view",
            Preset::Continuous => "continuous",
            Preset::Tiled => "tiled",
            Preset::QuadBoard => "quad_board",
        }
    }

    pub fn from_name(name: &str) -> Result<Preset> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| McamError::Config(format!("unknown preset {name:?}")))
    }

    pub fn config(self) -> ArrayConfig {
        match self {
            Preset::MultiView => prototype(0.1),
            Preset::Continuous => prototype(0.2),
            Preset::Tiled => prototype(1.0),
            Preset::QuadBoard => quad_board(),
        }
    }

    /// Nominal working distance quoted for the preset, if any.
    pub fn nominal_working_distance(self) -> Option<Length> {
        NOMINAL_WD_MM
            .iter()
            .find(|(n, _)| *n == self.name())
            .map(|&(_, wd)| Length::mm(wd))
    }
}

pub fn prototype_sensor() -> SensorSpec {
    SensorSpec {
        pixel_pitch: Length::um(1.1),
        pixels_x: 4208,
        pixels_y: 3120,
        bit_depth: 8,
    }
}

pub fn prototype_lens() -> LensSpec {
    LensSpec {
        focal_length: Length::mm(25.05),
        f_number: 4.0,
        outer_diameter: Length::mm(13.0),
    }
}

/// The 6×9 prototype at magnification `m`.
pub fn prototype(m: f64) -> ArrayConfig {
    ArrayConfig::new(
        prototype_sensor(),
        prototype_lens(),
        ArrayLayout::new(6, 9, Length::mm(13.5), Length::mm(13.5)),
        m,
    )
    .expect("prototype preset is valid")
}

/// Four joined 24-camera boards: 8×12 cameras at 19 mm pitch.
///
/// The sensor is a 3648×2736 (10 MP) part with 1.4 µm pixels; lens and
/// magnification are chosen for a continuous array with ~25% overlap.
pub fn quad_board() -> ArrayConfig {
    ArrayConfig::new(
        SensorSpec {
            pixel_pitch: Length::um(1.4),
            pixels_x: 3648,
            pixels_y: 2736,
            bit_depth: 8,
        },
        prototype_lens(),
        ArrayLayout::new(8, 12, Length::mm(19.0), Length::mm(19.0)),
        0.15,
    )
    .expect("quad board preset is valid")
}

fn round_even(v: f64) -> usize {
    let r = (v / 2.0).round() as usize * 2;
    r.max(2)
}

/// Shrink `config` into a `rows × cols` sub-array whose long sensor side is
/// about `target_long_px` pixels.
///
/// Pixel pitch, optics and magnification are unchanged. The pitch is scaled
/// by the same factor as the pixel counts and snapped to a multiple of
/// `100·δ`, so the inter-camera pitch is a whole number of object-side
/// pixels for any magnification that is a multiple of 0.01.
pub fn desk_scale(config: &ArrayConfig, rows: usize, cols: usize, target_long_px: usize) -> Result<ArrayConfig> {
    let sensor = &config.sensor;
    let long_px = sensor.pixels_x.max(sensor.pixels_y) as f64;
    let factor = (long_px / target_long_px as f64).max(1.0);
    let quantum = sensor.pixel_pitch * 100.0;
    let snap = |p: Length| -> Length {
        let n = ((p / factor) / quantum).round().max(1.0);
        quantum * n
    };
    let pitch_x = snap(config.layout.pitch_x);
    let pitch_y = snap(config.layout.pitch_y);
    let scale_x = pitch_x / config.layout.pitch_x;
    let scale_y = pitch_y / config.layout.pitch_y;
    let new_sensor = SensorSpec {
        pixel_pitch: sensor.pixel_pitch,
        pixels_x: round_even(sensor.pixels_x as f64 * scale_x).min((pitch_x / sensor.pixel_pitch).floor() as usize),
        pixels_y: round_even(sensor.pixels_y as f64 * scale_y).min((pitch_y / sensor.pixel_pitch).floor() as usize),
        bit_depth: sensor.bit_depth,
    };
    let lens = LensSpec {
        outer_diameter: config.lens.outer_diameter * scale_x.min(scale_y),
        ..config.lens.clone()
    };
    ArrayConfig::new(new_sensor, lens, ArrayLayout::new(rows, cols, pitch_x, pitch_y), config.magnification)
}

/// A 2×2 desk-scale sub-array of a preset (342×254 px sensors, 1.1 mm pitch
/// for the prototype).
pub fn desk(preset: Preset) -> ArrayConfig {
    desk_scale(&preset.config(), 2, 2, 342).expect("desk scale of a preset is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::{classify_regime, Axis};

    #[test]
    fn desk_keeps_regimes_and_integer_pitch() {
        for preset in [Preset::MultiView, Preset::Continuous, Preset::Tiled] {
            let full = preset.config();
            let d = desk(preset);
            assert_eq!(d.sensor.pixels_x, 342);
            assert_eq!(d.sensor.pixels_y, 254);
            assert!((d.layout.pitch_x.as_mm() - 1.1).abs() < 1e-12);
            let a = classify_regime(&full);
            let b = classify_regime(&d);
            for axis in Axis::BOTH {
                assert_eq!(a.axis(axis).regime, b.axis(axis).regime);
                assert!((a.axis(axis).overlap_fraction - b.axis(axis).overlap_fraction).abs() < 0.01);
            }
            let px = d.layout.pitch_x / d.object_pixel();
            assert!((px - px.round()).abs() < 1e-9, "{px}");
        }
    }

    #[test]
    fn presets_round_trip_names() {
        for p in Preset::ALL {
            assert_eq!(Preset::from_name(p.name()).unwrap(), p);
            p.config().validate().unwrap();
        }
        assert!(Preset::from_name("nope").is_err());
        assert_eq!(quad_board().layout.camera_count(), 96);
    }
}
