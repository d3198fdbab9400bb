//! Property tests for the geometric and arithmetic invariants.

use mcam_core::acquisition::{check_coverage, frame_bytes, laplacian_focus_metric, plan_tiled_scan};
use mcam_core::array_model::{classify_axis, image_distance, object_distance, CameraIndex, LensSpec, Regime, SensorSpec, StepMode};
use mcam_core::depth3d::triangulate;
use mcam_core::presets;
use mcam_core::registration::{feather_ramps, feather_weights, Tile};
use mcam_core::scene_sim::{CameraFrame, Roi};
use mcam_core::Length;
use ndarray::Array2;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn regime_agrees_with_overlap_and_view_count(
        delta in 0.8f64..5.0,
        n_px in 500usize..6000,
        p_extra in 1.0f64..10.0,
        m in 0.01f64..3.0,
    ) {
        let s = delta * n_px as f64;
        let p = s * p_extra;
        let cov = classify_axis(Length::um(s), Length::um(p), m).unwrap();
        let ratio = s / (p * m);
        prop_assert_eq!(cov.regime == Regime::Tiled, cov.overlap_fraction < 0.0);
        prop_assert_eq!(cov.regime == Regime::MultiView, cov.views_per_point >= 2);
        prop_assert_eq!(cov.regime == Regime::Tiled, cov.views_per_point == 0);
        if (ratio - ratio.round()).abs() > 1e-9 {
            prop_assert_eq!(cov.views_per_point, ratio.floor() as u64);
        }
        prop_assert!((cov.overlap_fraction - (1.0 - p * m / s)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn thin_lens_conjugates(f_mm in 5.0f64..60.0, m in 0.02f64..4.0) {
        let lens = LensSpec { focal_length: Length::mm(f_mm), f_number: 4.0, outer_diameter: Length::mm(5.0) };
        let id = image_distance(&lens, m).unwrap().as_mm();
        let od = object_distance(&lens, m).unwrap().as_mm();
        prop_assert!((1.0 / id + 1.0 / od - 1.0 / f_mm).abs() < 1e-12 / f_mm);
        prop_assert!((id / od - m).abs() < 1e-9 * m);
    }

    #[test]
    fn triangulation_inverts_projection(
        depth_mm in 20.0f64..500.0,
        x_frac in 0.05f64..0.95,
        pitch_mm in 2.0f64..30.0,
        id_mm in 10.0f64..60.0,
    ) {
        // Project a point between two axes and triangulate it back.
        let (p, id, depth) = (pitch_mm * 1000.0, id_mm * 1000.0, depth_mm * 1000.0);
        let x = x_frac * p;
        let d1 = x * id / depth;
        let d2 = (p - x) * id / depth;
        let est = triangulate(Length::um(d1), Length::um(d2), Length::um(p), Length::um(id)).unwrap();
        prop_assert!((est.as_um() - depth).abs() < 1e-9 * depth);
    }

    #[test]
    fn feather_weights_partition_unity(
        ax in 0.0f64..40.0,
        ay in 0.0f64..40.0,
        bx in 20.0f64..80.0,
        by in -10.0f64..30.0,
        u in -5.0f64..140.0,
        v in -5.0f64..100.0,
    ) {
        let img_a = Array2::<f32>::zeros((50, 60));
        let img_b = Array2::<f32>::zeros((45, 70));
        let tiles = [
            Tile { image: &img_a, anchor: (ax, ay), gain: 1.0 },
            Tile { image: &img_b, anchor: (bx, by), gain: 1.0 },
        ];
        let w = feather_weights(&tiles, feather_ramps(&tiles), u, v);
        let inside = |t: &Tile| {
            let (h, wd) = t.image.dim();
            u > t.anchor.0 && v > t.anchor.1 && u < t.anchor.0 + wd as f64 && v < t.anchor.1 + h as f64
        };
        if w.is_empty() {
            prop_assert!(!tiles.iter().any(inside));
        } else {
            let total: f64 = w.iter().map(|e| e.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|e| e.1 >= 0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tiled_plans_cover_the_array(overlap in 0.0f64..0.5, per_axis in any::<bool>()) {
        let cfg = presets::prototype(1.0);
        let mode = if per_axis { StepMode::PerAxis } else { StepMode::UniformShortAxis };
        let plan = plan_tiled_scan(&cfg, overlap, mode, true).unwrap();
        let t = plan.max_travel();
        prop_assert!(t.0 <= cfg.layout.pitch_x && t.1 <= cfg.layout.pitch_y);
        let rep = check_coverage(&cfg, &plan, cfg.object_pixel()).unwrap();
        prop_assert!(rep.complete(), "{:?}", rep);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn binning_divides_frame_bytes_by_its_square(
        cams in 1usize..100,
        bx in 1usize..400,
        by in 1usize..400,
        b in 1usize..5,
    ) {
        let sensor = SensorSpec { pixel_pitch: Length::um(1.1), pixels_x: bx * b, pixels_y: by * b, bit_depth: 8 };
        let full = frame_bytes(&sensor, cams, 1, None).unwrap();
        let binned = frame_bytes(&sensor, cams, b, None).unwrap();
        prop_assert_eq!(full, binned * (b * b) as u64);
        prop_assert_eq!(full, (cams * bx * by * b * b) as u64);
    }

    #[test]
    fn focus_metric_scales_with_gain_squared_and_ignores_offset(
        seed in any::<u64>(),
        a in 0.1f64..10.0,
        b in -2.0f64..2.0,
    ) {
        let mut state = seed | 1;
        let img = Array2::from_shape_fn((48, 48), |_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 1024) as f32 / 1024.0
        });
        let frame = |pixels: Array2<f32>| CameraFrame {
            pixels,
            camera: CameraIndex::new(0, 0),
            optical_axis: (Length::ZERO, Length::ZERO),
            z_offset: Length::ZERO,
            exposure_id: 0,
            roi: Roi { x0: 0, y0: 0, width: 48, height: 48 },
            binning: 1,
        };
        let m0 = laplacian_focus_metric(&frame(img.clone()), None).unwrap();
        let m1 = laplacian_focus_metric(&frame(img.mapv(|v| (a * v as f64 + b) as f32)), None).unwrap();
        prop_assert!((m1 / (a * a * m0) - 1.0).abs() < 1e-4, "{} vs {}", m1, a * a * m0);
    }
}
