//! Corner detection and window matching between two cameras.

use nalgebra::{Matrix4, Vector4};
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::DepthCalibration;
use crate::array_model::{ArrayConfig, CameraIndex};
use crate::error::{McamError, Result};
use crate::raster::{self, Image};
use crate::scene_sim::CameraFrame;

/// Fewer matches than this flags the set as sparse.
pub const MIN_MATCHES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOptions {
    /// Odd correlation window side.
    pub window: usize,
    /// Search half-width along the baseline, in frame pixels.
    pub search_along: usize,
    /// Search half-width across the baseline.
    pub search_across: usize,
    pub max_points: usize,
    pub min_distance: usize,
    /// Minimum NCC for a match to be kept.
    pub min_score: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            window: 15,
            search_along: 24,
            search_across: 4,
            max_points: 160,
            min_distance: 10,
            min_score: 0.8,
        }
    }
}

/// One correspondence. Points are sensor coordinates (full-resolution
/// pixels) relative to each camera's calibrated optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub point_a: (f64, f64),
    pub point_b: (f64, f64),
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub camera_a: CameraIndex,
    pub camera_b: CameraIndex,
    pub matches: Vec<Match>,
    /// Object-plane axis positions of both cameras at capture, µm.
    pub axis_a_um: (f64, f64),
    pub axis_b_um: (f64, f64),
    /// Sensor pixel size of the match coordinates, µm.
    pub pixel_um: f64,
    pub sparse: bool,
}

impl MatchSet {
    /// Unit baseline direction from `a` to `b`.
    pub fn baseline_dir(&self) -> (f64, f64) {
        let (bx, by) = (self.axis_b_um.0 - self.axis_a_um.0, self.axis_b_um.1 - self.axis_a_um.1);
        let n = bx.hypot(by);
        if n == 0.0 {
            (1.0, 0.0)
        } else {
            (bx / n, by / n)
        }
    }

    pub fn baseline_um(&self) -> f64 {
        (self.axis_b_um.0 - self.axis_a_um.0).hypot(self.axis_b_um.1 - self.axis_a_um.1)
    }

    /// Signed disparities `(d1, d2)` of one match in sensor pixels.
    pub fn disparities(&self, m: &Match) -> (f64, f64) {
        let u = self.baseline_dir();
        (u.0 * m.point_a.0 + u.1 * m.point_a.1, -(u.0 * m.point_b.0 + u.1 * m.point_b.1))
    }
}

/// Shi–Tomasi minimum-eigenvalue response over `half`-radius windows.
fn corner_response(img: &Image, half: usize) -> Array2<f64> {
    let (h, w) = img.dim();
    let g = |r: usize, c: usize| img[[r, c]] as f64;
    let mut ixx = Array2::<f64>::zeros((h, w));
    let mut iyy = Array2::<f64>::zeros((h, w));
    let mut ixy = Array2::<f64>::zeros((h, w));
    for r in 1..h.saturating_sub(1) {
        for c in 1..w.saturating_sub(1) {
            let gx = 0.5 * (g(r, c + 1) - g(r, c - 1));
            let gy = 0.5 * (g(r + 1, c) - g(r - 1, c));
            ixx[[r, c]] = gx * gx;
            iyy[[r, c]] = gy * gy;
            ixy[[r, c]] = gx * gy;
        }
    }
    let box_sum = |m: &Array2<f64>| -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((h, w));
        for r in half..h.saturating_sub(half) {
            for c in half..w.saturating_sub(half) {
                out[[r, c]] = m.slice(s![r - half..=r + half, c - half..=c + half]).sum();
            }
        }
        out
    };
    let (sxx, syy, sxy) = (box_sum(&ixx), box_sum(&iyy), box_sum(&ixy));
    Array2::from_shape_fn((h, w), |i| {
        let tr = sxx[i] + syy[i];
        let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
        0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt())
    })
}

/// Strongest well-separated corners at least `border` pixels from the edge.
pub fn interest_points(img: &Image, border: usize, opts: &MatchOptions) -> Vec<(usize, usize)> {
    let resp = corner_response(img, 2);
    let (h, w) = img.dim();
    if h <= 2 * border || w <= 2 * border {
        return Vec::new();
    }
    let max = resp.iter().cloned().fold(0.0, f64::max);
    if max <= 1e-12 {
        return Vec::new();
    }
    // Adaptive threshold relative to the strongest response in view.
    let threshold = 0.05 * max;
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for r in border..h - border {
        for c in border..w - border {
            let v = resp[[r, c]];
            if v < threshold {
                continue;
            }
            let is_max = (r - 1..=r + 1).all(|rr| (c - 1..=c + 1).all(|cc| resp[[rr, cc]] <= v));
            if is_max {
                cands.push((v, r, c));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let md2 = (opts.min_distance * opts.min_distance) as i64;
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    for (_, r, c) in cands {
        if chosen
            .iter()
            .all(|&(rr, cc)| (rr as i64 - r as i64).pow(2) + (cc as i64 - c as i64).pow(2) >= md2)
        {
            chosen.push((r, c));
            if chosen.len() == opts.max_points {
                break;
            }
        }
    }
    chosen
}

fn standardize(p: &Array2<f64>) -> Option<Array2<f64>> {
    let n = p.len() as f64;
    let m = p.sum() / n;
    let var = p.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (var > 1e-10).then(|| p.mapv(|v| (v - m) / var.sqrt()))
}

fn ncc_at(t: &Array2<f64>, img: &Image, r0: usize, c0: usize) -> f64 {
    let k = t.nrows();
    let patch = img.slice(s![r0..r0 + k, c0..c0 + k]).mapv(|v| v as f64);
    match standardize(&patch) {
        Some(p) => (t * &p).sum() / t.len() as f64,
        None => f64::NEG_INFINITY,
    }
}

/// Gauss-Newton polish of a window position on a bicubic model of `img`,
/// solving jointly for shift, gain and bias:
/// `template(r, c) ≈ g·img(y + r, x + c) + k`.
fn refine(template: &Array2<f64>, img: &Image, start: (f64, f64)) -> Option<(f64, f64)> {
    let k = template.nrows();
    let (h, w) = img.dim();
    let (mut x, mut y) = start;
    let mut gain_bias: Option<(f64, f64)> = None;
    for _ in 0..30 {
        if x < 1.0 || y < 1.0 || x + k as f64 > (w - 2) as f64 || y + k as f64 > (h - 2) as f64 {
            return None;
        }
        let mut samples = Vec::with_capacity(k * k);
        for r in 0..k {
            for c in 0..k {
                let (v, gx, gy) = raster::bicubic_with_gradient(img, x + c as f64, y + r as f64);
                samples.push((template[[r, c]], v, gx, gy));
            }
        }
        let (g, b) = match gain_bias {
            Some(gb) => gb,
            None => {
                let n = samples.len() as f64;
                let (st, sv) = samples.iter().fold((0.0, 0.0), |a, e| (a.0 + e.0, a.1 + e.1));
                let (mt, mv) = (st / n, sv / n);
                let cov: f64 = samples.iter().map(|e| (e.0 - mt) * (e.1 - mv)).sum();
                let var: f64 = samples.iter().map(|e| (e.1 - mv).powi(2)).sum();
                if var < 1e-12 {
                    return None;
                }
                let g = cov / var;
                (g, mt - g * mv)
            }
        };
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jte = Vector4::<f64>::zeros();
        for (t, v, gx, gy) in samples {
            let e = t - (g * v + b);
            let j = Vector4::new(g * gx, g * gy, v, 1.0);
            jtj += j * j.transpose();
            jte += j * e;
        }
        let step = jtj.cholesky()?.solve(&jte);
        x += step[0];
        y += step[1];
        gain_bias = Some((g + step[2], b + step[3]));
        if (x - start.0).abs() > 1.5 || (y - start.1).abs() > 1.5 {
            return None;
        }
        if step[0].abs() < 1e-7 && step[1].abs() < 1e-7 {
            break;
        }
    }
    Some((x, y))
}

/// Frame pixel `(c, r)` centre in full-resolution sensor coordinates.
fn to_sensor(f: &CameraFrame, c: f64, r: f64) -> (f64, f64) {
    let b = f.binning as f64;
    (f.roi.x0 as f64 + (c + 0.5) * b, f.roi.y0 as f64 + (r + 0.5) * b)
}

fn to_frame(f: &CameraFrame, x: f64, y: f64) -> (f64, f64) {
    let b = f.binning as f64;
    ((x - f.roi.x0 as f64) / b - 0.5, (y - f.roi.y0 as f64) / b - 0.5)
}

/// Match corners of `a` into `b`, searching around the position predicted
/// by the calibrated in-focus disparity.
pub fn match_features(
    a: &CameraFrame,
    b: &CameraFrame,
    config: &ArrayConfig,
    cal: &DepthCalibration,
    opts: &MatchOptions,
) -> Result<MatchSet> {
    if a.binning != b.binning {
        return Err(McamError::Config("matched frames must share a binning factor".into()));
    }
    if opts.window.is_multiple_of(2) || opts.window < 5 {
        return Err(McamError::Config("match window must be odd and at least 5".into()));
    }
    let axis_a = cal.axis(a.camera, config);
    let axis_b = cal.axis(b.camera, config);
    let mut set = MatchSet {
        camera_a: a.camera,
        camera_b: b.camera,
        matches: Vec::new(),
        axis_a_um: (a.optical_axis.0.as_um(), a.optical_axis.1.as_um()),
        axis_b_um: (b.optical_axis.0.as_um(), b.optical_axis.1.as_um()),
        pixel_um: config.sensor.pixel_pitch.as_um(),
        sparse: true,
    };
    let u = set.baseline_dir();
    // Expected r_a − r_b at the calibrated plane, along the baseline.
    let shift = cal.focus_disparity_px(set.baseline_um(), config);
    let half = opts.window / 2;
    let (rx, ry) = if u.0.abs() > 0.9 {
        (opts.search_along, opts.search_across)
    } else if u.1.abs() > 0.9 {
        (opts.search_across, opts.search_along)
    } else {
        (opts.search_along, opts.search_along)
    };

    let points = interest_points(&a.pixels, half + 1, opts);
    let (hb, wb) = b.pixels.dim();
    for (r, c) in points {
        let tpl = a.pixels.slice(s![r - half..=r + half, c - half..=c + half]).mapv(|v| v as f64);
        let Some(tpl) = standardize(&tpl) else { continue };
        let sa = to_sensor(a, c as f64, r as f64);
        let ra = (sa.0 - axis_a.0, sa.1 - axis_a.1);
        let rb = (ra.0 - shift * u.0, ra.1 - shift * u.1);
        let (pc, pr) = to_frame(b, rb.0 + axis_b.0, rb.1 + axis_b.1);
        let (pc, pr) = (pc.round() as i64, pr.round() as i64);

        let mut best = (f64::NEG_INFINITY, 0i64, 0i64);
        let mut surf = vec![vec![f64::NEG_INFINITY; 2 * rx + 1]; 2 * ry + 1];
        for dy in -(ry as i64)..=ry as i64 {
            for dx in -(rx as i64)..=rx as i64 {
                let (cc, rr) = (pc + dx, pr + dy);
                if cc - (half as i64) < 0 || rr - (half as i64) < 0 || cc + half as i64 >= wb as i64 || rr + half as i64 >= hb as i64 {
                    continue;
                }
                let v = ncc_at(&tpl, &b.pixels, (rr - half as i64) as usize, (cc - half as i64) as usize);
                surf[(dy + ry as i64) as usize][(dx + rx as i64) as usize] = v;
                if v > best.0 {
                    best = (v, dx, dy);
                }
            }
        }
        let (score, dx, dy) = best;
        if score < opts.min_score || dx.unsigned_abs() as usize == rx || dy.unsigned_abs() as usize == ry {
            continue;
        }
        let (iy, ix) = ((dy + ry as i64) as usize, (dx + rx as i64) as usize);
        let mut n = [[0.0; 3]; 3];
        let mut ok = true;
        for (jr, row) in n.iter_mut().enumerate() {
            for (jc, v) in row.iter_mut().enumerate() {
                *v = surf[iy + jr - 1][ix + jc - 1];
                ok &= v.is_finite();
            }
        }
        if !ok {
            continue;
        }
        let (fx, fy) = raster::quadratic_peak(&n);
        let coarse = ((pc + dx) as f64 + fx, (pr + dy) as f64 + fy);
        let start = (coarse.0 - half as f64, coarse.1 - half as f64);
        // Matches that cannot be polished to sub-pixel precision are dropped.
        let Some((x, y)) = refine(&tpl, &b.pixels, start) else { continue };
        let (bx, by) = (x + half as f64, y + half as f64);
        let sb = to_sensor(b, bx, by);
        set.matches.push(Match {
            point_a: ra,
            point_b: (sb.0 - axis_b.0, sb.1 - axis_b.1),
            score,
        });
    }
    set.sparse = set.matches.len() < MIN_MATCHES;
    Ok(set)
}
