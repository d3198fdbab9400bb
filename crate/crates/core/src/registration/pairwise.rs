//! Translation between two overlapping frames.
//!
//! The overlap predicted by the nominal offset is cropped from both frames
//! and correlated with a masked normalized cross-correlation evaluated in the
//! frequency domain. The integer peak is refined by a quadratic fit over its
//! 3×3 neighbourhood and then polished with Gauss-Newton steps on a bicubic
//! model of the overlap.

use nalgebra::{Matrix4, Vector4};
use ndarray::{s, Array2};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::array_model::CameraIndex;
use crate::raster::{self, Image};

/// Pairs below this peak ratio fall back to the nominal offset.
pub const CONFIDENCE_THRESHOLD: f64 = 1.15;
/// Smallest usable overlap crop per side.
pub const MIN_OVERLAP_PX: usize = 32;
const FLAT_VARIANCE: f64 = 1e-8;

/// Residual displacement of camera `b` relative to camera `a`.
///
/// With anchors `t` (composite position of each frame's pixel (0, 0)),
/// `t_b − t_a = nominal + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOffset {
    pub cameras: (CameraIndex, CameraIndex),
    pub nominal: (f64, f64),
    pub offset: (f64, f64),
    /// `1 − second/peak`, clamped to [0, 1].
    pub confidence: f64,
    /// Correlation peak over the strongest competing local maximum.
    pub peak_ratio: f64,
    /// Mean intensity of the overlap in `a` and in `b`.
    pub overlap_means: (f64, f64),
}

impl PairOffset {
    pub fn is_confident(&self) -> bool {
        self.peak_ratio >= CONFIDENCE_THRESHOLD
    }

    pub fn reversed(&self) -> PairOffset {
        PairOffset {
            cameras: (self.cameras.1, self.cameras.0),
            nominal: (-self.nominal.0, -self.nominal.1),
            offset: (-self.offset.0, -self.offset.1),
            overlap_means: (self.overlap_means.1, self.overlap_means.0),
            ..*self
        }
    }

    fn flagged(cameras: (CameraIndex, CameraIndex), nominal: (f64, f64), means: (f64, f64)) -> Self {
        PairOffset {
            cameras,
            nominal,
            offset: (0.0, 0.0),
            confidence: 0.0,
            peak_ratio: 1.0,
            overlap_means: means,
        }
    }
}

/// Overlap of `a` (at the origin) and `b` (at integer offset `n`) in `a`'s
/// pixel coordinates: `(x0, y0, x1, y1)`.
fn overlap_rect(a: (usize, usize), b: (usize, usize), n: (i64, i64)) -> Option<(usize, usize, usize, usize)> {
    let (ah, aw) = (a.0 as i64, a.1 as i64);
    let (bh, bw) = (b.0 as i64, b.1 as i64);
    let x0 = n.0.max(0);
    let y0 = n.1.max(0);
    let x1 = (n.0 + bw).min(aw);
    let y1 = (n.1 + bh).min(ah);
    (x1 > x0 && y1 > y0).then_some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
}

fn fft2(data: &mut Array2<Complex<f64>>, planner: &mut FftPlanner<f64>, inverse: bool) {
    let (h, w) = data.dim();
    let row = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for mut r in data.rows_mut() {
        let mut buf: Vec<Complex<f64>> = r.to_vec();
        row.process(&mut buf);
        r.iter_mut().zip(buf).for_each(|(d, v)| *d = v);
    }
    let col = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    for mut c in data.columns_mut() {
        let mut buf: Vec<Complex<f64>> = c.to_vec();
        col.process(&mut buf);
        c.iter_mut().zip(buf).for_each(|(d, v)| *d = v);
    }
}

fn padded(src: &Array2<f64>, dims: (usize, usize)) -> Array2<Complex<f64>> {
    let mut out = Array2::from_elem(dims, Complex::new(0.0, 0.0));
    for ((r, c), &v) in src.indexed_iter() {
        out[[r, c]] = Complex::new(v, 0.0);
    }
    out
}

/// `C(s) = Σ_u a(u)·b(u − s)` for all circular shifts of the padded grid.
fn cross_correlate(a: &Array2<Complex<f64>>, b: &Array2<Complex<f64>>, planner: &mut FftPlanner<f64>) -> Array2<f64> {
    let n = a.len() as f64;
    let mut prod = Array2::from_shape_fn(a.dim(), |i| a[i] * b[i].conj());
    fft2(&mut prod, planner, true);
    prod.mapv(|v| v.re / n)
}

/// Masked NCC surface for shifts `|sx| ≤ rx`, `|sy| ≤ ry`, indexed
/// `[sy + ry, sx + rx]`. Shifts whose overlap is under half the crop are NaN.
fn ncc_surface(a: &Array2<f64>, b: &Array2<f64>, rx: usize, ry: usize) -> Array2<f64> {
    let (h, w) = a.dim();
    let dims = ((2 * h).next_power_of_two(), (2 * w).next_power_of_two());
    let mut planner = FftPlanner::new();
    let spectrum = |m: &Array2<f64>, planner: &mut FftPlanner<f64>| {
        let mut p = padded(m, dims);
        fft2(&mut p, planner, false);
        p
    };
    let ones = Array2::from_elem((h, w), 1.0);
    let fa = spectrum(a, &mut planner);
    let fb = spectrum(b, &mut planner);
    let fa2 = spectrum(&a.mapv(|v| v * v), &mut planner);
    let fb2 = spectrum(&b.mapv(|v| v * v), &mut planner);
    let fm = spectrum(&ones, &mut planner);

    let num = cross_correlate(&fa, &fb, &mut planner);
    let ea = cross_correlate(&fa2, &fm, &mut planner);
    let eb = cross_correlate(&fm, &fb2, &mut planner);
    let count = cross_correlate(&fm, &fm, &mut planner);
    let min_count = 0.5 * (h * w) as f64;

    Array2::from_shape_fn((2 * ry + 1, 2 * rx + 1), |(iy, ix)| {
        let sy = iy as i64 - ry as i64;
        let sx = ix as i64 - rx as i64;
        let idx = (sy.rem_euclid(dims.0 as i64) as usize, sx.rem_euclid(dims.1 as i64) as usize);
        let denom = (ea[idx] * eb[idx]).max(0.0).sqrt();
        if count[idx] < min_count || denom < 1e-12 {
            f64::NAN
        } else {
            num[idx] / denom
        }
    })
}

fn standardized(img: &Array2<f64>) -> Option<Array2<f64>> {
    let n = img.len() as f64;
    let m = img.sum() / n;
    let var = img.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (var > FLAT_VARIANCE).then(|| img.mapv(|v| (v - m) / var.sqrt()))
}

/// Gauss-Newton refinement of the shift `s` with `a(u) ≈ b(u − s)`.
fn refine_shift(a: &Array2<f64>, b: &Image, s0: (f64, f64)) -> Option<(f64, f64)> {
    let (h, w) = a.dim();
    let margin = (s0.0.abs().max(s0.1.abs()).ceil() as usize + 3).min(h.min(w) / 4);
    if h <= 2 * margin + 8 || w <= 2 * margin + 8 {
        return None;
    }
    let mut s = s0;
    let mut gain_bias: Option<(f64, f64)> = None;
    for _ in 0..20 {
        let mut samples = Vec::with_capacity((h - 2 * margin) * (w - 2 * margin));
        for r in margin..h - margin {
            for c in margin..w - margin {
                let (v, dx, dy) = raster::bicubic_with_gradient(b, c as f64 - s.0, r as f64 - s.1);
                samples.push((a[[r, c]], v, dx, dy));
            }
        }
        let (g, k) = match gain_bias {
            Some(gk) => gk,
            None => {
                let n = samples.len() as f64;
                let (sa, sb) = samples.iter().fold((0.0, 0.0), |acc, e| (acc.0 + e.0, acc.1 + e.1));
                let (ma, mb) = (sa / n, sb / n);
                let cov = samples.iter().map(|e| (e.0 - ma) * (e.1 - mb)).sum::<f64>() / n;
                let vb = samples.iter().map(|e| (e.1 - mb).powi(2)).sum::<f64>() / n;
                let va = samples.iter().map(|e| (e.0 - ma).powi(2)).sum::<f64>() / n;
                if vb < FLAT_VARIANCE || va < FLAT_VARIANCE {
                    return None;
                }
                let g = cov / vb;
                (g, ma - g * mb)
            }
        };
        // Model a(u) ≈ g·b(u − s) + k, solved jointly for s, g and k.
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jte = Vector4::<f64>::zeros();
        for (av, bv, dx, dy) in samples {
            let j = Vector4::new(-g * dx, -g * dy, bv, 1.0);
            jtj += j * j.transpose();
            jte += j * (av - (g * bv + k));
        }
        let step = jtj.cholesky()?.solve(&jte);
        s = (s.0 + step[0], s.1 + step[1]);
        gain_bias = Some((g + step[2], k + step[3]));
        if (s.0 - s0.0).abs() > 1.0 || (s.1 - s0.1).abs() > 1.0 {
            return None;
        }
        if step[0].abs() < 1e-7 && step[1].abs() < 1e-7 {
            break;
        }
    }
    Some(s)
}

/// Estimate the residual offset of `b` relative to `a`, given the nominal
/// anchor difference `nominal = t_b − t_a` in pixels.
pub fn estimate_pairwise_offset(
    a: &Image,
    b: &Image,
    cameras: (CameraIndex, CameraIndex),
    nominal: (f64, f64),
) -> PairOffset {
    let ni = (nominal.0.round() as i64, nominal.1.round() as i64);
    let Some((x0, y0, x1, y1)) = overlap_rect(a.dim(), b.dim(), ni) else {
        return PairOffset::flagged(cameras, nominal, (0.0, 0.0));
    };
    let crop_a = a.slice(s![y0..y1, x0..x1]).mapv(|v| v as f64);
    let (bx0, by0) = ((x0 as i64 - ni.0) as usize, (y0 as i64 - ni.1) as usize);
    let crop_b_img = b.slice(s![by0..by0 + (y1 - y0), bx0..bx0 + (x1 - x0)]).to_owned();
    let crop_b = crop_b_img.mapv(|v| v as f64);
    let means = (crop_a.mean().unwrap_or(0.0), crop_b.mean().unwrap_or(0.0));
    if x1 - x0 < MIN_OVERLAP_PX || y1 - y0 < MIN_OVERLAP_PX {
        return PairOffset::flagged(cameras, nominal, means);
    }
    let (Some(za), Some(zb)) = (standardized(&crop_a), standardized(&crop_b)) else {
        return PairOffset::flagged(cameras, nominal, means);
    };

    let (h, w) = za.dim();
    let rx = (w / 4).clamp(4, 64);
    let ry = (h / 4).clamp(4, 64);
    let surf = ncc_surface(&za, &zb, rx, ry);

    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for ((r, c), &v) in surf.indexed_iter() {
        if v > best.0 {
            best = (v, r, c);
        }
    }
    let (peak, pr, pc) = best;
    if !peak.is_finite() || peak <= 0.0 {
        return PairOffset::flagged(cameras, nominal, means);
    }
    let second = second_peak(&surf, pr, pc);
    let peak_ratio = if second > 1e-12 { peak / second } else { f64::INFINITY };
    let confidence = (1.0 - second.max(0.0) / peak).clamp(0.0, 1.0);

    let at = |r: i64, c: i64| -> f64 {
        let r = r.clamp(0, surf.nrows() as i64 - 1) as usize;
        let c = c.clamp(0, surf.ncols() as i64 - 1) as usize;
        let v = surf[[r, c]];
        if v.is_finite() { v } else { peak }
    };
    let mut n = [[0.0; 3]; 3];
    for (dr, row) in n.iter_mut().enumerate() {
        for (dc, v) in row.iter_mut().enumerate() {
            *v = at(pr as i64 + dr as i64 - 1, pc as i64 + dc as i64 - 1);
        }
    }
    let (fx, fy) = raster::quadratic_peak(&n);
    let coarse = (pc as f64 - rx as f64 + fx, pr as f64 - ry as f64 + fy);
    let shift = refine_shift(&za, &zb.mapv(|v| v as f32), coarse).unwrap_or(coarse);

    // a(u) = b(u − s) on the crops means t_b − t_a = ni + s.
    let offset = (ni.0 as f64 + shift.0 - nominal.0, ni.1 as f64 + shift.1 - nominal.1);
    PairOffset {
        cameras,
        nominal,
        offset,
        confidence,
        peak_ratio,
        overlap_means: means,
    }
}

/// Largest local maximum of the surface outside the 5×5 neighbourhood of the
/// main peak.
fn second_peak(surf: &Array2<f64>, pr: usize, pc: usize) -> f64 {
    let (h, w) = surf.dim();
    let mut second = f64::NEG_INFINITY;
    for r in 0..h {
        for c in 0..w {
            if r.abs_diff(pr) <= 2 && c.abs_diff(pc) <= 2 {
                continue;
            }
            let v = surf[[r, c]];
            if !v.is_finite() {
                continue;
            }
            let mut is_max = true;
            'n: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if (dr, dc) == (0, 0) || rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        continue;
                    }
                    let u = surf[[rr as usize, cc as usize]];
                    if u.is_finite() && u > v {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                second = second.max(v);
            }
        }
    }
    second
}
