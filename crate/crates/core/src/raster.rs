//! Small grayscale raster toolkit on top of `ndarray`.
//!
//! Images are `Array2<f32>` indexed `[row, col]` (y, x). Continuous pixel
//! coordinates put pixel `(r, c)` at centre `(c, r)`.

use ndarray::{Array2, ArrayView2, Axis as NdAxis};

pub type Image = Array2<f32>;

/// Normalised 1-D Gaussian kernel with radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    if sigma <= 1e-6 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k.into_iter().map(|v| v as f32).collect()
}

fn convolve_rows(src: &ArrayView2<f32>, kernel: &[f32]) -> Image {
    let (h, w) = src.dim();
    let r = (kernel.len() / 2) as isize;
    let mut out = Array2::<f32>::zeros((h, w));
    for (row_in, mut row_out) in src.outer_iter().zip(out.outer_iter_mut()) {
        for x in 0..w as isize {
            let mut acc = 0.0f32;
            for (k, &kv) in kernel.iter().enumerate() {
                let xi = (x + k as isize - r).clamp(0, w as isize - 1) as usize;
                acc += kv * row_in[xi];
            }
            row_out[x as usize] = acc;
        }
    }
    out
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return img.clone();
    }
    let horiz = convolve_rows(&img.view(), &kernel);
    let vert = convolve_rows(&horiz.t(), &kernel);
    vert.reversed_axes().as_standard_layout().to_owned()
}

/// Bilinear sample at continuous pixel coordinates with clamped borders.
pub fn bilinear(img: &Image, x: f64, y: f64) -> f32 {
    let (h, w) = img.dim();
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = (xc - x0 as f64) as f32;
    let fy = (yc - y0 as f64) as f32;
    let top = img[[y0, x0]] * (1.0 - fx) + img[[y0, x1]] * fx;
    let bottom = img[[y1, x0]] * (1.0 - fx) + img[[y1, x1]] * fx;
    top * (1.0 - fy) + bottom * fy
}

fn keys(t: f64) -> (f64, f64) {
    // Keys cubic convolution kernel (a = −0.5) and its derivative.
    let a = -0.5;
    let x = t.abs();
    let sgn = t.signum();
    if x <= 1.0 {
        ((a + 2.0) * x.powi(3) - (a + 3.0) * x * x + 1.0, sgn * (3.0 * (a + 2.0) * x * x - 2.0 * (a + 3.0) * x))
    } else if x < 2.0 {
        (
            a * x.powi(3) - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a,
            sgn * (3.0 * a * x * x - 10.0 * a * x + 8.0 * a),
        )
    } else {
        (0.0, 0.0)
    }
}

/// Bicubic (cubic convolution) sample and its `x`/`y` derivatives at
/// continuous pixel coordinates, with clamped borders.
pub fn bicubic_with_gradient(img: &Image, x: f64, y: f64) -> (f64, f64, f64) {
    let (h, w) = img.dim();
    let (xf, yf) = (x.floor(), y.floor());
    let (ix, iy) = (xf as i64, yf as i64);
    let mut wx = [(0.0, 0.0); 4];
    let mut wy = [(0.0, 0.0); 4];
    for k in 0..4 {
        wx[k] = keys(x - (xf + k as f64 - 1.0));
        wy[k] = keys(y - (yf + k as f64 - 1.0));
    }
    let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
    for (j, &(ky, dky)) in wy.iter().enumerate() {
        let r = (iy + j as i64 - 1).clamp(0, h as i64 - 1) as usize;
        for (i, &(kx, dkx)) in wx.iter().enumerate() {
            let c = (ix + i as i64 - 1).clamp(0, w as i64 - 1) as usize;
            let p = img[[r, c]] as f64;
            v += kx * ky * p;
            gx += dkx * ky * p;
            gy += kx * dky * p;
        }
    }
    (v, gx, gy)
}

/// 2×2 box downsampling. Odd trailing rows/columns are averaged over the
/// pixels that exist.
pub fn downsample2(img: &Image) -> Image {
    let (h, w) = img.dim();
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    Array2::from_shape_fn((oh, ow), |(r, c)| {
        let mut sum = 0.0f64;
        let mut n = 0u32;
        for dr in 0..2 {
            for dc in 0..2 {
                let (rr, cc) = (2 * r + dr, 2 * c + dc);
                if rr < h && cc < w {
                    sum += img[[rr, cc]] as f64;
                    n += 1;
                }
            }
        }
        (sum / n as f64) as f32
    })
}

/// Mean of `factor × factor` blocks. Dimensions must be divisible.
pub fn bin(img: &Image, factor: usize) -> Option<Image> {
    let (h, w) = img.dim();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return None;
    }
    let norm = (factor * factor) as f64;
    Some(Array2::from_shape_fn((h / factor, w / factor), |(r, c)| {
        let block = img.slice(ndarray::s![r * factor..(r + 1) * factor, c * factor..(c + 1) * factor]);
        (block.iter().map(|&v| v as f64).sum::<f64>() / norm) as f32
    }))
}

pub fn mean(img: &Image) -> f64 {
    if img.is_empty() {
        return 0.0;
    }
    img.iter().map(|&v| v as f64).sum::<f64>() / img.len() as f64
}

pub fn variance(img: &ArrayView2<f32>) -> f64 {
    let n = img.len();
    if n == 0 {
        return 0.0;
    }
    let m = img.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    img.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / n as f64
}

/// Mean of each column (profile along x).
pub fn column_profile(img: &ArrayView2<f32>) -> Vec<f64> {
    img.map(|&v| v as f64).mean_axis(NdAxis(0)).map(|a| a.to_vec()).unwrap_or_default()
}

/// Mean of each row (profile along y).
pub fn row_profile(img: &ArrayView2<f32>) -> Vec<f64> {
    img.map(|&v| v as f64).mean_axis(NdAxis(1)).map(|a| a.to_vec()).unwrap_or_default()
}

/// Fit `z = a + bx + cy + dx² + exy + fy²` to a 3×3 neighbourhood sampled at
/// offsets −1..=1 and return the stationary point, falling back to separate
/// 1-D parabolas when the 2-D fit is not a clean maximum.
pub fn quadratic_peak(n: &[[f64; 3]; 3]) -> (f64, f64) {
    // Closed-form least-squares coefficients on the 3×3 stencil.
    let s = |r: usize, c: usize| n[r][c];
    let b = (s(0, 2) + s(1, 2) + s(2, 2) - s(0, 0) - s(1, 0) - s(2, 0)) / 6.0;
    let c = (s(2, 0) + s(2, 1) + s(2, 2) - s(0, 0) - s(0, 1) - s(0, 2)) / 6.0;
    let col_sum = |c: usize| s(0, c) + s(1, c) + s(2, c);
    let row_sum = |r: usize| s(r, 0) + s(r, 1) + s(r, 2);
    let d = (col_sum(0) + col_sum(2) - 2.0 * col_sum(1)) / 6.0;
    let f = (row_sum(0) + row_sum(2) - 2.0 * row_sum(1)) / 6.0;
    let e = (s(0, 0) + s(2, 2) - s(0, 2) - s(2, 0)) / 4.0;
    let det = 4.0 * d * f - e * e;
    if d < 0.0 && det > 1e-12 {
        let x = (-2.0 * f * b + e * c) / det;
        let y = (-2.0 * d * c + e * b) / det;
        if x.abs() <= 1.0 && y.abs() <= 1.0 {
            return (x, y);
        }
    }
    (parabola_peak(s(1, 0), s(1, 1), s(1, 2)), parabola_peak(s(0, 1), s(1, 1), s(2, 1)))
}

/// Vertex offset of the parabola through `(−1, a), (0, b), (1, c)`.
pub fn parabola_peak(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-15 {
        return 0.0;
    }
    (0.5 * (a - c) / denom).clamp(-1.0, 1.0)
}
