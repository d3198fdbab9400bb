//! Ground-truth scenes.
//!
//! A scene lives on the object plane with its centre at the array centre.
//! Intensities are in `[0, 1]`; outside the scene extent the background is 0.
//! Every content kind can integrate itself exactly over an axis-aligned
//! rectangle, which is what the renderer's pixel box filter needs.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{McamError, Result};
use crate::raster::Image;
use crate::units::Length;

/// Axis-aligned rectangle on the object plane, in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn centered(cx: f64, cy: f64, half_w: f64, half_h: f64) -> Self {
        Rect::new(cx - half_w, cy - half_h, cx + half_w, cy + half_h)
    }

    pub fn width(&self) -> f64 {
        (self.x1 - self.x0).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y1 - self.y0).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    pub fn intersect(&self, other: &Rect) -> Rect {
        Rect::new(
            self.x0.max(other.x0),
            self.y0.max(other.y0),
            self.x1.min(other.x1),
            self.y1.min(other.y1),
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Which way the bars of a group run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarOrientation {
    /// Bars are vertical; intensity varies along x.
    Vertical,
    /// Bars are horizontal; intensity varies along y.
    Horizontal,
}

/// One group of bright/dark bar pairs at a fixed full-pitch spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarGroup {
    /// Full pitch (one bright plus one dark bar), µm.
    pub spacing: f64,
    pub pairs: usize,
    pub orientation: BarOrientation,
    /// Top-left corner, µm.
    pub x0: f64,
    pub y0: f64,
    /// Bar length, µm.
    pub length: f64,
}

impl BarGroup {
    pub fn rect(&self) -> Rect {
        let across = self.spacing * self.pairs as f64;
        match self.orientation {
            BarOrientation::Vertical => Rect::new(self.x0, self.y0, self.x0 + across, self.y0 + self.length),
            BarOrientation::Horizontal => Rect::new(self.x0, self.y0, self.x0 + self.length, self.y0 + across),
        }
    }

    /// Integral of the bright-bar indicator over `r` (already clipped to the group).
    fn bright_integral(&self, r: &Rect) -> f64 {
        let (a, b, along) = match self.orientation {
            BarOrientation::Vertical => (r.x0 - self.x0, r.x1 - self.x0, r.height()),
            BarOrientation::Horizontal => (r.y0 - self.y0, r.y1 - self.y0, r.width()),
        };
        let len = b - a;
        0.5 * (len + square_wave_integral(b, self.spacing) - square_wave_integral(a, self.spacing)) * along
    }
}

/// Antiderivative of a ±1 square wave of period `p` that is +1 on the first
/// half period; a periodic triangle with value 0 at multiples of `p`.
fn square_wave_integral(t: f64, p: f64) -> f64 {
    let tau = t.rem_euclid(p);
    if tau < p / 2.0 {
        tau
    } else {
        p - tau
    }
}

/// Smooth random texture: a sum of bilinearly interpolated random lattices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTexture {
    pub seed: u64,
    /// `(cell size µm, amplitude)` per octave; lattice values are in `[−1, 1)`.
    pub octaves: Vec<(f64, f64)>,
    pub mean: f64,
}

impl NoiseTexture {
    /// A three-octave texture whose finest cell is `finest_cell` µm, ranging
    /// roughly over `[0.1, 0.9]`.
    pub fn new(seed: u64, finest_cell: f64) -> Self {
        NoiseTexture {
            seed,
            octaves: vec![(finest_cell * 4.0, 0.2), (finest_cell * 2.0, 0.13), (finest_cell, 0.07)],
            mean: 0.5,
        }
    }

    fn lattice(&self, octave: usize, i: i64, j: i64) -> f64 {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for v in [octave as u64, i as u64, j as u64] {
            h = splitmix64(h ^ v);
        }
        (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let mut v = self.mean;
        for (o, &(cell, amp)) in self.octaves.iter().enumerate() {
            let (tx, ty) = (x / cell, y / cell);
            let (i0, j0) = (tx.floor() as i64, ty.floor() as i64);
            let (fx, fy) = (tx - i0 as f64, ty - j0 as f64);
            let l = |di: i64, dj: i64| self.lattice(o, i0 + di, j0 + dj);
            let top = l(0, 0) * (1.0 - fx) + l(1, 0) * fx;
            let bot = l(0, 1) * (1.0 - fx) + l(1, 1) * fx;
            v += amp * (top * (1.0 - fy) + bot * fy);
        }
        v
    }

    fn integral(&self, r: &Rect) -> f64 {
        let mut total = self.mean * r.area();
        for (o, &(cell, amp)) in self.octaves.iter().enumerate() {
            let (a, b) = (r.x0 / cell, r.x1 / cell);
            let (c, d) = (r.y0 / cell, r.y1 / cell);
            let i_range = (a.floor() as i64 - 1)..=(b.ceil() as i64 + 1);
            let j_range = (c.floor() as i64 - 1)..=(d.ceil() as i64 + 1);
            let hx: Vec<(i64, f64)> = i_range
                .map(|i| (i, hat_integral(b - i as f64) - hat_integral(a - i as f64)))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            let mut sum = 0.0;
            for j in j_range {
                let hy = hat_integral(d - j as f64) - hat_integral(c - j as f64);
                if hy == 0.0 {
                    continue;
                }
                for &(i, wx) in &hx {
                    sum += self.lattice(o, i, j) * wx * hy;
                }
            }
            total += amp * sum * cell * cell;
        }
        total
    }
}

/// Antiderivative of the unit hat function `max(0, 1 − |t|)`.
fn hat_integral(t: f64) -> f64 {
    if t <= -1.0 {
        0.0
    } else if t <= 0.0 {
        0.5 * (t + 1.0) * (t + 1.0)
    } else if t <= 1.0 {
        1.0 - 0.5 * (1.0 - t) * (1.0 - t)
    } else {
        1.0
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A piecewise-constant texture sampled on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterTexture {
    pub data: Image,
    /// Texel size, µm.
    pub pitch: f64,
    /// Object-plane coordinate of the top-left texel corner, µm.
    pub origin: (f64, f64),
}

impl RasterTexture {
    pub fn bounds(&self) -> Rect {
        let (h, w) = self.data.dim();
        Rect::new(
            self.origin.0,
            self.origin.1,
            self.origin.0 + w as f64 * self.pitch,
            self.origin.1 + h as f64 * self.pitch,
        )
    }

    fn integral(&self, r: &Rect) -> f64 {
        let r = r.intersect(&self.bounds());
        if r.is_empty() {
            return 0.0;
        }
        let (h, w) = self.data.dim();
        let span = |lo: f64, hi: f64, origin: f64, n: usize| -> Vec<(usize, f64)> {
            let a = (lo - origin) / self.pitch;
            let b = (hi - origin) / self.pitch;
            let first = (a.floor().max(0.0)) as usize;
            let last = (b.ceil() as usize).min(n);
            (first..last)
                .map(|k| {
                    let k0 = (k as f64).max(a);
                    let k1 = ((k + 1) as f64).min(b);
                    (k, (k1 - k0).max(0.0) * self.pitch)
                })
                .collect()
        };
        let xs = span(r.x0, r.x1, self.origin.0, w);
        let ys = span(r.y0, r.y1, self.origin.1, h);
        let mut sum = 0.0;
        for &(row, wy) in &ys {
            for &(col, wx) in &xs {
                sum += self.data[[row, col]] as f64 * wx * wy;
            }
        }
        sum
    }

    /// Bilinear sample with clamped borders (used for height rasters).
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let cx = (x - self.origin.0) / self.pitch - 0.5;
        let cy = (y - self.origin.1) / self.pitch - 0.5;
        crate::raster::bilinear(&self.data, cx, cy) as f64
    }
}

/// Intensity content of a scene.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneContent {
    Uniform(f64),
    /// Checkerboard with square cells of `period/2`.
    Checker { period: f64, low: f64, high: f64 },
    Noise(NoiseTexture),
    /// Constant-valued rectangles over a zero background.
    Rects(Vec<(Rect, f64)>),
    /// Bar groups (bright 1, dark 0) drawn over a background content.
    Bars { groups: Vec<BarGroup>, background: Box<SceneContent> },
    Raster(RasterTexture),
}

impl SceneContent {
    /// Integral of intensity over `r`, µm².
    pub fn integral(&self, r: &Rect) -> f64 {
        if r.is_empty() {
            return 0.0;
        }
        match self {
            SceneContent::Uniform(c) => c * r.area(),
            SceneContent::Checker { period, low, high } => {
                let sx = square_wave_integral(r.x1, *period) - square_wave_integral(r.x0, *period);
                let sy = square_wave_integral(r.y1, *period) - square_wave_integral(r.y0, *period);
                0.5 * (low + high) * r.area() + 0.5 * (high - low) * sx * sy
            }
            SceneContent::Noise(n) => n.integral(r),
            SceneContent::Rects(rects) => rects.iter().map(|(q, v)| v * q.intersect(r).area()).sum(),
            SceneContent::Bars { groups, background } => {
                let mut total = background.integral(r);
                for g in groups {
                    let inside = g.rect().intersect(r);
                    if inside.is_empty() {
                        continue;
                    }
                    total += g.bright_integral(&inside) - background.integral(&inside);
                }
                total
            }
            SceneContent::Raster(t) => t.integral(r),
        }
    }
}

/// Height of the object surface relative to the nominal focal plane.
#[derive(Debug, Clone, PartialEq)]
pub enum HeightField {
    Flat(Length),
    /// `h = h0 + gx·x + gy·y`, with dimensionless slopes.
    Plane { h0: Length, gx: f64, gy: f64 },
    /// Heights in µm on a grid; bilinear between texel centres.
    Raster(RasterTexture),
}

impl Default for HeightField {
    fn default() -> Self {
        HeightField::Flat(Length::ZERO)
    }
}

impl HeightField {
    /// Height in µm at object-plane position `(x, y)` µm.
    pub fn at(&self, x: f64, y: f64) -> f64 {
        match self {
            HeightField::Flat(h) => h.as_um(),
            HeightField::Plane { h0, gx, gy } => h0.as_um() + gx * x + gy * y,
            HeightField::Raster(t) => t.sample(x, y),
        }
    }

    /// `(min, max)` height over `area`.
    pub fn range(&self, area: &Rect) -> (f64, f64) {
        match self {
            HeightField::Flat(h) => (h.as_um(), h.as_um()),
            HeightField::Plane { .. } => {
                let c = [
                    self.at(area.x0, area.y0),
                    self.at(area.x1, area.y0),
                    self.at(area.x0, area.y1),
                    self.at(area.x1, area.y1),
                ];
                c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
            }
            HeightField::Raster(t) => t
                .data
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64))),
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, HeightField::Flat(_))
    }
}

/// Ground-truth object: intensity, physical extent and surface height.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub content: SceneContent,
    /// Physical size `(x, y)`, centred on the array axis.
    pub extent: (Length, Length),
    /// Finest texel size the content is meant to resolve.
    pub sample_pitch: Length,
    pub height: HeightField,
}

impl Scene {
    pub fn new(content: SceneContent, extent: (Length, Length), sample_pitch: Length) -> Result<Self> {
        if !(extent.0.as_um() > 0.0) || !(extent.1.as_um() > 0.0) {
            return Err(McamError::Domain("scene extent must be positive".into()));
        }
        if !(sample_pitch.as_um() > 0.0) {
            return Err(McamError::Domain("scene sample pitch must be positive".into()));
        }
        Ok(Scene {
            content,
            extent,
            sample_pitch,
            height: HeightField::default(),
        })
    }

    pub fn with_height(mut self, height: HeightField) -> Self {
        self.height = height;
        self
    }

    pub fn bounds(&self) -> Rect {
        let (w, h) = (self.extent.0.as_um(), self.extent.1.as_um());
        Rect::new(-w / 2.0, -h / 2.0, w / 2.0, h / 2.0)
    }

    /// Area-average intensity over `r`, with zero background outside the extent.
    pub fn box_average(&self, r: &Rect) -> f64 {
        let area = r.area();
        if area <= 0.0 {
            return 0.0;
        }
        self.content.integral(&r.intersect(&self.bounds())) / area
    }

    /// Ground truth averaged onto a grid of `pixel`-sized cells whose top-left
    /// corner is at `origin`.
    pub fn sample_grid(&self, origin: (Length, Length), pixel: Length, dims: (usize, usize)) -> Image {
        let p = pixel.as_um();
        let (ox, oy) = (origin.0.as_um(), origin.1.as_um());
        Array2::from_shape_fn(dims, |(r, c)| {
            let x0 = ox + c as f64 * p;
            let y0 = oy + r as f64 * p;
            self.box_average(&Rect::new(x0, y0, x0 + p, y0 + p)) as f32
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Midpoint-rule quadrature as an independent integration oracle.
    fn quad(f: impl Fn(f64, f64) -> f64, r: &Rect, n: usize) -> f64 {
        let (dx, dy) = (r.width() / n as f64, r.height() / n as f64);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += f(r.x0 + (i as f64 + 0.5) * dx, r.y0 + (j as f64 + 0.5) * dy);
            }
        }
        s * dx * dy
    }

    #[test]
    fn noise_integral_matches_quadrature() {
        let n = NoiseTexture::new(7, 10.0);
        for r in [Rect::new(3.3, -7.1, 18.9, 4.4), Rect::new(-55.0, 12.0, -31.5, 40.25)] {
            let exact = n.integral(&r);
            let approx = quad(|x, y| n.value(x, y), &r, 800);
            assert!((exact - approx).abs() / r.area() < 1e-5, "{exact} vs {approx}");
        }
    }

    #[test]
    fn bar_and_checker_integrals_match_quadrature() {
        let g = BarGroup {
            spacing: 4.0,
            pairs: 3,
            orientation: BarOrientation::Vertical,
            x0: 8.0,
            y0: 0.0,
            length: 20.0,
        };
        let bars = SceneContent::Bars {
            groups: vec![g.clone()],
            background: Box::new(SceneContent::Uniform(0.25)),
        };
        let f = |x: f64, y: f64| {
            if g.rect().contains(x, y) {
                if ((x - 8.0) / 4.0).rem_euclid(1.0) < 0.5 {
                    1.0
                } else {
                    0.0
                }
            } else {
                0.25
            }
        };
        let r = Rect::new(6.7, 3.0, 19.3, 24.0);
        assert!((bars.integral(&r) - quad(f, &r, 2000)).abs() / r.area() < 1e-3);

        let ch = SceneContent::Checker {
            period: 6.0,
            low: 0.1,
            high: 0.9,
        };
        let fc = |x: f64, y: f64| {
            let a = (x / 6.0).rem_euclid(1.0) < 0.5;
            let b = (y / 6.0).rem_euclid(1.0) < 0.5;
            if a == b {
                0.9
            } else {
                0.1
            }
        };
        let r = Rect::new(-4.2, 1.3, 11.1, 9.9);
        assert!((ch.integral(&r) - quad(fc, &r, 2000)).abs() / r.area() < 1e-3);
    }

    #[test]
    fn raster_integral_is_area_weighted() {
        let t = RasterTexture {
            data: Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 0.5, 0.25]).unwrap(),
            pitch: 2.0,
            origin: (0.0, 0.0),
        };
        let r = Rect::new(1.0, 1.0, 3.0, 3.0);
        assert!((t.integral(&r) - (0.0 + 1.0 + 0.5 + 0.25)).abs() < 1e-12);
        assert!((t.sample(1.0, 1.0) - 0.0).abs() < 1e-6);
    }

    #[test]
    fn box_average_clips_to_extent() {
        let s = Scene::new(SceneContent::Uniform(0.8), (Length::um(10.0), Length::um(10.0)), Length::um(1.0)).unwrap();
        assert!((s.box_average(&Rect::new(-2.0, -2.0, 2.0, 2.0)) - 0.8).abs() < 1e-12);
        assert!((s.box_average(&Rect::new(3.0, -1.0, 7.0, 1.0)) - 0.4).abs() < 1e-12);
        assert_eq!(s.box_average(&Rect::new(20.0, 20.0, 21.0, 21.0)), 0.0);
    }
}
