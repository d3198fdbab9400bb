//! Sparse heights to a dense grid by linear interpolation on a Delaunay
//! triangulation. Cells outside the convex hull stay invalid.

use delaunator::{triangulate, Point};
use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::matching::MatchSet;
use super::DepthCalibration;
use crate::array_model::ArrayConfig;
use crate::error::{McamError, Result};

/// A triangulated surface point on the object plane, µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsePoint {
    pub x_um: f64,
    pub y_um: f64,
    pub h_um: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightMapMethod {
    SparseTriangulated,
    Interpolated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    /// Heights in µm; NaN where invalid.
    pub grid: Array2<f64>,
    pub mask: Array2<bool>,
    /// Object-plane corner of cell (0, 0), µm.
    pub origin_um: (f64, f64),
    pub pitch_um: f64,
    pub method: HeightMapMethod,
}

impl HeightMap {
    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Least-squares plane `h = h0 + gx·x + gy·y` (x, y in µm) over valid cells.
    pub fn plane_fit(&self) -> Option<(f64, f64, f64)> {
        let mut ata = Matrix3::<f64>::zeros();
        let mut atb = Vector3::<f64>::zeros();
        for ((r, c), &h) in self.grid.indexed_iter() {
            if !self.mask[[r, c]] {
                continue;
            }
            let x = self.origin_um.0 + (c as f64 + 0.5) * self.pitch_um;
            let y = self.origin_um.1 + (r as f64 + 0.5) * self.pitch_um;
            let row = Vector3::new(1.0, x, y);
            ata += row * row.transpose();
            atb += row * h;
        }
        let sol = ata.try_inverse()? * atb;
        Some((sol[0], sol[1], sol[2]))
    }

    /// Range of valid heights.
    pub fn range(&self) -> Option<(f64, f64)> {
        let vals: Vec<f64> = self.grid.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(&h, _)| h).collect();
        if vals.is_empty() {
            return None;
        }
        Some((
            vals.iter().cloned().fold(f64::INFINITY, f64::min),
            vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        ))
    }
}

/// Interpolate scattered heights on a grid of `pitch_um` cells spanning the
/// points' bounding box.
pub fn height_map_from_points(points: &[SparsePoint], pitch_um: f64) -> Result<HeightMap> {
    if !(pitch_um > 0.0) {
        return Err(McamError::Domain("grid pitch must be positive".into()));
    }
    if points.len() < 3 {
        return Err(McamError::Degenerate(format!("{} sparse points; need at least 3", points.len())));
    }
    if points.iter().any(|p| !(p.x_um.is_finite() && p.y_um.is_finite() && p.h_um.is_finite())) {
        return Err(McamError::Domain("sparse points must be finite".into()));
    }
    let pts: Vec<Point> = points.iter().map(|p| Point { x: p.x_um, y: p.y_um }).collect();
    let tri = triangulate(&pts);
    if tri.triangles.is_empty() {
        return Err(McamError::Degenerate("sparse points are collinear".into()));
    }
    let x0 = points.iter().map(|p| p.x_um).fold(f64::INFINITY, f64::min);
    let y0 = points.iter().map(|p| p.y_um).fold(f64::INFINITY, f64::min);
    let x1 = points.iter().map(|p| p.x_um).fold(f64::NEG_INFINITY, f64::max);
    let y1 = points.iter().map(|p| p.y_um).fold(f64::NEG_INFINITY, f64::max);
    let w = ((x1 - x0) / pitch_um).ceil().max(1.0) as usize;
    let h = ((y1 - y0) / pitch_um).ceil().max(1.0) as usize;
    let mut grid = Array2::from_elem((h, w), f64::NAN);
    let mut mask = Array2::from_elem((h, w), false);
    let centre = |c: usize, r: usize| (x0 + (c as f64 + 0.5) * pitch_um, y0 + (r as f64 + 0.5) * pitch_um);

    for t in tri.triangles.chunks_exact(3) {
        let (a, b, c) = (points[t[0]], points[t[1]], points[t[2]]);
        let det = (b.y_um - c.y_um) * (a.x_um - c.x_um) + (c.x_um - b.x_um) * (a.y_um - c.y_um);
        if det.abs() < 1e-12 {
            continue;
        }
        let tx0 = a.x_um.min(b.x_um).min(c.x_um);
        let tx1 = a.x_um.max(b.x_um).max(c.x_um);
        let ty0 = a.y_um.min(b.y_um).min(c.y_um);
        let ty1 = a.y_um.max(b.y_um).max(c.y_um);
        let c0 = (((tx0 - x0) / pitch_um - 0.5).floor().max(0.0)) as usize;
        let c1 = ((((tx1 - x0) / pitch_um - 0.5).ceil()) as usize).min(w - 1);
        let r0 = (((ty0 - y0) / pitch_um - 0.5).floor().max(0.0)) as usize;
        let r1 = ((((ty1 - y0) / pitch_um - 0.5).ceil()) as usize).min(h - 1);
        for r in r0..=r1 {
            for col in c0..=c1 {
                let (x, y) = centre(col, r);
                let l1 = ((b.y_um - c.y_um) * (x - c.x_um) + (c.x_um - b.x_um) * (y - c.y_um)) / det;
                let l2 = ((c.y_um - a.y_um) * (x - c.x_um) + (a.x_um - c.x_um) * (y - c.y_um)) / det;
                let l3 = 1.0 - l1 - l2;
                let eps = -1e-9;
                if l1 >= eps && l2 >= eps && l3 >= eps && !mask[[r, col]] {
                    grid[[r, col]] = l1 * a.h_um + l2 * b.h_um + l3 * c.h_um;
                    mask[[r, col]] = true;
                }
            }
        }
    }
    Ok(HeightMap {
        grid,
        mask,
        origin_um: (x0, y0),
        pitch_um,
        method: HeightMapMethod::Interpolated,
    })
}

/// Triangulate every match and grid the resulting heights.
pub fn build_height_map(
    sets: &[MatchSet],
    cal: &DepthCalibration,
    config: &ArrayConfig,
    pitch_um: f64,
) -> Result<HeightMap> {
    let points: Vec<SparsePoint> = sets
        .iter()
        .flat_map(|s| s.matches.iter().map(move |m| (s, m)))
        .filter_map(|(s, m)| cal.locate(s, m, config).ok())
        .collect();
    height_map_from_points(&points, pitch_um)
}
