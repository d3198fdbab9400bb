//! Global translation and gain solve over all measured pairs.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::pairwise::PairOffset;
use crate::array_model::CameraIndex;
use crate::error::{McamError, Result};
use crate::units::Length;

/// Least-squares weight for pairs that fell back to the nominal offset.
pub const FALLBACK_WEIGHT: f64 = 0.01;
/// Floor on the weight of a confident pair.
const MIN_WEIGHT: f64 = 0.05;

/// Per-camera anchors and gains. The anchor is the composite-pixel position
/// of the corner of each frame's pixel (0, 0); the first camera is the
/// reference and sits at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchCalibration {
    pub cameras: Vec<CameraIndex>,
    pub tile_positions: Vec<(f64, f64)>,
    pub gains: Vec<f64>,
    pub composite_pixel_size: Length,
    /// Focal-plane height the calibration was solved at.
    pub valid_for_depth: Length,
    /// Object-plane position of the reference anchor.
    pub reference_origin: (Length, Length),
    /// Weighted RMS of the pair residuals after the solve, in pixels.
    pub residual_rms: f64,
}

impl StitchCalibration {
    pub fn index_of(&self, cam: CameraIndex) -> Option<usize> {
        self.cameras.iter().position(|&c| c == cam)
    }

    /// Object-plane position of composite coordinate `(u, v)` (pixels).
    pub fn to_object(&self, u: f64, v: f64) -> (Length, Length) {
        let d = self.composite_pixel_size;
        (self.reference_origin.0 + d * u, self.reference_origin.1 + d * v)
    }

    pub fn to_composite(&self, x: Length, y: Length) -> (f64, f64) {
        let d = self.composite_pixel_size;
        ((x - self.reference_origin.0) / d, (y - self.reference_origin.1) / d)
    }

    pub const RECORD_HEADER: &'static str = "mcam-stitch-calibration 1";

    /// Versioned plain-text form.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", Self::RECORD_HEADER);
        let _ = writeln!(s, "composite_pixel_um {:.12}", self.composite_pixel_size.as_um());
        let _ = writeln!(s, "valid_for_depth_um {:.12}", self.valid_for_depth.as_um());
        let _ = writeln!(
            s,
            "reference_origin_um {:.12} {:.12}",
            self.reference_origin.0.as_um(),
            self.reference_origin.1.as_um()
        );
        let _ = writeln!(s, "residual_rms_px {:.12}", self.residual_rms);
        for ((cam, (x, y)), g) in self.cameras.iter().zip(&self.tile_positions).zip(&self.gains) {
            let _ = writeln!(s, "camera {} {} anchor_px {:.12} {:.12} gain {:.12}", cam.row, cam.col, x, y, g);
        }
        s
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| McamError::Parse(format!("calibration line {}: {msg}", line + 1));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == Self::RECORD_HEADER => {}
            _ => return Err(McamError::Parse(format!("calibration record must start with {:?}", Self::RECORD_HEADER))),
        }
        let mut cal = StitchCalibration {
            cameras: Vec::new(),
            tile_positions: Vec::new(),
            gains: Vec::new(),
            composite_pixel_size: Length::ZERO,
            valid_for_depth: Length::ZERO,
            reference_origin: (Length::ZERO, Length::ZERO),
            residual_rms: 0.0,
        };
        for (i, line) in lines {
            let tok: Vec<&str> = line.split_whitespace().collect();
            let num = |k: usize| -> Result<f64> {
                tok.get(k).and_then(|t| t.parse().ok()).ok_or_else(|| bad(i, "expected a number"))
            };
            match tok[0] {
                "composite_pixel_um" => cal.composite_pixel_size = Length::um(num(1)?),
                "valid_for_depth_um" => cal.valid_for_depth = Length::um(num(1)?),
                "reference_origin_um" => cal.reference_origin = (Length::um(num(1)?), Length::um(num(2)?)),
                "residual_rms_px" => cal.residual_rms = num(1)?,
                "camera" if tok.len() == 8 && tok[3] == "anchor_px" && tok[6] == "gain" => {
                    cal.cameras.push(CameraIndex::new(num(1)? as usize, num(2)? as usize));
                    cal.tile_positions.push((num(4)?, num(5)?));
                    cal.gains.push(num(7)?);
                }
                _ => return Err(bad(i, "unrecognised entry")),
            }
        }
        if cal.cameras.is_empty() || !(cal.composite_pixel_size.as_um() > 0.0) {
            return Err(McamError::Parse("calibration record has no cameras or pixel size".into()));
        }
        Ok(cal)
    }
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut j = i;
    while parent[j] != r {
        let next = parent[j];
        parent[j] = r;
        j = next;
    }
    r
}

/// Connected components of the pair graph (sorted camera positions).
pub fn components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_slot[r] == usize::MAX {
            root_slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[r]].push(i);
    }
    groups
}

/// Solve `Σ w (t_j − t_i − m_ij)²` with `t_0 = 0` for one coordinate.
fn weighted_solve(n: usize, eqs: &[(usize, usize, f64, f64)]) -> Result<Vec<f64>> {
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let mut a = DMatrix::<f64>::zeros(n - 1, n - 1);
    let mut rhs = DVector::<f64>::zeros(n - 1);
    for &(i, j, m, w) in eqs {
        // Unknown k ↦ row k − 1; camera 0 is pinned.
        if i > 0 {
            a[(i - 1, i - 1)] += w;
            rhs[i - 1] -= w * m;
        }
        if j > 0 {
            a[(j - 1, j - 1)] += w;
            rhs[j - 1] += w * m;
        }
        if i > 0 && j > 0 {
            a[(i - 1, j - 1)] -= w;
            a[(j - 1, i - 1)] -= w;
        }
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| McamError::Degenerate("pose normal equations are singular".into()))?;
    let x = chol.solve(&rhs);
    Ok(std::iter::once(0.0).chain(x.iter().copied()).collect())
}

/// Solve anchors and gains from pair measurements. The first camera is
/// pinned at the origin.
pub fn solve_global_poses(
    offsets: &[PairOffset],
    cameras: &[CameraIndex],
    composite_pixel_size: Length,
) -> Result<StitchCalibration> {
    let n = cameras.len();
    if n == 0 {
        return Err(McamError::Degenerate("no cameras to solve".into()));
    }
    let pos = |c: CameraIndex| {
        cameras
            .iter()
            .position(|&k| k == c)
            .ok_or_else(|| McamError::Config(format!("pair references unknown camera {c}")))
    };
    let mut edges = Vec::with_capacity(offsets.len());
    let mut ex = Vec::with_capacity(offsets.len());
    let mut ey = Vec::with_capacity(offsets.len());
    let mut eg = Vec::new();
    for p in offsets {
        let (i, j) = (pos(p.cameras.0)?, pos(p.cameras.1)?);
        if i == j {
            return Err(McamError::Config(format!("pair {} with itself", p.cameras.0)));
        }
        edges.push((i, j));
        let (m, w) = if p.is_confident() {
            ((p.nominal.0 + p.offset.0, p.nominal.1 + p.offset.1), p.confidence.max(MIN_WEIGHT))
        } else {
            (p.nominal, FALLBACK_WEIGHT)
        };
        ex.push((i, j, m.0, w));
        ey.push((i, j, m.1, w));
        let (ma, mb) = p.overlap_means;
        if ma > 1e-9 && mb > 1e-9 {
            // g_i·mean_a = g_j·mean_b  ⇒  log g_j − log g_i = ln(mean_a/mean_b).
            eg.push((i, j, (ma / mb).ln(), 1.0));
        }
    }
    let comps = components(n, &edges);
    if comps.len() > 1 {
        return Err(McamError::Disconnected(comps));
    }
    let xs = weighted_solve(n, &ex)?;
    let ys = weighted_solve(n, &ey)?;

    let log_gains = if components(n, &eg.iter().map(|e| (e.0, e.1)).collect::<Vec<_>>()).len() == 1 {
        weighted_solve(n, &eg)?
    } else {
        vec![0.0; n]
    };
    let mean_log = log_gains.iter().sum::<f64>() / n as f64;
    let gains = log_gains.iter().map(|l| (l - mean_log).exp()).collect();

    let (mut num, mut den) = (0.0, 0.0);
    for (&(i, j, mx, w), &(_, _, my, _)) in ex.iter().zip(&ey) {
        num += w * ((xs[j] - xs[i] - mx).powi(2) + (ys[j] - ys[i] - my).powi(2));
        den += w;
    }
    Ok(StitchCalibration {
        cameras: cameras.to_vec(),
        tile_positions: xs.into_iter().zip(ys).collect(),
        gains,
        composite_pixel_size,
        valid_for_depth: Length::ZERO,
        reference_origin: (Length::ZERO, Length::ZERO),
        residual_rms: if den > 0.0 { (num / den).sqrt() } else { 0.0 },
    })
}
