//! Multi-resolution tile pyramid of a composite.

use serde::{Deserialize, Serialize};

use crate::error::{McamError, Result};
use crate::raster::{self, Image};

#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    /// Level 0 is full resolution; each next level halves both axes.
    pub levels: Vec<Image>,
    pub tile_px: usize,
}

/// Tile grid of one level, `(columns, rows)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub columns: usize,
    pub rows: usize,
}

impl TileGrid {
    pub fn count(&self) -> usize {
        self.columns * self.rows
    }
}

impl Pyramid {
    pub fn grid(&self, level: usize) -> TileGrid {
        let (h, w) = self.levels[level].dim();
        TileGrid {
            columns: w.div_ceil(self.tile_px).max(1),
            rows: h.div_ceil(self.tile_px).max(1),
        }
    }

    /// Pixels of tile `(i, j)` (column, row) at `level`; edge tiles are cropped.
    pub fn tile(&self, level: usize, i: usize, j: usize) -> Image {
        let img = &self.levels[level];
        let (h, w) = img.dim();
        let (x0, y0) = (i * self.tile_px, j * self.tile_px);
        let (x1, y1) = ((x0 + self.tile_px).min(w), (y0 + self.tile_px).min(h));
        img.slice(ndarray::s![y0..y1, x0..x1]).to_owned()
    }
}

/// Halve the composite until a level fits in one tile.
pub fn build_pyramid(composite: &Image, tile_px: usize) -> Result<Pyramid> {
    if tile_px == 0 || !tile_px.is_power_of_two() {
        return Err(McamError::Config(format!("tile size {tile_px} must be a power of two")));
    }
    let mut levels = vec![composite.clone()];
    loop {
        let last = levels.last().expect("non-empty");
        let (h, w) = last.dim();
        if h <= tile_px && w <= tile_px {
            break;
        }
        let next = raster::downsample2(last);
        levels.push(next);
    }
    Ok(Pyramid { levels, tile_px })
}
