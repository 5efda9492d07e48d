//! Pooling layout: two interleaved tilings of `window x window` patches.
//!
//! Grid A starts at 0 and grid B at `window / 2` on both axes, so together
//! the patch origins advance by half a window. Patches wrap across the
//! torus seam.

use serde::{Deserialize, Serialize};

use super::grid::{GridPoint, GridSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingLayout {
    pub window: usize,
    pub tiles_per_axis: usize,
    /// Origin offset of each grid on both axes.
    pub grid_offsets: [usize; 2],
    /// Excitatory members of each pooling unit, ordered grid-major then row-major.
    pub patches: Vec<Vec<usize>>,
}

impl PoolingLayout {
    pub fn build(spec: &GridSpec, window: usize) -> Result<Self> {
        if window == 0 || !spec.exc_side.is_multiple_of(window) {
            return Err(Error::config(
                "pooling.window",
                format!("{window} does not divide exc_side {}", spec.exc_side),
            ));
        }
        let tiles = spec.exc_side / window;
        let offsets = [0, window / 2];
        let mut patches = Vec::with_capacity(2 * tiles * tiles);
        for &offset in &offsets {
            for row in 0..tiles {
                for col in 0..tiles {
                    let origin = GridPoint::new(offset + col * window, offset + row * window);
                    patches.push(square_block(spec, origin, window));
                }
            }
        }
        Ok(PoolingLayout {
            window,
            tiles_per_axis: tiles,
            grid_offsets: offsets,
            patches,
        })
    }

    pub fn unit_count(&self) -> usize {
        self.patches.len()
    }

    /// Origin of pooling unit `unit` on the excitatory sheet.
    pub fn origin(&self, unit: usize) -> GridPoint {
        let per_grid = self.tiles_per_axis * self.tiles_per_axis;
        let offset = self.grid_offsets[unit / per_grid];
        let cell = unit % per_grid;
        GridPoint::new(
            offset + (cell % self.tiles_per_axis) * self.window,
            offset + (cell / self.tiles_per_axis) * self.window,
        )
    }
}

/// Row-major `size x size` block of excitatory neurons starting at `origin`, wrapping on the torus.
pub fn square_block(spec: &GridSpec, origin: GridPoint, size: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(size * size);
    for dy in 0..size {
        for dx in 0..size {
            out.push(spec.exc_index(GridPoint::new(origin.x + dx, origin.y + dy)));
        }
    }
    out
}

/// The 5×5 (or `size x size`) input patch at `origin`.
pub fn select_input_patch(spec: &GridSpec, origin: GridPoint, size: usize) -> Result<Vec<usize>> {
    if size == 0 || size > spec.exc_side {
        return Err(Error::config("input.size", format!("{size} out of range")));
    }
    if origin.x >= spec.exc_side || origin.y >= spec.exc_side {
        return Err(Error::config("input.origin", "outside the excitatory sheet"));
    }
    Ok(square_block(spec, origin, size))
}
