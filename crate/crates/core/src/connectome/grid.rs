//! Torus geometry shared by the excitatory and inhibitory sheets.
//!
//! Excitatory neuron `i` sits at `(i % exc_side, i / exc_side)`. Inhibitory
//! neurons live on a grid of half the resolution and are placed on the
//! excitatory frame at `(2x + 1, 2y + 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer position on a square torus, `x` is the column and `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: usize,
    pub y: usize,
}

impl GridPoint {
    pub const fn new(x: usize, y: usize) -> Self {
        GridPoint { x, y }
    }
}

/// Sizes of the two neuron sheets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub exc_side: usize,
    pub inh_side: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            exc_side: 60,
            inh_side: 30,
        }
    }
}

impl GridSpec {
    pub fn new(exc_side: usize, inh_side: usize) -> Result<Self> {
        let spec = GridSpec { exc_side, inh_side };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inh_side == 0 {
            return Err(Error::config("inh_side", "must be positive"));
        }
        if self.exc_side != 2 * self.inh_side {
            return Err(Error::config(
                "exc_side",
                format!(
                    "must be twice inh_side ({} != 2 * {})",
                    self.exc_side, self.inh_side
                ),
            ));
        }
        Ok(())
    }

    pub fn exc_count(&self) -> usize {
        self.exc_side * self.exc_side
    }

    pub fn inh_count(&self) -> usize {
        self.inh_side * self.inh_side
    }

    pub fn exc_point(&self, index: usize) -> GridPoint {
        GridPoint::new(index % self.exc_side, index / self.exc_side)
    }

    pub fn exc_index(&self, p: GridPoint) -> usize {
        (p.y % self.exc_side) * self.exc_side + (p.x % self.exc_side)
    }

    pub fn inh_point(&self, index: usize) -> GridPoint {
        GridPoint::new(index % self.inh_side, index / self.inh_side)
    }

    pub fn inh_index(&self, p: GridPoint) -> usize {
        (p.y % self.inh_side) * self.inh_side + (p.x % self.inh_side)
    }

    /// Position of an inhibitory neuron on the excitatory frame.
    pub fn inh_on_exc_frame(&self, index: usize) -> (f64, f64) {
        let p = self.inh_point(index);
        ((2 * p.x + 1) as f64, (2 * p.y + 1) as f64)
    }

    /// Nearest excitatory neuron to a continuous position on the excitatory frame.
    pub fn nearest_exc(&self, x: f64, y: f64) -> usize {
        let side = self.exc_side as i64;
        let gx = (x.round() as i64).rem_euclid(side) as usize;
        let gy = (y.round() as i64).rem_euclid(side) as usize;
        gy * self.exc_side + gx
    }

    /// Nearest inhibitory neuron to a continuous position on the excitatory frame.
    pub fn nearest_inh(&self, x: f64, y: f64) -> usize {
        let side = self.inh_side as i64;
        let gx = (((x - 1.0) / 2.0).round() as i64).rem_euclid(side) as usize;
        let gy = (((y - 1.0) / 2.0).round() as i64).rem_euclid(side) as usize;
        gy * self.inh_side + gx
    }
}

/// Signed wrapped difference `b - a` on a ring of length `side`, in `[-side/2, side/2)`.
pub fn wrap_delta(a: f64, b: f64, side: f64) -> f64 {
    let d = (b - a).rem_euclid(side);
    if d >= side / 2.0 {
        d - side
    } else {
        d
    }
}

/// Euclidean distance on a torus with per-axis wrap `min(|d|, side - |d|)`.
pub fn torus_distance(a: GridPoint, b: GridPoint, side: usize) -> f64 {
    let axis = |p: usize, q: usize| {
        let d = p.abs_diff(q) % side;
        d.min(side - d) as f64
    };
    axis(a.x, b.x).hypot(axis(a.y, b.y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_identity_and_wrap() {
        let o = GridPoint::new(0, 0);
        assert_eq!(torus_distance(o, o, 60), 0.0);
        assert_eq!(torus_distance(o, GridPoint::new(59, 0), 60), 1.0);
        let d = torus_distance(o, GridPoint::new(30, 40), 60);
        assert!((d - (30f64 * 30.0 + 20.0 * 20.0).sqrt()).abs() < 1e-12);
        assert!((d - 36.06).abs() < 0.01);
    }

    #[test]
    fn index_roundtrip() {
        let g = GridSpec::default();
        for i in [0, 59, 60, 1234, 3599] {
            assert_eq!(g.exc_index(g.exc_point(i)), i);
        }
        for i in [0, 29, 30, 899] {
            assert_eq!(g.inh_index(g.inh_point(i)), i);
            let (x, y) = g.inh_on_exc_frame(i);
            assert_eq!(g.nearest_inh(x, y), i);
        }
    }

    #[test]
    fn rejects_mismatched_sides() {
        assert!(GridSpec::new(60, 29).is_err());
        assert!(GridSpec::new(0, 0).is_err());
        assert_eq!(GridSpec::new(60, 30).unwrap().exc_count(), 3600);
    }

    #[test]
    fn wrap_delta_range() {
        assert_eq!(wrap_delta(0.0, 59.0, 60.0), -1.0);
        assert_eq!(wrap_delta(59.0, 0.0, 60.0), 1.0);
        assert_eq!(wrap_delta(0.0, 30.0, 60.0), -30.0);
    }
}
