//! Preferred-direction landscape built from periodic gradient noise.
//!
//! The noise field has `scale` cells per axis with gradients on a
//! `scale x scale` lattice that wraps around, so the field is periodic on
//! the torus. Values are rank-uniformized and cut into eight equal-width
//! bins, each bin standing for one lattice direction (angles 0°, 45°, ...).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use crate::error::{Error, Result};

/// Unit shift on the lattice. Diagonals are `(±1, ±1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Direction {
    pub dx: i8,
    pub dy: i8,
}

impl Direction {
    pub const fn new(dx: i8, dy: i8) -> Self {
        Direction { dx, dy }
    }

    /// The eight lattice directions in counter-clockwise order starting at +x.
    pub const ALL: [Direction; 8] = [
        Direction::new(1, 0),
        Direction::new(1, 1),
        Direction::new(0, 1),
        Direction::new(-1, 1),
        Direction::new(-1, 0),
        Direction::new(-1, -1),
        Direction::new(0, -1),
        Direction::new(1, -1),
    ];

    pub fn cosine(self, other: Direction) -> f64 {
        let dot = (self.dx as f64) * (other.dx as f64) + (self.dy as f64) * (other.dy as f64);
        let na = ((self.dx as f64).powi(2) + (self.dy as f64).powi(2)).sqrt();
        let nb = ((other.dx as f64).powi(2) + (other.dy as f64).powi(2)).sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

/// Classic 2D gradient noise with gradients on a periodic lattice.
#[derive(Debug, Clone)]
pub struct PeriodicPerlin {
    period: usize,
    gradients: Vec<(f64, f64)>,
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

impl PeriodicPerlin {
    pub fn new(period: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gradients = (0..period * period)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                (angle.cos(), angle.sin())
            })
            .collect();
        PeriodicPerlin { period, gradients }
    }

    fn gradient(&self, ix: i64, iy: i64) -> (f64, f64) {
        let p = self.period as i64;
        let gx = ix.rem_euclid(p) as usize;
        let gy = iy.rem_euclid(p) as usize;
        self.gradients[gy * self.period + gx]
    }

    /// Noise at `(x, y)` in lattice units; periodic with period `self.period` on both axes.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (ix, iy) = (x0 as i64, y0 as i64);
        let corner = |cx: i64, cy: i64, ox: f64, oy: f64| {
            let (gx, gy) = self.gradient(ix + cx, iy + cy);
            gx * ox + gy * oy
        };
        let n00 = corner(0, 0, fx, fy);
        let n10 = corner(1, 0, fx - 1.0, fy);
        let n01 = corner(0, 1, fx, fy - 1.0);
        let n11 = corner(1, 1, fx - 1.0, fy - 1.0);
        let (u, v) = (fade(fx), fade(fy));
        lerp(lerp(n00, n10, u), lerp(n01, n11, u), v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionLandscape {
    pub directions: Vec<Direction>,
    pub scale: usize,
    pub seed: u64,
}

impl DirectionLandscape {
    /// Perlin landscape over the excitatory sheet.
    pub fn build(spec: &GridSpec, scale: usize, seed: u64) -> Result<Self> {
        if scale == 0 {
            return Err(Error::config("perlin_scale", "must be at least 1"));
        }
        let noise = PeriodicPerlin::new(scale, seed);
        let side = spec.exc_side;
        let cell = side as f64 / scale as f64;
        let n = spec.exc_count();
        let values: Vec<f64> = (0..n)
            .map(|i| {
                let p = spec.exc_point(i);
                // Half-cell offset keeps samples off lattice nodes where the noise is 0.
                noise.sample((p.x as f64 + 0.5) / cell, (p.y as f64 + 0.5) / cell)
            })
            .collect();

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let mut directions = vec![Direction::ALL[0]; n];
        for (rank, &neuron) in order.iter().enumerate() {
            let bin = (rank * Direction::ALL.len()) / n;
            directions[neuron] = Direction::ALL[bin];
        }
        Ok(DirectionLandscape {
            directions,
            scale,
            seed,
        })
    }

    /// Every neuron shares the same direction (the homogeneous variant).
    pub fn homogeneous(spec: &GridSpec, direction: Direction) -> Self {
        DirectionLandscape {
            directions: vec![direction; spec.exc_count()],
            scale: 0,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn direction(&self, neuron: usize) -> Direction {
        self.directions[neuron]
    }

    /// Count of neurons per entry of [`Direction::ALL`].
    pub fn histogram(&self) -> [usize; 8] {
        let mut counts = [0usize; 8];
        for d in &self.directions {
            if let Some(k) = Direction::ALL.iter().position(|a| a == d) {
                counts[k] += 1;
            }
        }
        counts
    }
}
