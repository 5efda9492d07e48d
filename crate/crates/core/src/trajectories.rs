//! Target arm trajectories: built-in minimum-jerk scripts for the seven
//! named actions, CSV loading with resampling, and z-scoring.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per trajectory (2 s at 100 Hz).
pub const SAMPLES: usize = 200;
pub const RATE_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Hide,
    Unhide,
    MoveDown,
    MoveUp,
    PickAndPlace,
    PutOnTop,
    TakeDown,
}

impl Action {
    pub const ALL: [Action; 7] = [
        Action::Hide,
        Action::Unhide,
        Action::MoveDown,
        Action::MoveUp,
        Action::PickAndPlace,
        Action::PutOnTop,
        Action::TakeDown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Hide => "hide",
            Action::Unhide => "unhide",
            Action::MoveDown => "move_down",
            Action::MoveUp => "move_up",
            Action::PickAndPlace => "pick_and_place",
            Action::PutOnTop => "put_on_top",
            Action::TakeDown => "take_down",
        }
    }

    /// Built-in waypoints, in metres in the robot base frame.
    pub fn script(self) -> WaypointScript {
        let p = |t: f64, x: f64, y: f64, z: f64| (t, [x, y, z]);
        let points = match self {
            Action::Hide => vec![
                p(0.0, 0.55, 0.00, 0.30),
                p(0.4, 0.50, -0.15, 0.35),
                p(1.0, 0.40, -0.30, 0.12),
            ],
            Action::Unhide => vec![
                p(0.0, 0.40, -0.30, 0.12),
                p(0.6, 0.50, -0.15, 0.35),
                p(1.0, 0.55, 0.00, 0.30),
            ],
            Action::MoveDown => vec![p(0.0, 0.50, 0.10, 0.40), p(1.0, 0.52, 0.08, 0.10)],
            Action::MoveUp => vec![p(0.0, 0.50, -0.10, 0.10), p(1.0, 0.48, -0.08, 0.42)],
            Action::PickAndPlace => vec![
                p(0.00, 0.45, -0.20, 0.30),
                p(0.15, 0.45, -0.20, 0.08),
                p(0.25, 0.45, -0.20, 0.08),
                p(0.40, 0.45, -0.20, 0.30),
                p(0.70, 0.55, 0.20, 0.30),
                p(0.85, 0.55, 0.20, 0.08),
                p(1.00, 0.55, 0.20, 0.30),
            ],
            Action::PutOnTop => vec![
                p(0.00, 0.40, 0.00, 0.30),
                p(0.20, 0.40, 0.00, 0.05),
                p(0.40, 0.40, 0.00, 0.30),
                p(0.70, 0.60, 0.10, 0.35),
                p(0.85, 0.60, 0.10, 0.20),
                p(1.00, 0.60, 0.10, 0.35),
            ],
            Action::TakeDown => vec![
                p(0.00, 0.60, 0.10, 0.35),
                p(0.15, 0.60, 0.10, 0.20),
                p(0.30, 0.60, 0.10, 0.35),
                p(0.65, 0.40, 0.00, 0.30),
                p(0.85, 0.40, 0.00, 0.05),
                p(1.00, 0.40, 0.00, 0.25),
            ],
        };
        WaypointScript { points }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config("trajectories", format!("unknown action `{s}`")))
    }
}

/// Ordered `(time fraction, point)` pairs; fractions rise strictly from 0 to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointScript {
    pub points: Vec<(f64, [f64; 3])>,
}

impl WaypointScript {
    pub fn validate(&self) -> Result<()> {
        let pts = &self.points;
        if pts.len() < 2 {
            return Err(Error::config("waypoints", "need at least two waypoints"));
        }
        if pts[0].0 != 0.0 || pts[pts.len() - 1].0 != 1.0 {
            return Err(Error::config("waypoints", "time fractions must run from 0 to 1"));
        }
        if pts.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::config("waypoints", "time fractions must increase strictly"));
        }
        if pts.iter().flat_map(|(_, p)| p).any(|v| !v.is_finite()) {
            return Err(Error::config("waypoints", "non-finite coordinate"));
        }
        Ok(())
    }

    /// Per-axis `(min, max)` over the waypoints.
    pub fn bounds(&self) -> [(f64, f64); 3] {
        let mut b = [(f64::INFINITY, f64::NEG_INFINITY); 3];
        for (_, p) in &self.points {
            for d in 0..3 {
                b[d].0 = b[d].0.min(p[d]);
                b[d].1 = b[d].1.max(p[d]);
            }
        }
        b
    }
}

/// Minimum-jerk blend `10s³ − 15s⁴ + 6s⁵` on `[0, 1]`.
pub fn min_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// `n` uniform samples over the script, inclusive of both ends.
pub fn sample_script(script: &WaypointScript, n: usize) -> Result<Vec<[f64; 3]>> {
    script.validate()?;
    if n < 2 {
        return Err(Error::config("samples", "need at least two samples"));
    }
    let pts = &script.points;
    let mut seg = 0;
    Ok((0..n)
        .map(|k| {
            let u = k as f64 / (n - 1) as f64;
            while seg + 2 < pts.len() && u > pts[seg + 1].0 {
                seg += 1;
            }
            let (t0, a) = pts[seg];
            let (t1, b) = pts[seg + 1];
            let s = min_jerk((u - t0) / (t1 - t0));
            [0, 1, 2].map(|d| a[d] * (1.0 - s) + b[d] * s)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub name: String,
    pub samples: Vec<[f64; 3]>,
}

impl Trajectory {
    pub fn new(name: impl Into<String>, samples: Vec<[f64; 3]>) -> Result<Self> {
        if samples.len() != SAMPLES {
            return Err(Error::Shape(format!("trajectory has {} samples, want {SAMPLES}", samples.len())));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite trajectory sample".into()));
        }
        Ok(Trajectory {
            name: name.into(),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample times in seconds.
    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 / RATE_HZ).collect()
    }

    pub fn dimension(&self, d: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[d]).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_xyz_csv(path, &self.times(), &self.samples)
    }
}

/// Minimum-jerk trajectory through `script`. With `jitter > 0` every
/// waypoint is displaced by up to `jitter` per axis, drawn from `seed`.
pub fn generate(name: &str, script: &WaypointScript, jitter: f64, seed: u64) -> Result<Trajectory> {
    let mut script = script.clone();
    if jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, p) in script.points.iter_mut() {
            for v in p.iter_mut() {
                *v += rng.random_range(-jitter..=jitter);
            }
        }
    }
    Trajectory::new(name, sample_script(&script, SAMPLES)?)
}

pub fn builtin(action: Action) -> Trajectory {
    generate(action.as_str(), &action.script(), 0.0, 0).expect("built-in scripts are valid")
}

pub fn write_xyz_csv(path: &Path, times: &[f64], samples: &[[f64; 3]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "x", "y", "z"])?;
    for (t, s) in times.iter().zip(samples) {
        w.write_record([t.to_string(), s[0].to_string(), s[1].to_string(), s[2].to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `t,x,y,z` rows and resamples linearly to [`SAMPLES`] uniform points
/// spanning the recorded time range.
pub fn load_csv(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "x", "y", "z"] {
        return Err(parse_err(1, "header must be `t,x,y,z`".into()));
    }
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, got {}", rec.len())));
        }
        let mut vals = [0.0; 4];
        for (k, field) in rec.iter().enumerate() {
            vals[k] = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("`{field}` is not a number")))?;
        }
        if let Some(&last) = times.last() {
            if !(vals[0] > last) {
                return Err(parse_err(line, format!("time {} does not increase", vals[0])));
            }
        }
        times.push(vals[0]);
        rows.push([vals[1], vals[2], vals[3]]);
    }
    if rows.len() < 2 {
        return Err(parse_err(0, format!("need at least 2 rows, got {}", rows.len())));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Trajectory::new(name, resample(&times, &rows, SAMPLES))
}

/// Linear interpolation onto `n` uniform points over `[times[0], times[last]]`.
pub fn resample(times: &[f64], rows: &[[f64; 3]], n: usize) -> Vec<[f64; 3]> {
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let mut seg = 0;
    (0..n)
        .map(|k| {
            if k == 0 {
                return rows[0];
            }
            if k == n - 1 {
                return rows[rows.len() - 1];
            }
            let t = t0 + (t1 - t0) * k as f64 / (n - 1) as f64;
            while seg + 2 < times.len() && t > times[seg + 1] {
                seg += 1;
            }
            let w = (t - times[seg]) / (times[seg + 1] - times[seg]);
            let (a, b) = (rows[seg], rows[seg + 1]);
            [0, 1, 2].map(|d| if w == 0.0 { a[d] } else if w == 1.0 { b[d] } else { a[d] + (b[d] - a[d]) * w })
        })
        .collect()
}

/// Per-dimension affine map to zero mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub scale: [f64; 3],
    /// Constant dimensions are centred but not scaled.
    pub degenerate: [bool; 3],
}

impl Normalization {
    pub fn apply(&self, s: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|d| (s[d] - self.mean[d]) / self.scale[d])
    }

    pub fn invert(&self, s: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|d| s[d] * self.scale[d] + self.mean[d])
    }
}

pub fn normalize(t: &Trajectory) -> (Trajectory, Normalization) {
    let n = t.len() as f64;
    let mut norm = Normalization {
        mean: [0.0; 3],
        scale: [1.0; 3],
        degenerate: [false; 3],
    };
    for d in 0..3 {
        let m = t.samples.iter().map(|s| s[d]).sum::<f64>() / n;
        let var = t.samples.iter().map(|s| (s[d] - m).powi(2)).sum::<f64>() / n;
        norm.mean[d] = m;
        if var > 0.0 {
            norm.scale[d] = var.sqrt();
        } else {
            norm.degenerate[d] = true;
        }
    }
    let samples = t.samples.iter().map(|&s| norm.apply(s)).collect();
    (
        Trajectory {
            name: t.name.clone(),
            samples,
        },
        norm,
    )
}

pub fn denormalize(t: &Trajectory, norm: &Normalization) -> Trajectory {
    Trajectory {
        name: t.name.clone(),
        samples: t.samples.iter().map(|&s| norm.invert(s)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_bounds() {
        for a in Action::ALL {
            let s = a.script();
            let t = builtin(a);
            assert_eq!(t.len(), SAMPLES);
            assert_eq!(t.samples[0], s.points[0].1);
            assert_eq!(t.samples[SAMPLES - 1], s.points.last().unwrap().1);
            let b = s.bounds();
            for p in &t.samples {
                for d in 0..3 {
                    assert!(p[d] >= b[d].0 - 1e-12 && p[d] <= b[d].1 + 1e-12);
                }
            }
            let (_, n) = normalize(&t);
            assert!(!n.degenerate.iter().any(|&x| x), "{a} has a constant axis");
        }
    }

    #[test]
    fn straight_move_midpoint() {
        let s = WaypointScript {
            points: vec![(0.0, [0.0, 1.0, 2.0]), (1.0, [2.0, -1.0, 4.0])],
        };
        let v = sample_script(&s, 201).unwrap();
        for d in 0..3 {
            assert!((v[100][d] - [1.0, 0.0, 3.0][d]).abs() < 1e-15);
        }
    }

    #[test]
    fn endpoint_velocity_small() {
        let t = builtin(Action::MoveUp);
        let z = t.dimension(2);
        let vel: Vec<f64> = z.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let peak = vel.iter().copied().fold(0.0, f64::max);
        assert!(vel[0] < 1e-3 * peak);
        assert!(vel[vel.len() - 1] < 1e-3 * peak);
    }

    #[test]
    fn jitter_is_seeded() {
        let s = Action::Hide.script();
        let a = generate("hide", &s, 0.01, 5).unwrap();
        let b = generate("hide", &s, 0.01, 5).unwrap();
        let c = generate("hide", &s, 0.01, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_script() {
        let s = WaypointScript {
            points: vec![(0.0, [0.0; 3]), (0.5, [1.0; 3]), (0.5, [2.0; 3]), (1.0, [0.0; 3])],
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn normalize_roundtrip() {
        let t = builtin(Action::PickAndPlace);
        let (z, n) = normalize(&t);
        for d in 0..3 {
            let x = z.dimension(d);
            let m = x.iter().sum::<f64>() / x.len() as f64;
            let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / x.len() as f64;
            assert!(m.abs() <= 1e-12);
            assert!((v - 1.0).abs() <= 1e-9);
        }
        let back = denormalize(&z, &n);
        for (a, b) in back.samples.iter().zip(&t.samples) {
            for d in 0..3 {
                assert!((a[d] - b[d]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn constant_axis_flagged() {
        let t = Trajectory::new("flat", vec![[1.0, 2.0, 3.0]; SAMPLES]).unwrap();
        let (z, n) = normalize(&t);
        assert_eq!(n.degenerate, [true; 3]);
        assert!(z.samples.iter().all(|s| *s == [0.0; 3]));
    }
}
