//! Recurrent connectivity: Gaussian local profiles with an optional shift
//! along each source's preferred direction, and the uniform random control.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::grid::GridSpec;
use super::landscape::DirectionLandscape;
use super::Edge;
use crate::error::{Error, Result};

/// Maximum draws per requested target before giving up on a source.
const DRAWS_PER_TARGET: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalProfile {
    pub p_conn: f64,
    pub sigma_exc: f64,
    pub sigma_inh: f64,
    pub n_shift: u32,
    pub j_exc: i32,
    pub j_inh: i32,
}

/// `(excitatory, inhibitory)` out-degree for connection probability `p_conn`.
pub fn out_degrees(spec: &GridSpec, p_conn: f64) -> (usize, usize) {
    let exc = (p_conn * spec.exc_count() as f64 + 1e-9).floor() as usize;
    let inh = (p_conn * spec.inh_count() as f64 + 1e-9).floor() as usize;
    (exc, inh)
}

/// Generation-stamped membership set; cheaper than a hash set for the
/// short per-source target lists.
struct Marks {
    stamp: Vec<u32>,
    generation: u32,
}

impl Marks {
    fn new(n: usize) -> Self {
        Marks {
            stamp: vec![0; n],
            generation: 0,
        }
    }

    fn clear(&mut self) {
        self.generation += 1;
    }

    /// Returns true if `i` was not yet marked.
    fn insert(&mut self, i: usize) -> bool {
        if self.stamp[i] == self.generation {
            false
        } else {
            self.stamp[i] = self.generation;
            true
        }
    }
}

fn draw_distinct(
    wanted: usize,
    forbidden: Option<usize>,
    marks: &mut Marks,
    source_neuron: usize,
    mut draw: impl FnMut() -> usize,
) -> Result<Vec<usize>> {
    marks.clear();
    let mut out = Vec::with_capacity(wanted);
    let limit = DRAWS_PER_TARGET * wanted.max(1);
    let mut attempts = 0;
    while out.len() < wanted {
        if attempts >= limit {
            return Err(Error::DegreeUnreachable {
                source_neuron,
                wanted,
                attempts,
            });
        }
        attempts += 1;
        let t = draw();
        if Some(t) == forbidden || !marks.insert(t) {
            continue;
        }
        out.push(t);
    }
    Ok(out)
}

/// Locally connected network; E→E profiles are shifted by `n_shift` along
/// the landscape direction of the source.
pub fn build_anisotropic(
    spec: &GridSpec,
    landscape: &DirectionLandscape,
    profile: &LocalProfile,
    seed: u64,
) -> Result<Vec<Edge>> {
    if !(profile.sigma_exc > 0.0) {
        return Err(Error::config("sigma_exc", "must be positive"));
    }
    if !(profile.sigma_inh > 0.0) {
        return Err(Error::config("sigma_inh", "must be positive"));
    }
    if landscape.len() != spec.exc_count() {
        return Err(Error::Shape(format!(
            "landscape covers {} neurons, sheet has {}",
            landscape.len(),
            spec.exc_count()
        )));
    }
    let n_exc = spec.exc_count();
    let n_inh = spec.inh_count();
    let (deg_e, deg_i) = out_degrees(spec, profile.p_conn);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut marks_e = Marks::new(n_exc);
    let mut marks_i = Marks::new(n_inh);
    let mut edges = Vec::with_capacity((n_exc + n_inh) * (deg_e + deg_i));
    let shift = profile.n_shift as f64;

    for src in 0..n_exc + n_inh {
        let is_exc = src < n_exc;
        let (sx, sy, sigma, weight) = if is_exc {
            let p = spec.exc_point(src);
            (p.x as f64, p.y as f64, profile.sigma_exc, profile.j_exc)
        } else {
            let (x, y) = spec.inh_on_exc_frame(src - n_exc);
            (x, y, profile.sigma_inh, -profile.j_inh)
        };
        let gauss = Normal::new(0.0, sigma).map_err(|e| Error::config("sigma", e.to_string()))?;

        let (cx, cy) = if is_exc {
            let d = landscape.direction(src);
            (sx + shift * d.dx as f64, sy + shift * d.dy as f64)
        } else {
            (sx, sy)
        };
        let self_exc = is_exc.then_some(src);
        let targets_e = draw_distinct(deg_e, self_exc, &mut marks_e, src, || {
            let ox = gauss.sample(&mut rng);
            let oy = gauss.sample(&mut rng);
            spec.nearest_exc(cx + ox, cy + oy)
        })?;
        edges.extend(targets_e.into_iter().map(|t| Edge::new(src, t, weight)));

        let self_inh = (!is_exc).then(|| src - n_exc);
        let targets_i = draw_distinct(deg_i, self_inh, &mut marks_i, src, || {
            let ox = gauss.sample(&mut rng);
            let oy = gauss.sample(&mut rng);
            spec.nearest_inh(sx + ox, sy + oy)
        })?;
        edges.extend(
            targets_i
                .into_iter()
                .map(|t| Edge::new(src, n_exc + t, weight)),
        );
    }
    Ok(edges)
}

/// Same sizes, degrees, weights and delays as [`build_anisotropic`], targets uniform.
pub fn build_random_control(
    spec: &GridSpec,
    p_conn: f64,
    j_exc: i32,
    j_inh: i32,
    seed: u64,
) -> Result<Vec<Edge>> {
    let n_exc = spec.exc_count();
    let n_inh = spec.inh_count();
    let (deg_e, deg_i) = out_degrees(spec, p_conn);
    if deg_e >= n_exc || deg_i >= n_inh {
        return Err(Error::config("p_conn", "out-degree exceeds population size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut marks_e = Marks::new(n_exc);
    let mut marks_i = Marks::new(n_inh);
    let mut edges = Vec::with_capacity((n_exc + n_inh) * (deg_e + deg_i));
    for src in 0..n_exc + n_inh {
        let is_exc = src < n_exc;
        let weight = if is_exc { j_exc } else { -j_inh };
        let self_exc = is_exc.then_some(src);
        let targets_e = draw_distinct(deg_e, self_exc, &mut marks_e, src, || {
            rng.random_range(0..n_exc)
        })?;
        edges.extend(targets_e.into_iter().map(|t| Edge::new(src, t, weight)));
        let self_inh = (!is_exc).then(|| src - n_exc);
        let targets_i = draw_distinct(deg_i, self_inh, &mut marks_i, src, || {
            rng.random_range(0..n_inh)
        })?;
        edges.extend(
            targets_i
                .into_iter()
                .map(|t| Edge::new(src, n_exc + t, weight)),
        );
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(n_shift: u32) -> LocalProfile {
        LocalProfile {
            p_conn: 0.05,
            sigma_exc: 12.0,
            sigma_inh: 9.0,
            n_shift,
            j_exc: 12,
            j_inh: 48,
        }
    }

    #[test]
    fn degrees_floor() {
        assert_eq!(out_degrees(&GridSpec::default(), 0.05), (180, 45));
    }

    #[test]
    fn tiny_sigma_cannot_reach_degree() {
        let g = GridSpec::default();
        let l = DirectionLandscape::build(&g, 4, 1).unwrap();
        let mut p = profile(1);
        p.sigma_exc = 0.2;
        let err = build_anisotropic(&g, &l, &p, 1).unwrap_err();
        assert!(matches!(err, Error::DegreeUnreachable { .. }));
    }

    #[test]
    fn nonpositive_sigma_is_config_error() {
        let g = GridSpec::default();
        let l = DirectionLandscape::build(&g, 4, 1).unwrap();
        let mut p = profile(1);
        p.sigma_inh = 0.0;
        assert!(matches!(
            build_anisotropic(&g, &l, &p, 1),
            Err(Error::Config { .. })
        ));
    }
}
