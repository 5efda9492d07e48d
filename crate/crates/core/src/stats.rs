//! Activity statistics: rates, Fano factors, trial-to-trial differences,
//! PCA summaries and the two-sample / k-sample tests.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};

use crate::connectome::GridSpec;
use crate::error::{Error, Result};
use crate::neurocore::SpikeRaster;

/// Spikes per neuron per step.
pub fn mean_firing_rate(raster: &SpikeRaster) -> f64 {
    let n = raster.steps() * raster.neurons();
    if n == 0 {
        return 0.0;
    }
    raster.total() as f64 / n as f64
}

/// Fraction of neurons spiking at each step.
pub fn rate_curve(raster: &SpikeRaster) -> Vec<f64> {
    let n = raster.neurons().max(1) as f64;
    raster.population_counts().into_iter().map(|c| c as f64 / n).collect()
}

/// Mean rate of `steps` within one raster.
pub fn window_rate(raster: &SpikeRaster, steps: std::ops::Range<usize>) -> f64 {
    mean_firing_rate(&raster.select_steps(steps))
}

/// Mean rate per square block of the excitatory sheet, row-major over
/// blocks. `raster` holds excitatory columns only.
pub fn group_rates(raster: &SpikeRaster, spec: &GridSpec, per_axis: usize) -> Result<Vec<f64>> {
    let side = spec.exc_side;
    if per_axis == 0 || !side.is_multiple_of(per_axis) {
        return Err(Error::config("groups", format!("{per_axis} groups do not tile side {side}")));
    }
    if raster.neurons() != spec.exc_count() {
        return Err(Error::Shape(format!(
            "raster has {} neurons, sheet {}",
            raster.neurons(),
            spec.exc_count()
        )));
    }
    let block = side / per_axis;
    let mut counts = vec![0usize; per_axis * per_axis];
    for (_, n) in raster.events() {
        let p = spec.exc_point(n);
        counts[(p.y / block) * per_axis + p.x / block] += 1;
    }
    let denom = (raster.steps() * block * block).max(1) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / denom).collect())
}

/// Variance over mean (population variance) of a count series.
pub fn fano_factor(counts: &[f64]) -> Result<f64> {
    if counts.len() < 2 {
        return Err(Error::Numerical("Fano factor needs at least 2 samples".into()));
    }
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return Err(Error::Numerical("Fano factor of an all-zero series".into()));
    }
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
    Ok(var / mean)
}

/// Fano factor of the per-step population spike count of one trial.
pub fn population_fano(raster: &SpikeRaster) -> Result<f64> {
    let counts: Vec<f64> = raster.population_counts().into_iter().map(|c| c as f64).collect();
    fano_factor(&counts)
}

/// Per-neuron Fano factor of the per-step spike series, averaged over the
/// neurons that spiked at least once.
pub fn neuron_fano(raster: &SpikeRaster) -> Result<f64> {
    let steps = raster.steps();
    let mut counts = vec![0usize; raster.neurons()];
    for (_, n) in raster.events() {
        counts[n] += 1;
    }
    let active: Vec<f64> = counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            // binary series: var/mean = 1 - p
            let p = c as f64 / steps as f64;
            (p - p * p) / p
        })
        .collect();
    if active.is_empty() {
        return Err(Error::Numerical("no neuron spiked".into()));
    }
    Ok(active.iter().sum::<f64>() / active.len() as f64)
}

/// Normalized Hamming distance between two binary vectors.
pub fn hamming(a: &[u8], b: &[u8]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let d = a.iter().zip(b).filter(|(x, y)| x != y).count();
    d as f64 / a.len() as f64
}

/// Per-step Hamming distances for every unordered trial pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseDifferences {
    /// `(i, j)` with `i < j`, lexicographic.
    pub pairs: Vec<(usize, usize)>,
    /// `values[step][pair]`
    pub values: Vec<Vec<f64>>,
}

impl PairwiseDifferences {
    pub fn steps(&self) -> usize {
        self.values.len()
    }

    pub fn at_step(&self, step: usize) -> &[f64] {
        &self.values[step]
    }

    pub fn mean(&self) -> Vec<f64> {
        self.values.iter().map(|v| mean(v)).collect()
    }

    /// Population std over pairs, per step.
    pub fn std(&self) -> Vec<f64> {
        self.values.iter().map(|v| std_pop(v)).collect()
    }
}

pub fn pairwise_differences(rasters: &[SpikeRaster]) -> Result<PairwiseDifferences> {
    let first = rasters
        .first()
        .ok_or_else(|| Error::Shape("no trials".into()))?;
    if rasters
        .iter()
        .any(|r| r.steps() != first.steps() || r.neurons() != first.neurons())
    {
        return Err(Error::Shape("trials differ in shape".into()));
    }
    let n = rasters.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let per_pair: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            (0..first.steps())
                .map(|t| hamming(rasters[i].row(t), rasters[j].row(t)))
                .collect()
        })
        .collect();
    let values = (0..first.steps())
        .map(|t| per_pair.iter().map(|p| p[t]).collect())
        .collect();
    Ok(PairwiseDifferences { pairs, values })
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn std_pop(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Principal components of row observations.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// Columns are unit components, by decreasing variance.
    pub components: DMatrix<f64>,
    /// Variance along each kept component.
    pub explained: Vec<f64>,
    /// Trace of the covariance matrix.
    pub total_variance: f64,
}

/// Full eigendecomposition below this many features; block power
/// iteration above.
const DENSE_PCA_LIMIT: usize = 400;

impl Pca {
    /// Fits `k` components to the rows of `data` (covariance with divisor `rows - 1`).
    pub fn fit(data: &DMatrix<f64>, k: usize) -> Result<Self> {
        let (rows, cols) = data.shape();
        if rows < 2 || k == 0 || k > cols {
            return Err(Error::Shape(format!("cannot fit {k} components to {rows}x{cols}")));
        }
        let mean = DVector::from_iterator(cols, data.column_iter().map(|c| c.mean()));
        let mut x = data.clone();
        for (j, mut c) in x.column_iter_mut().enumerate() {
            c.add_scalar_mut(-mean[j]);
        }
        let denom = (rows - 1) as f64;
        let total_variance = x.column_iter().map(|c| c.norm_squared()).sum::<f64>() / denom;
        let (components, explained) = if cols <= DENSE_PCA_LIMIT {
            let cov = x.transpose() * &x / denom;
            let eig = SymmetricEigen::new(cov);
            let mut order: Vec<usize> = (0..cols).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let mut comps = DMatrix::zeros(cols, k);
            let mut ev = Vec::with_capacity(k);
            for (dst, &src) in order.iter().take(k).enumerate() {
                comps.set_column(dst, &eig.eigenvectors.column(src));
                ev.push(eig.eigenvalues[src].max(0.0));
            }
            (comps, ev)
        } else {
            block_power(&x, k, denom)?
        };
        let mut pca = Pca {
            mean,
            components,
            explained,
            total_variance,
        };
        pca.fix_signs();
        Ok(pca)
    }

    /// Largest-magnitude loading of each component is made positive.
    fn fix_signs(&mut self) {
        for mut c in self.components.column_iter_mut() {
            let big = c.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if big < 0.0 {
                c.neg_mut();
            }
        }
    }

    pub fn project(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = data.clone();
        for (j, mut c) in x.column_iter_mut().enumerate() {
            c.add_scalar_mut(-self.mean[j]);
        }
        x * &self.components
    }

    pub fn reconstruct(&self, scores: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = scores * self.components.transpose();
        for (j, mut c) in x.column_iter_mut().enumerate() {
            c.add_scalar_mut(self.mean[j]);
        }
        x
    }

    pub fn explained_ratio(&self) -> Vec<f64> {
        self.explained.iter().map(|v| v / self.total_variance).collect()
    }
}

/// Top-`k` eigenpairs of `xᵀx / denom` by orthogonal iteration with a few
/// guard vectors, never forming the covariance.
fn block_power(x: &DMatrix<f64>, k: usize, denom: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let cols = x.ncols();
    let b = (k + 6).min(cols);
    // deterministic, non-degenerate start
    let mut q = DMatrix::from_fn(cols, b, |i, j| (((i * 7919 + j * 104_729) % 1000) as f64 / 1000.0) - 0.5);
    q = q.qr().q();
    let mut prev = vec![0.0; k];
    for _ in 0..1000 {
        let z = x.transpose() * (x * &q);
        q = z.qr().q();
        // Rayleigh-Ritz on the subspace
        let xq = x * &q;
        let small = xq.transpose() * &xq / denom;
        let eig = SymmetricEigen::new(small);
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let vals: Vec<f64> = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
        let done = vals
            .iter()
            .zip(&prev)
            .all(|(a, p)| (a - p).abs() <= 1e-12 * a.abs().max(1e-300));
        prev = vals;
        if done {
            let mut comps = DMatrix::zeros(cols, k);
            for (dst, &src) in order.iter().take(k).enumerate() {
                comps.set_column(dst, &(&q * eig.eigenvectors.column(src)));
            }
            return Ok((comps, prev.iter().map(|v| v.max(0.0)).collect()));
        }
    }
    Err(Error::Numerical("PCA power iteration did not converge".into()))
}

/// PCA over the row-concatenation of per-trial feature matrices, then
/// each trial projected separately (`rows × k` per trial).
pub fn pca_project(trials: &[DMatrix<f64>], k: usize) -> Result<(Pca, Vec<DMatrix<f64>>)> {
    let first = trials.first().ok_or_else(|| Error::Shape("no trials".into()))?;
    let cols = first.ncols();
    if trials.iter().any(|m| m.ncols() != cols) {
        return Err(Error::Shape("trials differ in feature count".into()));
    }
    let rows: usize = trials.iter().map(|m| m.nrows()).sum();
    let mut stacked = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for m in trials {
        stacked.rows_mut(r, m.nrows()).copy_from(m);
        r += m.nrows();
    }
    let pca = Pca::fit(&stacked, k)?;
    let proj = trials.iter().map(|m| pca.project(m)).collect();
    Ok((pca, proj))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pc1Stats {
    /// Pairwise MSE over pairs `i < j`, each divided by the variance of trial `i`'s series.
    pub normalized_mse: f64,
    /// Per-step population std across trials, averaged over steps.
    pub mean_std: f64,
}

pub fn pc1_statistics(series: &[Vec<f64>]) -> Result<Pc1Stats> {
    if series.len() < 2 {
        return Err(Error::Shape("need at least two trials".into()));
    }
    let len = series[0].len();
    if len == 0 || series.iter().any(|s| s.len() != len) {
        return Err(Error::Shape("PC1 series differ in length".into()));
    }
    let mut mse_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..series.len() {
        let var = std_pop(&series[i]).powi(2);
        for j in i + 1..series.len() {
            let mse = series[i]
                .iter()
                .zip(&series[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / len as f64;
            mse_sum += if mse == 0.0 { 0.0 } else { mse / var };
            pairs += 1;
        }
    }
    let mean_std = (0..len)
        .map(|t| std_pop(&series.iter().map(|s| s[t]).collect::<Vec<_>>()))
        .sum::<f64>()
        / len as f64;
    Ok(Pc1Stats {
        normalized_mse: mse_sum / pairs as f64,
        mean_std,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Levene,
    MannWhitneyU,
    KsTwoSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
}

fn require_size(samples: &[&[f64]]) -> Result<()> {
    if samples.iter().any(|s| s.len() < 3) {
        return Err(Error::Numerical("every sample needs at least 3 values".into()));
    }
    if samples.iter().flat_map(|s| s.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite sample value".into()));
    }
    Ok(())
}

/// Levene's test on absolute deviations from the group means.
pub fn levene(samples: &[&[f64]]) -> Result<TestResult> {
    if samples.len() < 2 {
        return Err(Error::Numerical("Levene needs at least two groups".into()));
    }
    require_size(samples)?;
    let z: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let m = mean(s);
            s.iter().map(|v| (v - m).abs()).collect()
        })
        .collect();
    let k = z.len() as f64;
    let n_total: usize = z.iter().map(|g| g.len()).sum();
    let n = n_total as f64;
    let grand = z.iter().flatten().sum::<f64>() / n;
    let group_means: Vec<f64> = z.iter().map(|g| mean(g)).collect();
    let between: f64 = z
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let within: f64 = z
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    if within == 0.0 {
        return Err(Error::Numerical("zero within-group spread".into()));
    }
    let w = (n - k) / (k - 1.0) * between / within;
    let f = FisherSnedecor::new(k - 1.0, n - k).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(TestResult {
        test: TestKind::Levene,
        statistic: w,
        p_value: f.sf(w).clamp(0.0, 1.0),
    })
}

/// Average ranks (1-based) with ties sharing their mean rank.
fn ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (out, ties)
}

/// Two-sided Mann-Whitney U. The statistic is U of `a`; the p-value uses
/// the tie-corrected normal approximation with continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    require_size(&[a, b])?;
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let (r, ties) = ranks(&all);
    let r1: f64 = r[..a.len()].iter().sum();
    let u1 = r1 - n1 * (n1 + 1.0) / 2.0;
    let u2 = n1 * n2 - u1;
    let n = n1 + n2;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = (u1.max(u2) - n1 * n2 / 2.0 - 0.5) / var.sqrt();
        let normal = Normal::standard();
        (2.0 * normal.sf(z)).min(1.0)
    };
    Ok(TestResult {
        test: TestKind::MannWhitneyU,
        statistic: u1,
        p_value: p,
    })
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // series converges too slowly here and the value is 1 to double precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov with the asymptotic p-value `Q(√(nm/(n+m))·D)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    require_size(&[a, b])?;
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (n, m) = (xa.len(), xb.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xa[i].min(xb[j]);
        while i < n && xa[i] == x {
            i += 1;
        }
        while j < m && xb[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = (n * m) as f64 / (n + m) as f64;
    Ok(TestResult {
        test: TestKind::KsTwoSample,
        statistic: d,
        p_value: kolmogorov_sf(en.sqrt() * d),
    })
}
