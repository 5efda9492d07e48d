//! Linear trajectory readouts: least squares, elastic net, Savitzky-Golay
//! smoothing and range-normalized error.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::ReadoutSource;
use crate::trajectories::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    pub source: ReadoutSource,
    /// One per output dimension.
    pub intercept: Vec<f64>,
    /// `features × outputs`
    pub weights: DMatrix<f64>,
    /// Least squares only: the centred design had rank below its width.
    pub rank_deficient: bool,
    /// Elastic net only: every output reached tolerance.
    pub converged: bool,
    /// Largest KKT violation over all coefficients (elastic net), else 0.
    pub kkt_residual: f64,
}

impl ReadoutModel {
    pub fn predict(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if features.ncols() != self.weights.nrows() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.weights.nrows(),
                features.ncols()
            )));
        }
        let mut out = features * &self.weights;
        for (d, mut c) in out.column_iter_mut().enumerate() {
            c.add_scalar_mut(self.intercept[d]);
        }
        Ok(out)
    }

    /// CSV `source,output,unit,value`; the intercept row has unit `intercept`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["source", "output", "unit", "value"])?;
        let src = self.source.as_str();
        for d in 0..self.intercept.len() {
            w.write_record([src, &d.to_string(), "intercept", &self.intercept[d].to_string()])?;
            for u in 0..self.weights.nrows() {
                w.write_record([src, &d.to_string(), &u.to_string(), &self.weights[(u, d)].to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn check_xy(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!("{} feature rows vs {} target rows", x.nrows(), y.nrows())));
    }
    if x.nrows() < 2 || y.ncols() == 0 {
        return Err(Error::Shape("empty regression problem".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite regression input".into()));
    }
    Ok(())
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.mean()))
}

fn centered(m: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut c = m.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    c
}

/// Minimum-norm least squares `min ‖a·x − b‖` through the eigendecomposition
/// of `aᵀa`, followed by one step of iterative refinement. Directions with
/// eigenvalue below `rcond · λ_max` are dropped; returns the solution and
/// the numerical rank.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DMatrix<f64>, rcond: f64) -> (DMatrix<f64>, usize) {
    let p = a.ncols();
    let gram = a.transpose() * a;
    let eig = SymmetricEigen::new(gram);
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if lmax <= 0.0 {
        return (DMatrix::zeros(p, b.ncols()), 0);
    }
    let cut = lmax * rcond;
    let inv = DVector::from_iterator(p, eig.eigenvalues.iter().map(|&l| if l > cut { 1.0 / l } else { 0.0 }));
    let rank = inv.iter().filter(|&&v| v > 0.0).count();
    let q = &eig.eigenvectors;
    let solve = |rhs: &DMatrix<f64>| -> DMatrix<f64> {
        let mut c = q.transpose() * (a.transpose() * rhs);
        for (i, mut row) in c.row_iter_mut().enumerate() {
            row *= inv[i];
        }
        q * c
    };
    let mut x = solve(b);
    let r = b - a * &x;
    x += solve(&r);
    (x, rank)
}

/// Relative eigenvalue cut-off for [`lstsq_min_norm`] in the readouts.
const RCOND: f64 = 1e-12;

/// Least squares with an unpenalized intercept. Features and targets are
/// centred first; rank-deficient designs get the minimum-norm solution and
/// are flagged.
pub fn fit_ols(x: &DMatrix<f64>, y: &DMatrix<f64>, source: ReadoutSource) -> Result<ReadoutModel> {
    check_xy(x, y)?;
    let xm = column_means(x);
    let ym = column_means(y);
    let xc = centered(x, &xm);
    let yc = centered(y, &ym);
    let (weights, rank) = lstsq_min_norm(&xc, &yc, RCOND);
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("least-squares solution is not finite".into()));
    }
    let intercept = (0..y.ncols())
        .map(|d| ym[d] - xm.dot(&weights.column(d)))
        .collect();
    Ok(ReadoutModel {
        source,
        intercept,
        weights,
        rank_deficient: rank < x.ncols(),
        converged: true,
        kkt_residual: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticNetConfig {
    /// Overall penalty strength.
    pub alpha: f64,
    /// L1 share of the penalty.
    pub l1_ratio: f64,
    pub max_iter: usize,
    /// Stop once an iteration moves no standardized coefficient by this much
    /// and the KKT violation is below it as well.
    pub tol: f64,
}

impl Default for ElasticNetConfig {
    fn default() -> Self {
        ElasticNetConfig {
            alpha: 0.001,
            l1_ratio: 0.05,
            max_iter: 10_000,
            tol: 1e-6,
        }
    }
}

impl ElasticNetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("elastic_net.alpha", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(Error::config("elastic_net.l1_ratio", "must lie in [0, 1]"));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::config("elastic_net.tol", "tol and max_iter must be positive"));
        }
        Ok(())
    }
}

/// Elastic-net objective on standardized features `z` and centred target `y`:
/// `‖y − zβ‖²/(2n) + α((1−λ)/2·‖β‖² + λ‖β‖₁)`.
pub fn elastic_net_objective(z: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, cfg: &ElasticNetConfig) -> f64 {
    let n = z.nrows() as f64;
    let r = y - z * beta;
    r.norm_squared() / (2.0 * n)
        + cfg.alpha * ((1.0 - cfg.l1_ratio) / 2.0 * beta.norm_squared() + cfg.l1_ratio * beta.lp_norm(1))
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Standardized design shared by every target fitted on the same features.
#[derive(Debug, Clone)]
pub struct StandardizedDesign {
    rows: usize,
    means: DVector<f64>,
    /// Population std per column; 0 marks a constant column.
    scales: Vec<f64>,
    /// Standardized columns, `rows × p`.
    z: DMatrix<f64>,
    /// `zᵀz / rows`
    gram: DMatrix<f64>,
}

impl StandardizedDesign {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() < 2 || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("design needs 2+ rows of finite values".into()));
        }
        let n = x.nrows() as f64;
        let means = column_means(x);
        let mut z = centered(x, &means);
        let mut scales = vec![0.0; x.ncols()];
        for (j, mut c) in z.column_iter_mut().enumerate() {
            let s = (c.norm_squared() / n).sqrt();
            if s > 0.0 {
                c /= s;
                scales[j] = s;
            } else {
                c.fill(0.0);
            }
        }
        let gram = parallel_gram(&z) / n;
        Ok(StandardizedDesign {
            rows: x.nrows(),
            means,
            scales,
            z,
            gram,
        })
    }

    pub fn features(&self) -> usize {
        self.scales.len()
    }

    /// Fits every column of `y`; coefficients are returned on the original scale.
    pub fn fit(&self, y: &DMatrix<f64>, cfg: &ElasticNetConfig, source: ReadoutSource) -> Result<ReadoutModel> {
        Ok(self.fit_many(std::slice::from_ref(y), cfg, source)?.remove(0))
    }

    /// One model per target matrix, all sharing a single factorization.
    pub fn fit_many(
        &self,
        ys: &[DMatrix<f64>],
        cfg: &ElasticNetConfig,
        source: ReadoutSource,
    ) -> Result<Vec<ReadoutModel>> {
        cfg.validate()?;
        if ys.iter().any(|y| y.nrows() != self.rows || y.iter().any(|v| !v.is_finite())) {
            return Err(Error::Shape(format!("targets must be {} finite rows", self.rows)));
        }
        let n = self.rows as f64;
        let p = self.features();
        let cols: usize = ys.iter().map(|y| y.ncols()).sum();
        let mut centred = DMatrix::zeros(self.rows, cols);
        let mut ymeans = Vec::with_capacity(cols);
        for (col, yc) in ys.iter().flat_map(|y| y.column_iter()).enumerate() {
            let ym = yc.mean();
            centred.set_column(col, &yc.add_scalar(-ym));
            ymeans.push(ym);
        }
        let c = self.z.transpose() * centred / n;
        let mut fits = EnetSolver::new(&self.gram, cfg).solve_many(&c).into_iter();
        let mut models = Vec::with_capacity(ys.len());
        let mut col = 0;
        for y in ys {
            let mut weights = DMatrix::zeros(p, y.ncols());
            let mut intercept = Vec::with_capacity(y.ncols());
            let mut converged = true;
            let mut kkt_residual: f64 = 0.0;
            for d in 0..y.ncols() {
                let (beta, ok, kkt) = fits.next().expect("one fit per column");
                converged &= ok;
                kkt_residual = kkt_residual.max(kkt);
                let mut b0 = ymeans[col];
                for j in 0..p {
                    if self.scales[j] > 0.0 {
                        let w = beta[j] / self.scales[j];
                        weights[(j, d)] = w;
                        b0 -= w * self.means[j];
                    }
                }
                intercept.push(b0);
                col += 1;
            }
            models.push(ReadoutModel {
                source,
                intercept,
                weights,
                rank_deficient: false,
                converged,
                kkt_residual,
            });
        }
        Ok(models)
    }
}

/// `zᵀz`, computed in column blocks on the rayon pool.
fn parallel_gram(z: &DMatrix<f64>) -> DMatrix<f64> {
    const BLOCK: usize = 64;
    let p = z.ncols();
    let zt = z.transpose();
    let blocks: Vec<(usize, DMatrix<f64>)> = (0..p)
        .step_by(BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|j| {
            let w = BLOCK.min(p - j);
            (j, &zt * z.columns(j, w))
        })
        .collect();
    let mut g = DMatrix::zeros(p, p);
    for (j, b) in blocks {
        g.columns_mut(j, b.ncols()).copy_from(&b);
    }
    g
}

/// Elastic net on precomputed `gram = zᵀz/n` and `c = zᵀy/n` for
/// standardized `z` and centred `y`. Zero diagonal entries mark constant
/// columns, which stay at 0. Returns `(β, converged, kkt)`.
pub fn elastic_net_gram(gram: &DMatrix<f64>, c: &DVector<f64>, cfg: &ElasticNetConfig) -> (DVector<f64>, bool, f64) {
    EnetSolver::new(gram, cfg).solve(c)
}

/// Shares one factorization of the penalized Gram matrix across targets.
///
/// The solver is ADMM on the split `β = z` with the L1 term on `z`: the
/// smooth step is a product with a precomputed inverse and the L1 step a
/// soft threshold. Correlated spike counts make the Gram matrix badly
/// conditioned, where cyclic coordinate descent crawls; it is kept only as
/// a fallback for targets ADMM leaves unconverged.
pub struct EnetSolver<'a> {
    gram: &'a DMatrix<f64>,
    cfg: ElasticNetConfig,
    /// Non-constant columns.
    support: Vec<usize>,
    /// `G + l2·I` restricted to the support.
    h: DMatrix<f64>,
    /// `(h + ρ·I)⁻¹`, absent if the factorization fails.
    k: Option<DMatrix<f64>>,
    rho: f64,
}

impl<'a> EnetSolver<'a> {
    pub fn new(gram: &'a DMatrix<f64>, cfg: &ElasticNetConfig) -> Self {
        let support: Vec<usize> = (0..gram.nrows()).filter(|&j| gram[(j, j)] > 0.0).collect();
        let l2 = cfg.alpha * (1.0 - cfg.l1_ratio);
        let s = support.len();
        let h = DMatrix::from_fn(s, s, |a, b| {
            gram[(support[a], support[b])] + if a == b { l2 } else { 0.0 }
        });
        // geometric mean of the smallest guaranteed curvature and the typical one
        let typical = if s > 0 { h.trace() / s as f64 } else { 1.0 };
        let rho = (l2.max(1e-6) * typical).sqrt();
        let k = spd_inverse(&(&h + DMatrix::identity(s, s) * rho));
        EnetSolver {
            gram,
            cfg: *cfg,
            support,
            h,
            k,
            rho,
        }
    }

    pub fn solve(&self, c: &DVector<f64>) -> (DVector<f64>, bool, f64) {
        let cm = DMatrix::from_column_slice(c.len(), 1, c.as_slice());
        self.solve_many(&cm).pop().expect("one column in, one out")
    }

    /// One fit per column of `c`, iterated jointly.
    pub fn solve_many(&self, c: &DMatrix<f64>) -> Vec<(DVector<f64>, bool, f64)> {
        let p = c.nrows();
        let mut starts = vec![DVector::zeros(p); c.ncols()];
        let mut done = vec![false; c.ncols()];
        if let Some(k) = &self.k {
            let cs = c.select_rows(&self.support);
            let (z, ok) = self.admm(k, &cs);
            for (col, start) in starts.iter_mut().enumerate() {
                for (a, &j) in self.support.iter().enumerate() {
                    start[j] = z[(a, col)];
                }
                done[col] = ok[col];
            }
        }
        starts
            .into_iter()
            .enumerate()
            .map(|(col, start)| {
                let ccol = c.column(col).into_owned();
                if done[col] {
                    let v = kkt_violation(self.gram, &ccol, &start, &self.cfg);
                    if v <= self.cfg.tol {
                        return (start, true, v);
                    }
                }
                coordinate_descent(self.gram, &ccol, &self.cfg, start)
            })
            .collect()
    }

    /// Over-relaxed ADMM on the support. A column is done once an iteration
    /// moves no coefficient by `tol` or more and its KKT violation is at most `tol`.
    fn admm(&self, k: &DMatrix<f64>, c: &DMatrix<f64>) -> (DMatrix<f64>, Vec<bool>) {
        const RELAX: f64 = 1.6;
        const CHECK_EVERY: usize = 10;
        let l1 = self.cfg.alpha * self.cfg.l1_ratio;
        let rho = self.rho;
        let (s, m) = c.shape();
        let mut z = DMatrix::zeros(s, m);
        let mut u = DMatrix::zeros(s, m);
        let mut done = vec![false; m];
        for it in 1..=self.cfg.max_iter {
            let x = k * (c + (&z - &u) * rho);
            let xh = x * RELAX - &z * (RELAX - 1.0);
            let mut step = vec![0.0f64; m];
            for col in 0..m {
                if done[col] {
                    continue;
                }
                for j in 0..s {
                    let v = xh[(j, col)] + u[(j, col)];
                    let zn = soft_threshold(v, l1 / rho);
                    u[(j, col)] = v - zn;
                    step[col] = step[col].max((zn - z[(j, col)]).abs());
                    z[(j, col)] = zn;
                }
            }
            if it % CHECK_EVERY == 0 {
                let g = &self.h * &z - c;
                for col in 0..m {
                    if done[col] || step[col] >= self.cfg.tol {
                        continue;
                    }
                    let worst = (0..s)
                        .map(|j| {
                            let (b, gj) = (z[(j, col)], g[(j, col)]);
                            if b == 0.0 {
                                (gj.abs() - l1).max(0.0)
                            } else {
                                (gj + l1 * b.signum()).abs()
                            }
                        })
                        .fold(0.0, f64::max);
                    done[col] = worst <= self.cfg.tol;
                }
                if done.iter().all(|&d| d) {
                    break;
                }
            }
        }
        (z, done)
    }
}

/// Largest KKT violation of `β` for the scaled objective.
fn kkt_violation(gram: &DMatrix<f64>, c: &DVector<f64>, beta: &DVector<f64>, cfg: &ElasticNetConfig) -> f64 {
    let l1 = cfg.alpha * cfg.l1_ratio;
    let l2 = cfg.alpha * (1.0 - cfg.l1_ratio);
    let g = c - gram * beta;
    let mut worst: f64 = 0.0;
    for j in 0..c.len() {
        if gram[(j, j)] == 0.0 {
            continue;
        }
        let grad = g[j] - l2 * beta[j];
        let v = if beta[j] == 0.0 {
            (grad.abs() - l1).max(0.0)
        } else {
            (grad - l1 * beta[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Cyclic coordinate descent with covariance updates from `beta`. Converged
/// once a full sweep moves no coefficient by `tol` or more and the largest
/// KKT violation is at most `tol`.
fn coordinate_descent(
    gram: &DMatrix<f64>,
    c: &DVector<f64>,
    cfg: &ElasticNetConfig,
    mut beta: DVector<f64>,
) -> (DVector<f64>, bool, f64) {
    let p = c.len();
    let l1 = cfg.alpha * cfg.l1_ratio;
    let l2 = cfg.alpha * (1.0 - cfg.l1_ratio);
    // g = c − Gβ, the smooth part's negative gradient without the ridge term
    let mut g = c - gram * &beta;
    for _ in 0..cfg.max_iter {
        let mut max_step: f64 = 0.0;
        for j in 0..p {
            let gjj = gram[(j, j)];
            if gjj == 0.0 {
                continue;
            }
            let old = beta[j];
            let new = soft_threshold(g[j] + gjj * old, l1) / (gjj + l2);
            if new != old {
                g.axpy(old - new, &gram.column(j), 1.0);
                beta[j] = new;
                max_step = max_step.max((new - old).abs());
            }
        }
        if max_step < cfg.tol {
            let v = kkt_violation(gram, c, &beta, cfg);
            if v <= cfg.tol {
                return (beta, true, v);
            }
        }
    }
    let v = kkt_violation(gram, c, &beta, cfg);
    (beta, false, v)
}

/// Inverse of a symmetric positive definite matrix through its Cholesky
/// factor, with the triangular inverse done blockwise so the work lands in
/// matrix products.
fn spd_inverse(h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let l = h.clone().cholesky()?.l();
    let li = lower_inverse(&l);
    let k = li.transpose() * &li;
    k.iter().all(|v| v.is_finite()).then_some(k)
}

fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    if n <= 96 {
        let mut eye = DMatrix::identity(n, n);
        l.solve_lower_triangular_mut(&mut eye);
        return eye;
    }
    let m = n / 2;
    let a = lower_inverse(&l.view((0, 0), (m, m)).into_owned());
    let c = lower_inverse(&l.view((m, m), (n - m, n - m)).into_owned());
    let off = -(&c * (l.view((m, 0), (n - m, m)) * &a));
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((0, 0), (m, m)).copy_from(&a);
    out.view_mut((m, m), (n - m, n - m)).copy_from(&c);
    out.view_mut((m, 0), (n - m, m)).copy_from(&off);
    out
}

/// Per-dimension elastic net with standardized features and an
/// unpenalized intercept; coefficients are returned on the original scale.
pub fn fit_elastic_net(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &ElasticNetConfig,
    source: ReadoutSource,
) -> Result<ReadoutModel> {
    check_xy(x, y)?;
    StandardizedDesign::new(x)?.fit(y, cfg, source)
}

/// Weights `w` such that `w · ys` is the value at `at` of the least-squares
/// polynomial of `order` through `(xs, ys)`.
fn poly_eval_weights(xs: &[f64], order: usize, at: f64) -> Result<Vec<f64>> {
    let v = DMatrix::from_fn(xs.len(), order + 1, |i, k| (xs[i] - at).powi(k as i32));
    let chol = (v.transpose() * &v)
        .cholesky()
        .ok_or_else(|| Error::Numerical("singular Savitzky-Golay design".into()))?;
    let mut e0 = DVector::zeros(order + 1);
    e0[0] = 1.0;
    Ok((v * chol.solve(&e0)).iter().copied().collect())
}

fn dot(w: &[f64], y: &[f64]) -> f64 {
    w.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Savitzky-Golay smoothing. Interior points take the centre value of the
/// local least-squares polynomial; the first and last `window / 2` points
/// are evaluated on the polynomial fitted to the first (last) full window.
pub fn savgol_smooth(series: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    if window.is_multiple_of(2) || window <= order {
        return Err(Error::config("savgol.window", "must be odd and larger than the order"));
    }
    let n = series.len();
    if n < window {
        return Err(Error::Shape(format!("series of {n} shorter than window {window}")));
    }
    let h = window / 2;
    let xs: Vec<f64> = (0..window).map(|i| i as f64).collect();
    let centre = poly_eval_weights(&xs, order, h as f64)?;
    let mut out = vec![0.0; n];
    for i in h..n - h {
        out[i] = dot(&centre, &series[i - h..=i + h]);
    }
    for i in 0..h {
        out[i] = dot(&poly_eval_weights(&xs, order, i as f64)?, &series[..window]);
        let w = poly_eval_weights(&xs, order, (window - 1 - i) as f64)?;
        out[n - 1 - i] = dot(&w, &series[n - window..]);
    }
    Ok(out)
}

/// RMSE over target range, per dimension, and their mean.
pub fn nrmse(prediction: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    if prediction.shape() != target.shape() || target.nrows() == 0 {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    let mut per = Vec::with_capacity(target.ncols());
    for d in 0..target.ncols() {
        let t = target.column(d);
        let range = t.max() - t.min();
        if !(range > 0.0) {
            return Err(Error::Numerical(format!("target dimension {d} is constant")));
        }
        let mse = (prediction.column(d) - t).norm_squared() / t.len() as f64;
        per.push(mse.sqrt() / range);
    }
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((per, mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Representation,
    Generalisation,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Representation => "representation",
            TaskKind::Generalisation => "generalisation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub train_trials: Vec<usize>,
    pub test_trial: usize,
}

impl TaskSpec {
    /// Train on all `trials`, test on one of them.
    pub fn representation(trials: usize, test_trial: usize) -> Self {
        TaskSpec {
            kind: TaskKind::Representation,
            train_trials: (0..trials).collect(),
            test_trial,
        }
    }

    /// Train on every trial but `test_trial`.
    pub fn generalisation(trials: usize, test_trial: usize) -> Self {
        TaskSpec {
            kind: TaskKind::Generalisation,
            train_trials: (0..trials).filter(|&t| t != test_trial).collect(),
            test_trial,
        }
    }

    pub fn validate(&self, trials: usize) -> Result<()> {
        if self.test_trial >= trials || self.train_trials.iter().any(|&t| t >= trials) {
            return Err(Error::config("task", "trial index out of range"));
        }
        let held_in = self.train_trials.contains(&self.test_trial);
        match self.kind {
            TaskKind::Representation if !held_in || self.train_trials.len() != trials => Err(Error::config(
                "task",
                "representation trains on every trial including the test trial",
            )),
            TaskKind::Generalisation if held_in || self.train_trials.len() + 1 != trials => Err(Error::config(
                "task",
                "generalisation trains on every trial except the test trial",
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    OlsPooling,
    ElasticnetExcitatory,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::OlsPooling => "ols-pooling",
            Method::ElasticnetExcitatory => "elasticnet-excitatory",
        }
    }

    pub fn source(self) -> ReadoutSource {
        match self {
            Method::OlsPooling => ReadoutSource::Pooling,
            Method::ElasticnetExcitatory => ReadoutSource::Excitatory,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub model: ReadoutModel,
    /// Raw and smoothed predictions, `samples × 3`.
    pub prediction: DMatrix<f64>,
    pub smoothed: DMatrix<f64>,
    pub nrmse_raw: Vec<f64>,
    pub nrmse: Vec<f64>,
    pub mean_nrmse: f64,
}

/// Smoothing used on predictions before scoring.
pub const SAVGOL_WINDOW: usize = 21;
pub const SAVGOL_ORDER: usize = 1;

/// `trajectory` as a `samples × 3` matrix.
pub fn trajectory_matrix(t: &Trajectory) -> DMatrix<f64> {
    DMatrix::from_fn(t.len(), 3, |i, d| t.samples[i][d])
}

/// Fits on the training trials' features (each paired with the same
/// target), predicts the test trial, smooths and scores it.
pub fn run_task(
    features: &[DMatrix<f64>],
    target: &Trajectory,
    task: &TaskSpec,
    method: Method,
    enet: &ElasticNetConfig,
) -> Result<TaskOutcome> {
    let mut out = run_task_batch(features, std::slice::from_ref(target), task, method, enet)?;
    Ok(out.remove(0))
}

/// [`run_task`] for several targets over one shared design.
pub fn run_task_batch(
    features: &[DMatrix<f64>],
    targets: &[Trajectory],
    task: &TaskSpec,
    method: Method,
    enet: &ElasticNetConfig,
) -> Result<Vec<TaskOutcome>> {
    task.validate(features.len())?;
    let rows = features[0].nrows();
    if features.iter().any(|f| f.nrows() != rows || f.ncols() != features[0].ncols()) {
        return Err(Error::Shape("feature matrices differ in shape".into()));
    }
    let m = task.train_trials.len();
    let mut x = DMatrix::zeros(rows * m, features[0].ncols());
    for (k, &t) in task.train_trials.iter().enumerate() {
        x.rows_mut(k * rows, rows).copy_from(&features[t]);
    }
    let ys = targets
        .iter()
        .map(|target| {
            let y1 = trajectory_matrix(target);
            if y1.nrows() != rows {
                return Err(Error::Shape(format!("target has {} rows, features {rows}", y1.nrows())));
            }
            let mut y = DMatrix::zeros(rows * m, 3);
            for k in 0..m {
                y.rows_mut(k * rows, rows).copy_from(&y1);
            }
            Ok((y1, y))
        })
        .collect::<Result<Vec<_>>>()?;
    let models = match method {
        Method::ElasticnetExcitatory => {
            let stacked: Vec<DMatrix<f64>> = ys.iter().map(|(_, y)| y.clone()).collect();
            StandardizedDesign::new(&x)?.fit_many(&stacked, enet, method.source())?
        }
        Method::OlsPooling => ys
            .iter()
            .map(|(_, y)| fit_ols(&x, y, method.source()))
            .collect::<Result<Vec<_>>>()?,
    };
    models
        .into_iter()
        .zip(&ys)
        .map(|(model, (y1, _))| score(model, &features[task.test_trial], y1))
        .collect()
}

fn score(model: ReadoutModel, test: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<TaskOutcome> {
    let prediction = model.predict(test)?;
    let mut smoothed = prediction.clone();
    for d in 0..prediction.ncols() {
        let col: Vec<f64> = prediction.column(d).iter().copied().collect();
        let s = savgol_smooth(&col, SAVGOL_WINDOW, SAVGOL_ORDER)?;
        smoothed.set_column(d, &DVector::from_vec(s));
    }
    let (nrmse_raw, _) = nrmse(&prediction, target)?;
    let (per, mean) = nrmse(&smoothed, target)?;
    Ok(TaskOutcome {
        model,
        prediction,
        smoothed,
        nrmse_raw,
        nrmse: per,
        mean_nrmse: mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn toy(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let x = DMatrix::from_fn(n, p, |_, _| nd.sample(&mut rng));
        let w = DMatrix::from_fn(p, 2, |i, d| (i as f64 + 1.0) * if d == 0 { 0.5 } else { -0.3 });
        let mut y = &x * &w;
        for mut c in y.column_iter_mut() {
            c.add_scalar_mut(2.0);
        }
        for v in y.iter_mut() {
            *v += 0.1 * nd.sample(&mut rng);
        }
        (x, y)
    }

    #[test]
    fn ols_exact_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let x = DMatrix::from_fn(40, 4, |_, _| nd.sample(&mut rng));
        let w = DMatrix::from_column_slice(4, 1, &[1.5, -2.0, 0.25, 3.0]);
        let y = (&x * &w).add_scalar(-0.7);
        let m = fit_ols(&x, &y, ReadoutSource::Pooling).unwrap();
        assert!((&m.weights - &w).amax() < 1e-8);
        assert!((m.intercept[0] + 0.7).abs() < 1e-8);
        assert!(!m.rank_deficient);
    }

    #[test]
    fn ols_constant_target() {
        let (x, _) = toy(30, 3, 2);
        let y = DMatrix::from_element(30, 1, 4.25);
        let m = fit_ols(&x, &y, ReadoutSource::Pooling).unwrap();
        assert!((m.intercept[0] - 4.25).abs() < 1e-12);
        assert!(m.weights.amax() < 1e-12);
    }

    #[test]
    fn ols_residual_orthogonal() {
        let (x, y) = toy(60, 5, 3);
        let m = fit_ols(&x, &y, ReadoutSource::Pooling).unwrap();
        let r = &y - m.predict(&x).unwrap();
        let mut design = DMatrix::from_element(60, 6, 1.0);
        design.columns_mut(1, 5).copy_from(&x);
        for d in 0..2 {
            let rc = r.column(d);
            let g = design.transpose() * rc;
            assert!(g.amax() <= 1e-6 * design.norm() * rc.norm());
        }
    }

    #[test]
    fn ols_duplicate_column_flagged() {
        let (x, y) = toy(50, 3, 4);
        let mut x2 = DMatrix::zeros(50, 4);
        x2.columns_mut(0, 3).copy_from(&x);
        x2.set_column(3, &x.column(0));
        let a = fit_ols(&x, &y, ReadoutSource::Pooling).unwrap();
        let b = fit_ols(&x2, &y, ReadoutSource::Pooling).unwrap();
        assert!(b.rank_deficient);
        let ra = (&y - a.predict(&x).unwrap()).norm();
        let rb = (&y - b.predict(&x2).unwrap()).norm();
        assert!(rb <= ra * (1.0 + 1e-12));
    }

    #[test]
    fn enet_zero_penalty_is_ols() {
        let (x, y) = toy(80, 4, 5);
        let cfg = ElasticNetConfig {
            alpha: 0.0,
            tol: 1e-12,
            max_iter: 100_000,
            ..Default::default()
        };
        let e = fit_elastic_net(&x, &y, &cfg, ReadoutSource::Excitatory).unwrap();
        let o = fit_ols(&x, &y, ReadoutSource::Excitatory).unwrap();
        assert!(e.converged);
        assert!((&e.weights - &o.weights).amax() < 1e-6);
        for d in 0..2 {
            assert!((e.intercept[d] - o.intercept[d]).abs() < 1e-6);
        }
    }

    #[test]
    fn admm_agrees_with_coordinate_descent() {
        // shared latent factors make the columns strongly correlated
        let (f, _) = toy(300, 5, 11);
        let (noise, _) = toy(300, 120, 12);
        let x = DMatrix::from_fn(300, 120, |i, j| f[(i, j % 5)] + 0.2 * noise[(i, j)]);
        let y = DVector::from_fn(300, |i, _| f[(i, 0)] - 2.0 * f[(i, 3)] + 0.3 * noise[(i, 7)]);
        let d = StandardizedDesign::new(&x).unwrap();
        let yc = y.add_scalar(-y.mean());
        let c = d.z.transpose() * &yc / 300.0;
        for (alpha, l1_ratio) in [(0.001, 0.05), (0.02, 0.5), (0.1, 0.95)] {
            let cfg = ElasticNetConfig {
                alpha,
                l1_ratio,
                tol: 1e-9,
                max_iter: 200_000,
            };
            let (a, ok_a, kkt_a) = EnetSolver::new(&d.gram, &cfg).solve(&c);
            let (b, ok_b, _) = coordinate_descent(&d.gram, &c, &cfg, DVector::zeros(120));
            assert!(ok_a && ok_b && kkt_a <= 1e-9);
            assert!((&a - &b).amax() < 1e-6, "alpha {alpha}: {}", (&a - &b).amax());
            let gap = elastic_net_objective(&d.z, &yc, &a, &cfg) - elastic_net_objective(&d.z, &yc, &b, &cfg);
            assert!(gap.abs() < 1e-10, "{gap}");
        }
    }

    #[test]
    fn enet_full_shrinkage() {
        let (x, y) = toy(50, 3, 6);
        let cfg = ElasticNetConfig {
            alpha: 1e6,
            l1_ratio: 1.0,
            ..Default::default()
        };
        let e = fit_elastic_net(&x, &y, &cfg, ReadoutSource::Excitatory).unwrap();
        assert_eq!(e.weights.amax(), 0.0);
        for d in 0..2 {
            assert!((e.intercept[d] - y.column(d).mean()).abs() < 1e-12);
        }
    }

    #[test]
    fn savgol_linear_and_average() {
        let lin: Vec<f64> = (0..200).map(|i| 0.3 * i as f64 - 7.0).collect();
        let s = savgol_smooth(&lin, 21, 1).unwrap();
        for (a, b) in s.iter().zip(&lin) {
            assert!((a - b).abs() < 1e-9);
        }
        let wav: Vec<f64> = (0..200).map(|i| ((i * i) % 17) as f64).collect();
        let s = savgol_smooth(&wav, 21, 1).unwrap();
        for i in 10..190 {
            let avg = wav[i - 10..=i + 10].iter().sum::<f64>() / 21.0;
            assert!((s[i] - avg).abs() < 1e-12);
        }
        let mut imp = vec![0.0; 200];
        imp[100] = 1.0;
        let s = savgol_smooth(&imp, 21, 1).unwrap();
        for (i, v) in s.iter().enumerate() {
            let want = if (90..=110).contains(&i) { 1.0 / 21.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-14, "{i}");
        }
    }

    #[test]
    fn savgol_rejects_even_window() {
        assert!(savgol_smooth(&[0.0; 50], 20, 1).is_err());
        assert!(savgol_smooth(&[0.0; 10], 21, 1).is_err());
    }

    #[test]
    fn nrmse_cases() {
        let t = DMatrix::from_fn(100, 3, |i, d| (i as f64 * 0.1 + d as f64).sin());
        assert_eq!(nrmse(&t, &t).unwrap().1, 0.0);
        let ranges: Vec<f64> = (0..3).map(|d| t.column(d).max() - t.column(d).min()).collect();
        let shifted = DMatrix::from_fn(100, 3, |i, d| t[(i, d)] + ranges[d]);
        assert!((nrmse(&shifted, &t).unwrap().1 - 1.0).abs() < 1e-12);
        // full periods of a sine: RMS 1/√2 over range 2
        let n = 1000;
        let s = DMatrix::from_fn(n, 1, |i, _| (2.0 * std::f64::consts::PI * 4.0 * i as f64 / n as f64).sin());
        let r = nrmse(&DMatrix::zeros(n, 1), &s).unwrap().1;
        assert!((r - 0.5f64.sqrt() / 2.0).abs() < 1e-3);
        assert!(nrmse(&t, &DMatrix::from_element(100, 3, 1.0)).is_err());
    }

    #[test]
    fn task_spec_rules() {
        TaskSpec::representation(25, 3).validate(25).unwrap();
        TaskSpec::generalisation(25, 3).validate(25).unwrap();
        let mut bad = TaskSpec::generalisation(25, 3);
        bad.train_trials.push(3);
        assert!(bad.validate(25).is_err());
    }
}
