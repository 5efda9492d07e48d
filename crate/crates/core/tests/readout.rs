use anisonet::protocol::ReadoutSource;
use anisonet::readout::{elastic_net_objective, fit_elastic_net, fit_ols, nrmse, savgol_smooth, ElasticNetConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn standardize(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mut z = x.clone();
    let mut scales = Vec::new();
    for mut c in z.column_iter_mut() {
        let m = c.mean();
        c.add_scalar_mut(-m);
        let s = (c.norm_squared() / n).sqrt();
        c /= s;
        scales.push(s);
    }
    (z, scales)
}

/// Best objective over all sign patterns, each solved in closed form.
fn oracle(z: &DMatrix<f64>, y: &DVector<f64>, cfg: &ElasticNetConfig) -> f64 {
    let (n, p) = (z.nrows() as f64, z.ncols());
    let l1 = cfg.alpha * cfg.l1_ratio;
    let l2 = cfg.alpha * (1.0 - cfg.l1_ratio);
    let mut best = elastic_net_objective(z, y, &DVector::zeros(p), cfg);
    for code in 0..3usize.pow(p as u32) {
        let signs: Vec<f64> = (0..p).map(|j| (code / 3usize.pow(j as u32) % 3) as f64 - 1.0).collect();
        let act: Vec<usize> = (0..p).filter(|&j| signs[j] != 0.0).collect();
        if act.is_empty() {
            continue;
        }
        let za = z.select_columns(&act);
        let h = za.transpose() * &za / n + DMatrix::identity(act.len(), act.len()) * l2;
        let rhs = za.transpose() * y / n - DVector::from_iterator(act.len(), act.iter().map(|&j| l1 * signs[j]));
        let Some(b) = h.lu().solve(&rhs) else { continue };
        if act.iter().enumerate().any(|(a, &j)| b[a] * signs[j] <= 0.0) {
            continue;
        }
        let mut beta = DVector::zeros(p);
        for (a, &j) in act.iter().enumerate() {
            beta[j] = b[a];
        }
        best = best.min(elastic_net_objective(z, y, &beta, cfg));
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enet_reaches_sign_pattern_optimum(
        data in prop::collection::vec(-1.0f64..1.0, 40 * 4),
        w in prop::collection::vec(-2.0f64..2.0, 3),
        alpha in 0.001f64..0.5,
        l1_ratio in 0.0f64..=1.0,
    ) {
        let x = DMatrix::from_fn(40, 3, |i, j| data[i * 4 + j] + if j == 2 { 0.7 * data[i * 4] } else { 0.0 });
        let y = DVector::from_fn(40, |i, _| (0..3).map(|j| w[j] * x[(i, j)]).sum::<f64>() + 0.3 * data[i * 4 + 3]);
        let cfg = ElasticNetConfig { alpha, l1_ratio, ..ElasticNetConfig::default() };
        let (z, scales) = standardize(&x);
        let yc = y.add_scalar(-y.mean());
        let m = fit_elastic_net(&x, &DMatrix::from_column_slice(40, 1, y.as_slice()), &cfg, ReadoutSource::Pooling).unwrap();
        prop_assert!(m.converged);
        prop_assert!(m.kkt_residual <= cfg.tol);
        let beta = DVector::from_fn(3, |j, _| m.weights[(j, 0)] * scales[j]);
        let gap = elastic_net_objective(&z, &yc, &beta, &cfg) - oracle(&z, &yc, &cfg);
        prop_assert!(gap.abs() <= 1e-6, "gap {}", gap);
    }

    #[test]
    fn ols_residual_is_orthogonal_to_features(
        data in prop::collection::vec(-5.0f64..5.0, 30 * 6),
    ) {
        let x = DMatrix::from_fn(30, 4, |i, j| data[i * 6 + j]);
        let y = DMatrix::from_fn(30, 2, |i, d| data[i * 6 + 4 + d]);
        let m = fit_ols(&x, &y, ReadoutSource::Excitatory).unwrap();
        let r = &y - m.predict(&x).unwrap();
        prop_assert!((x.transpose() * &r).amax() < 1e-8);
        for d in 0..2 {
            prop_assert!(r.column(d).sum().abs() < 1e-8);
        }
    }

    #[test]
    fn nrmse_is_scale_and_shift_invariant(
        t in prop::collection::vec(-3.0f64..3.0, 20 * 3),
        p in prop::collection::vec(-3.0f64..3.0, 20 * 3),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let target = DMatrix::from_row_slice(20, 3, &t);
        let pred = DMatrix::from_row_slice(20, 3, &p);
        prop_assume!((0..3).all(|d| {
            let c = target.column(d);
            c.max() - c.min() > 1e-3
        }));
        let (_, a) = nrmse(&pred, &target).unwrap();
        let (_, b) = nrmse(&(pred.add_scalar(shift) * scale), &(target.add_scalar(shift) * scale)).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
        let (_, zero) = nrmse(&target, &target).unwrap();
        prop_assert_eq!(zero, 0.0);
    }

    #[test]
    fn savgol_preserves_lines_and_constants(
        a in -10.0f64..10.0,
        b in -1.0f64..1.0,
        n in 21usize..120,
    ) {
        let line: Vec<f64> = (0..n).map(|i| a + b * i as f64).collect();
        let s = savgol_smooth(&line, 21, 1).unwrap();
        for (u, v) in s.iter().zip(&line) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }
}

#[test]
fn enet_matches_ols_without_penalty() {
    let x = DMatrix::from_fn(90, 5, |i, j| ((i * 7 + j * 13) % 17) as f64 + (j as f64) * (i as f64).sin());
    let y = DMatrix::from_fn(90, 3, |i, d| x[(i, d)] * 0.5 - x[(i, 4)] + (i as f64 * 0.3).cos());
    let cfg = ElasticNetConfig {
        alpha: 0.0,
        ..ElasticNetConfig::default()
    };
    let e = fit_elastic_net(&x, &y, &cfg, ReadoutSource::Excitatory).unwrap();
    let o = fit_ols(&x, &y, ReadoutSource::Excitatory).unwrap();
    assert!((&e.weights - &o.weights).amax() <= 1e-6);
    assert!((&e.predict(&x).unwrap() - o.predict(&x).unwrap()).amax() <= 1e-6);
}
