//! End-to-end drivers shared by the command-line tool and the acceptance
//! suite: run the trial protocol on a network, summarize its stability, and
//! train/evaluate trajectory readouts.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{NetworkConfig, NetworkKind, PoolingMode};
use crate::connectome::{build_network, Network};
use crate::error::{Error, Result};
use crate::neurocore::SynapseTable;
use crate::protocol::{
    bin_raster, make_leave_one_out, run_trial, run_trials, write_binned, ReadoutSource, TrialPlan, TrialSet,
};
use crate::readout::{run_task_batch, ElasticNetConfig, Method, TaskKind, TaskOutcome, TaskSpec};
use crate::stats::{
    group_rates, levene, mean, neuron_fano, pairwise_differences, pc1_statistics, pca_project, population_fano,
    rate_curve, window_rate, Pc1Stats, PairwiseDifferences, TestResult,
};
use crate::trajectories::{normalize, write_xyz_csv, Normalization, Trajectory, RATE_HZ};

/// Steps at which pairwise differences are compared for variance growth.
pub const LEVENE_STEPS: [usize; 3] = [10, 100, 190];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub kind: NetworkKind,
    /// Excitatory rate over steps 100..215, averaged over trials.
    pub plateau_rate: f64,
    /// Excitatory rate over steps 1..50, averaged over trials.
    pub early_rate: f64,
    /// Excitatory rate per step, averaged over trials.
    pub rate_curve: Vec<f64>,
    /// Per 10×10 block of the excitatory sheet, averaged over trials.
    pub group_rates: Vec<f64>,
    /// Trials whose excitatory activity lasts to the final step.
    pub sustained_trials: usize,
    pub neuron_fano: f64,
    pub population_fano: f64,
    pub pairwise_mean: Vec<f64>,
    pub pairwise_std: Vec<f64>,
    /// Pairwise differences at the first vs last of [`LEVENE_STEPS`].
    pub levene_first_last: TestResult,
    pub levene_three: TestResult,
    pub variance_first: f64,
    pub variance_last: f64,
    pub explained_ratio: Vec<f64>,
    pub pc1: Pc1Stats,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub network: Network,
    pub trials: TrialSet,
    pub report: StabilityReport,
    /// Per-trial projections on the first two components of the binned excitatory activity.
    pub projections: Vec<DMatrix<f64>>,
}

pub fn run_experiment(cfg: &NetworkConfig, kind: NetworkKind) -> Result<Experiment> {
    let network = build_network(cfg, kind)?;
    let plan = TrialPlan::leave_one_out(&network.connectome.input_patch);
    let trials = run_trials(&network.connectome, &cfg.neuron, &plan)?;
    let (report, projections) = analyse(&network, &trials, kind)?;
    Ok(Experiment {
        network,
        trials,
        report,
        projections,
    })
}

pub fn analyse(network: &Network, trials: &TrialSet, kind: NetworkKind) -> Result<(StabilityReport, Vec<DMatrix<f64>>)> {
    let grid = network.connectome.grid;
    let exc: Vec<_> = (0..trials.trials()).map(|t| trials.excitatory(t)).collect();
    let steps = exc[0].steps();
    if steps < 215 {
        return Err(Error::config("protocol.record_steps", "analysis needs at least 215 steps"));
    }
    let n = exc.len() as f64;
    let plateau_rate = exc.iter().map(|r| window_rate(r, 100..215)).sum::<f64>() / n;
    let early_rate = exc.iter().map(|r| window_rate(r, 1..50)).sum::<f64>() / n;
    let mut curve = vec![0.0; steps];
    let mut groups = vec![0.0; 36];
    let mut sustained_trials = 0;
    let mut nf = Vec::new();
    let mut pf = Vec::new();
    for r in &exc {
        for (c, v) in curve.iter_mut().zip(rate_curve(r)) {
            *c += v / n;
        }
        for (g, v) in groups.iter_mut().zip(group_rates(r, &grid, 6)?) {
            *g += v / n;
        }
        if r.count_at(steps - 1) > 0 {
            sustained_trials += 1;
        }
        // silent trials carry no rate information
        if let Ok(f) = neuron_fano(r) {
            nf.push(f);
        }
        if let Ok(f) = population_fano(r) {
            pf.push(f);
        }
    }
    let pd: PairwiseDifferences = pairwise_differences(&exc)?;
    let [s0, s1, s2] = LEVENE_STEPS;
    let levene_or_nan = |groups: &[&[f64]]| {
        levene(groups).unwrap_or(TestResult {
            test: crate::stats::TestKind::Levene,
            statistic: f64::NAN,
            p_value: f64::NAN,
        })
    };
    let levene_first_last = levene_or_nan(&[pd.at_step(s0), pd.at_step(s2)]);
    let levene_three = levene_or_nan(&[pd.at_step(s0), pd.at_step(s1), pd.at_step(s2)]);
    let var = |x: &[f64]| crate::stats::std_pop(x).powi(2);

    let feats = trials.all_features(ReadoutSource::Excitatory, PoolingMode::Spiking)?;
    let (pca, projections) = pca_project(&feats, 2)?;
    let pc1: Vec<Vec<f64>> = projections.iter().map(|p| p.column(0).iter().copied().collect()).collect();
    let report = StabilityReport {
        kind,
        plateau_rate,
        early_rate,
        rate_curve: curve,
        group_rates: groups,
        sustained_trials,
        neuron_fano: if nf.is_empty() { f64::NAN } else { mean(&nf) },
        population_fano: if pf.is_empty() { f64::NAN } else { mean(&pf) },
        pairwise_mean: pd.mean(),
        pairwise_std: pd.std(),
        levene_first_last,
        levene_three,
        variance_first: var(pd.at_step(s0)),
        variance_last: var(pd.at_step(s2)),
        explained_ratio: pca.explained_ratio(),
        pc1: pc1_statistics(&pc1)?,
    };
    Ok((report, projections))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub network: NetworkKind,
    pub task: TaskKind,
    pub trajectory: String,
    pub method: Method,
    pub test_trial: usize,
    pub nrmse: Vec<f64>,
    pub mean_nrmse: f64,
    pub mean_nrmse_raw: f64,
    pub converged: bool,
    pub rank_deficient: bool,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub struct TaskResult {
    pub row: TaskRow,
    pub outcome: TaskOutcome,
    /// Maps the z-scored outputs back to trajectory units.
    pub norm: Normalization,
}

/// Settings shared by every cell of a train/evaluate grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub test_trial: usize,
    pub pooling_mode: PoolingMode,
    pub enet: ElasticNetConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            test_trial: 0,
            pooling_mode: PoolingMode::Spiking,
            enet: ElasticNetConfig::default(),
        }
    }
}

/// One `(task, method)` cell over all trajectories. Targets are z-scored
/// per dimension before fitting; the error is range-normalized, so the
/// scores do not depend on that choice.
pub fn evaluate(
    trials: &TrialSet,
    kind: NetworkKind,
    trajectories: &[Trajectory],
    task: TaskKind,
    method: Method,
    settings: &EvalSettings,
) -> Result<Vec<TaskResult>> {
    let EvalSettings {
        test_trial,
        pooling_mode,
        ref enet,
    } = *settings;
    let features = trials.all_features(method.source(), pooling_mode)?;
    let spec = match task {
        TaskKind::Representation => TaskSpec::representation(trials.trials(), test_trial),
        TaskKind::Generalisation => TaskSpec::generalisation(trials.trials(), test_trial),
    };
    let (targets, norms): (Vec<Trajectory>, Vec<Normalization>) = trajectories.iter().map(normalize).unzip();
    let outcomes = run_task_batch(&features, &targets, &spec, method, enet)?;
    Ok(trajectories
        .iter()
        .zip(outcomes)
        .zip(norms)
        .map(|((t, o), norm)| {
            let row = TaskRow {
                network: kind,
                task,
                trajectory: t.name.clone(),
                method,
                test_trial,
                nrmse: o.nrmse.clone(),
                mean_nrmse: o.mean_nrmse,
                mean_nrmse_raw: o.nrmse_raw.iter().sum::<f64>() / o.nrmse_raw.len() as f64,
                converged: o.model.converged,
                rank_deficient: o.model.rank_deficient,
                kkt_residual: o.model.kkt_residual,
            };
            TaskResult { row, outcome: o, norm }
        })
        .collect())
}

/// The full grid for one network: every task, method and trajectory, in
/// that nesting order.
pub fn evaluate_grid(
    trials: &TrialSet,
    kind: NetworkKind,
    trajectories: &[Trajectory],
    tasks: &[TaskKind],
    methods: &[Method],
    settings: &EvalSettings,
) -> Result<Vec<TaskResult>> {
    let mut out = Vec::new();
    for &task in tasks {
        for &method in methods {
            out.extend(evaluate(trials, kind, trajectories, task, method, settings)?);
        }
    }
    Ok(out)
}

/// Raw and smoothed predictions of each result as `t,x,y,z` files in
/// trajectory units; returns the file names written.
pub fn write_predictions(dir: &Path, results: &[TaskResult]) -> Result<Vec<String>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for r in results {
        let stem = format!(
            "{}_{}_{}_{}",
            r.row.network.as_str(),
            r.row.task.as_str(),
            r.row.method.as_str(),
            r.row.trajectory
        );
        for (suffix, m) in [("raw", &r.outcome.prediction), ("smoothed", &r.outcome.smoothed)] {
            let samples: Vec<[f64; 3]> = (0..m.nrows())
                .map(|i| r.norm.invert([m[(i, 0)], m[(i, 1)], m[(i, 2)]]))
                .collect();
            let times: Vec<f64> = (0..samples.len()).map(|i| i as f64 / RATE_HZ).collect();
            let name = format!("{stem}_{suffix}.csv");
            write_xyz_csv(&dir.join(&name), &times, &samples)?;
            names.push(name);
        }
    }
    Ok(names)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    Ok(std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Writes events, binned readout features, curves, projections and the
/// metrics record of one experiment into `dir`; returns the file names.
pub fn write_experiment(
    dir: &Path,
    exp: &Experiment,
    source: ReadoutSource,
    pooling_mode: PoolingMode,
) -> Result<Vec<String>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    exp.trials.write_events(&dir.join("events.csv"))?;
    let binned = format!("binned_{}.csv", source.as_str());
    write_binned(&dir.join(&binned), &exp.trials.all_features(source, pooling_mode)?)?;

    let r = &exp.report;
    let p = dir.join("pairwise.csv");
    let mut out = create(&p)?;
    let io = |e| Error::io(&p, e);
    writeln!(out, "step,mean,std,rate").map_err(io)?;
    for t in 0..r.pairwise_mean.len() {
        writeln!(out, "{t},{},{},{}", r.pairwise_mean[t], r.pairwise_std[t], r.rate_curve[t]).map_err(io)?;
    }
    out.flush().map_err(io)?;

    let p = dir.join("pca.csv");
    let mut out = create(&p)?;
    let io = |e| Error::io(&p, e);
    writeln!(out, "trial,row,pc1,pc2").map_err(io)?;
    for (trial, m) in exp.projections.iter().enumerate() {
        for row in 0..m.nrows() {
            writeln!(out, "{trial},{row},{},{}", m[(row, 0)], m[(row, 1)]).map_err(io)?;
        }
    }
    out.flush().map_err(io)?;

    write_json(&dir.join("metrics.json"), r)?;
    Ok(["events.csv", &binned, "pairwise.csv", "pca.csv", "metrics.json"].map(String::from).to_vec())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Task table as CSV, one row per `(network, task, trajectory, method)`.
pub fn write_task_table(path: &Path, rows: &[TaskRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "network",
        "task",
        "trajectory",
        "method",
        "test_trial",
        "nrmse_x",
        "nrmse_y",
        "nrmse_z",
        "mean_nrmse",
        "mean_nrmse_raw",
        "converged",
        "rank_deficient",
    ])?;
    for r in rows {
        w.write_record([
            r.network.as_str().to_string(),
            r.task.as_str().to_string(),
            r.trajectory.clone(),
            r.method.as_str().to_string(),
            r.test_trial.to_string(),
            r.nrmse[0].to_string(),
            r.nrmse[1].to_string(),
            r.nrmse[2].to_string(),
            r.mean_nrmse.to_string(),
            r.mean_nrmse_raw.to_string(),
            r.converged.to_string(),
            r.rank_deficient.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Wall-clock budget for one trial: the movement it drives lasts 2 s.
pub const REALTIME_BUDGET_S: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub kind: NetworkKind,
    pub source: ReadoutSource,
    pub trials: usize,
    pub steps: usize,
    pub seconds_per_trial: f64,
    pub steps_per_second: f64,
    /// `seconds_per_trial / REALTIME_BUDGET_S`; below 1 is faster than real time.
    pub realtime_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub budget_seconds: f64,
    pub entries: Vec<BenchEntry>,
}

impl BenchReport {
    pub fn all_within_budget(&self) -> bool {
        self.entries.iter().all(|e| e.seconds_per_trial < self.budget_seconds)
    }

    /// Slowest over fastest network kind per readout source.
    pub fn kind_spread(&self) -> f64 {
        [ReadoutSource::Pooling, ReadoutSource::Excitatory]
            .iter()
            .filter_map(|&s| {
                let t: Vec<f64> = self.entries.iter().filter(|e| e.source == s).map(|e| e.seconds_per_trial).collect();
                let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = t.iter().copied().fold(0.0, f64::max);
                (t.len() > 1).then(|| hi / lo)
            })
            .fold(1.0, f64::max)
    }
}

/// Times single-threaded trials of `steps` steps on each kind, including the
/// sliding-window readout of the chosen source. Trials cycle through the
/// leave-one-out patterns.
pub fn bench(cfg: &NetworkConfig, kinds: &[NetworkKind], trials: usize, steps: usize) -> Result<BenchReport> {
    if steps == 0 || trials == 0 {
        return Err(Error::config("bench.steps", "horizon and trial count must be positive"));
    }
    let bin = TrialPlan::leave_one_out(&[0]).bin_width;
    let mut entries = Vec::new();
    for &kind in kinds {
        let network = build_network(cfg, kind)?;
        let c = &network.connectome;
        let table = SynapseTable::new(c, &cfg.neuron);
        let patterns = make_leave_one_out(&c.input_patch);
        for source in [ReadoutSource::Pooling, ReadoutSource::Excitatory] {
            let cols = match source {
                ReadoutSource::Pooling => c.pool_offset()..c.pool_offset() + c.pool_count(),
                ReadoutSource::Excitatory => 0..c.exc_count(),
            };
            let one = |t: usize| -> Result<()> {
                let raster = run_trial(&table, &cfg.neuron, &patterns[t % patterns.len()], steps);
                let units = raster.select_neurons(cols.clone());
                let samples = steps.saturating_sub(bin) + 1;
                std::hint::black_box(bin_raster(&units, 0, bin.min(steps), samples)?);
                Ok(())
            };
            // untimed warm-up
            one(0)?;
            let start = std::time::Instant::now();
            for t in 0..trials {
                one(t)?;
            }
            let per = start.elapsed().as_secs_f64() / trials as f64;
            entries.push(BenchEntry {
                kind,
                source,
                trials,
                steps,
                seconds_per_trial: per,
                steps_per_second: steps as f64 / per,
                realtime_ratio: per / REALTIME_BUDGET_S,
            });
        }
    }
    Ok(BenchReport {
        budget_seconds: REALTIME_BUDGET_S,
        entries,
    })
}
