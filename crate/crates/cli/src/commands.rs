use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anisonet::connectome::io::{write_connectome, write_landscape};
use anisonet::connectome::{build_network, Network};
use anisonet::neurocore::SpikeRaster;
use anisonet::pipeline::{
    analyse, bench, evaluate_grid, run_experiment, write_experiment, write_json, write_predictions, write_task_table,
    EvalSettings, TaskRow,
};
use anisonet::protocol::{read_events, TrialPlan, TrialSet};
use anisonet::readout::{Method, TaskKind};
use anisonet::trajectories::{builtin, load_csv, Trajectory};
use anisonet::{Error, NetworkKind, Result};
use serde::Serialize;

use crate::manifest::Manifest;
use crate::runconfig::RunConfig;

pub struct Ctx {
    pub root: PathBuf,
    pub dry_run: bool,
    pub quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn dir(&self, parts: &[&str]) -> Result<PathBuf> {
        let mut d = self.root.clone();
        d.extend(parts);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }
}

pub fn build(ctx: &Ctx, cfg: &RunConfig, kind: NetworkKind) -> Result<()> {
    if ctx.dry_run {
        ctx.say(format!("config ok; would build the {kind} network into {}", ctx.root.display()));
        return Ok(());
    }
    let net = cfg.network();
    let network = build_network(&net, kind)?;
    let dir = ctx.dir(&["build", kind.as_str()])?;
    let c = &network.connectome;
    let mut files = vec!["connectome.csv".to_string(), "network.json".to_string()];
    write_connectome(&dir.join("connectome.csv"), c, &net)?;
    if let Some(l) = &network.landscape {
        write_landscape(&dir.join("landscape.csv"), l)?;
        files.push("landscape.csv".into());
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        kind: NetworkKind,
        excitatory: usize,
        inhibitory: usize,
        pooling: usize,
        recurrent_edges: usize,
        pooling_edges: usize,
        input_patch: &'a [usize],
        digest: String,
    }
    write_json(
        &dir.join("network.json"),
        &Summary {
            kind,
            excitatory: c.exc_count(),
            inhibitory: c.inh_count(),
            pooling: c.pool_count(),
            recurrent_edges: c.recurrent_edges().count(),
            pooling_edges: c.pooling_edges().count(),
            input_patch: &c.input_patch,
            digest: c.digest(),
        },
    )?;
    let mut m = Manifest::new("build", Some(kind), cfg);
    m.record(&dir, &files)?;
    m.write(&dir)?;
    ctx.say(format!(
        "{kind}: {} + {} + {} neurons, {} edges -> {}",
        c.exc_count(),
        c.inh_count(),
        c.pool_count(),
        c.edges.len(),
        dir.display()
    ));
    Ok(())
}

pub fn experiment(ctx: &Ctx, cfg: &RunConfig, kind: NetworkKind, svg: bool) -> Result<()> {
    if ctx.dry_run {
        ctx.say(format!("config ok; would run 25 {kind} trials into {}", ctx.root.display()));
        return Ok(());
    }
    let net = cfg.network();
    ctx.say(format!("{kind}: building and running 25 trials"));
    let exp = run_experiment(&net, kind)?;
    let dir = ctx.dir(&["experiment", kind.as_str()])?;
    let mut files = write_experiment(&dir, &exp, cfg.run.readout, net.pooling.mode)?;
    if svg {
        write_raster_svg(&dir.join("raster_trial0.svg"), &exp.trials.rasters[0], &exp.network)?;
        files.push("raster_trial0.svg".into());
    }
    let mut m = Manifest::new("experiment", Some(kind), cfg);
    m.record(&dir, &files)?;
    m.write(&dir)?;
    let r = &exp.report;
    ctx.say(format!(
        "{kind}: plateau rate {:.3}, early rate {:.3}, fano {:.3}, final pairwise difference {:.3} -> {}",
        r.plateau_rate,
        r.early_rate,
        r.neuron_fano,
        r.pairwise_mean.last().copied().unwrap_or(f64::NAN),
        dir.display()
    ));
    Ok(())
}

fn trajectories(cfg: &RunConfig) -> Result<Vec<Trajectory>> {
    let mut out: Vec<Trajectory> = cfg.run.trajectories.iter().map(|&a| builtin(a)).collect();
    for p in &cfg.run.trajectory_files {
        out.push(load_csv(p)?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct CellSummary {
    network: NetworkKind,
    task: TaskKind,
    method: Method,
    mean_nrmse: f64,
    std_nrmse: f64,
}

fn summarize(rows: &[TaskRow]) -> Vec<CellSummary> {
    let mut cells: Vec<CellSummary> = Vec::new();
    for r in rows {
        if cells.iter().any(|c| (c.network, c.task, c.method) == (r.network, r.task, r.method)) {
            continue;
        }
        let v: Vec<f64> = rows
            .iter()
            .filter(|q| (q.network, q.task, q.method) == (r.network, r.task, r.method))
            .map(|q| q.mean_nrmse)
            .collect();
        cells.push(CellSummary {
            network: r.network,
            task: r.task,
            method: r.method,
            mean_nrmse: anisonet::stats::mean(&v),
            std_nrmse: anisonet::stats::std_pop(&v),
        });
    }
    cells
}

pub fn train_eval(ctx: &Ctx, cfg: &RunConfig, save_models: bool) -> Result<()> {
    let trajs = trajectories(cfg)?;
    let kinds = [NetworkKind::Anisotropic, NetworkKind::Random];
    let cells = kinds.len() * cfg.run.tasks.len() * cfg.run.methods.len() * trajs.len();
    if ctx.dry_run {
        ctx.say(format!("config ok; would evaluate {cells} cells into {}", ctx.root.display()));
        return Ok(());
    }
    let net = cfg.network();
    let settings = EvalSettings {
        test_trial: cfg.run.test_trial,
        pooling_mode: net.pooling.mode,
        enet: cfg.elastic_net,
    };
    let dir = ctx.dir(&["train_eval"])?;
    let mut results = Vec::new();
    for kind in kinds {
        ctx.say(format!("{kind}: running trials"));
        let network = build_network(&net, kind)?;
        let plan = TrialPlan::leave_one_out(&network.connectome.input_patch);
        let trials = anisonet::protocol::run_trials(&network.connectome, &net.neuron, &plan)?;
        ctx.say(format!("{kind}: fitting {} readouts", cells / kinds.len()));
        results.extend(evaluate_grid(&trials, kind, &trajs, &cfg.run.tasks, &cfg.run.methods, &settings)?);
    }
    let rows: Vec<TaskRow> = results.iter().map(|r| r.row.clone()).collect();
    let mut files = vec!["tasks.csv".to_string(), "tasks.json".to_string(), "summary.json".to_string()];
    write_task_table(&dir.join("tasks.csv"), &rows)?;
    write_json(&dir.join("tasks.json"), &rows)?;
    let summary = summarize(&rows);
    write_json(&dir.join("summary.json"), &summary)?;
    let pred = write_predictions(&dir.join("predictions"), &results)?;
    files.extend(pred.into_iter().map(|n| format!("predictions/{n}")));
    if save_models {
        let mdir = dir.join("models");
        fs::create_dir_all(&mdir).map_err(|e| Error::io(&mdir, e))?;
        for r in &results {
            let name = format!(
                "{}_{}_{}_{}.csv",
                r.row.network.as_str(),
                r.row.task.as_str(),
                r.row.method.as_str(),
                r.row.trajectory
            );
            r.outcome.model.write_csv(&mdir.join(&name))?;
            files.push(format!("models/{name}"));
        }
    }
    let mut m = Manifest::new("train-eval", None, cfg);
    m.record(&dir, &files)?;
    m.write(&dir)?;
    for c in &summary {
        ctx.say(format!(
            "{:<12} {:<15} {:<22} NRMSE {:.4} ± {:.4}",
            c.network.as_str(),
            c.task.as_str(),
            c.method.as_str(),
            c.mean_nrmse,
            c.std_nrmse
        ));
    }
    if rows.iter().any(|r| !r.converged) {
        ctx.say("warning: some elastic-net fits hit max_iter before converging");
    }
    ctx.say(format!("{} rows -> {}", rows.len(), dir.display()));
    Ok(())
}

pub fn run_bench(ctx: &Ctx, cfg: &RunConfig, trials: usize, steps: usize) -> Result<()> {
    if steps == 0 || trials == 0 {
        return Err(Error::config("bench.steps", "horizon and trial count must be positive"));
    }
    if ctx.dry_run {
        ctx.say(format!("config ok; would time {trials} trials of {steps} steps per network and readout"));
        return Ok(());
    }
    let report = bench(&cfg.network(), &[NetworkKind::Anisotropic, NetworkKind::Random], trials, steps)?;
    let dir = ctx.dir(&["bench"])?;
    write_json(&dir.join("bench.json"), &report)?;
    let mut m = Manifest::new("bench", None, cfg);
    m.record(&dir, &["bench.json"])?;
    m.write(&dir)?;
    // timings are not reproducible, so bench output goes to stdout as well
    println!("kind         readout      s/trial   steps/s   ratio vs {:.1} s", report.budget_seconds);
    for e in &report.entries {
        println!(
            "{:<12} {:<12} {:>7.3} {:>9.0}   {:.3}",
            e.kind.as_str(),
            e.source.as_str(),
            e.seconds_per_trial,
            e.steps_per_second,
            e.realtime_ratio
        );
    }
    println!(
        "within budget: {}; slowest/fastest network kind: {:.2}",
        report.all_within_budget(),
        report.kind_spread()
    );
    Ok(())
}

/// Recomputes the metrics of an experiment directory from its events file.
pub fn stats(ctx: &Ctx, dir: &Path) -> Result<()> {
    let m = Manifest::load(dir)?;
    if m.command != "experiment" {
        return Err(Error::config("manifest.command", format!("expected an experiment directory, found {}", m.command)));
    }
    let kind = m.kind.ok_or_else(|| Error::config("manifest.kind", "missing"))?;
    let net = m.config.network();
    let network = build_network(&net, kind)?;
    let plan = TrialPlan::leave_one_out(&network.connectome.input_patch);
    let rasters = read_events(
        &dir.join("events.csv"),
        plan.trials(),
        plan.record_steps,
        network.connectome.neuron_count(),
    )?;
    let trials = TrialSet::new(&network.connectome, plan, rasters);
    let (report, _) = analyse(&network, &trials, kind)?;
    write_json(&dir.join("stats.json"), &report)?;
    let same = fs::read(dir.join("stats.json")).ok() == fs::read(dir.join("metrics.json")).ok();
    println!(
        "{kind}: rate {:.4} (steps 100-215), fano {:.3}, levene W {:.2} p {:.3e}, PC1 mse {:.4}",
        report.plateau_rate,
        report.neuron_fano,
        report.levene_first_last.statistic,
        report.levene_first_last.p_value,
        report.pc1.normalized_mse
    );
    ctx.say(format!("recomputed metrics {} the recorded ones", if same { "match" } else { "differ from" }));
    Ok(())
}

fn write_raster_svg(path: &Path, raster: &SpikeRaster, network: &Network) -> Result<()> {
    let c = &network.connectome;
    let (w, h) = (raster.steps() * 4, raster.neurons() / 4 + 1);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (step, neuron) in raster.events() {
        let colour = if neuron < c.exc_count() {
            "#1f4e79"
        } else if neuron < c.pool_offset() {
            "#b03a2e"
        } else {
            "#1e8449"
        };
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="3" height="1" fill="{colour}"/>"#,
            step * 4,
            neuron / 4
        );
    }
    s.push_str("</svg>\n");
    fs::write(path, s).map_err(|e| Error::io(path, e))
}
