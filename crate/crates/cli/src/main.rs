//! `anisonet`: build networks, run the trial protocol, train trajectory
//! readouts and benchmark throughput.

mod commands;
mod manifest;
mod runconfig;

use std::path::PathBuf;
use std::process::ExitCode;

use anisonet::{Error, NetworkKind};
use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Ctx;
use runconfig::RunConfig;

/// Environment variable naming the default output root.
const OUT_ENV: &str = "ANISONET_OUT";

#[derive(Parser)]
#[command(name = "anisonet", version, about)]
struct Cli {
    /// Output root. Falls back to `run.output_dir`, then $ANISONET_OUT, then ./runs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Only errors on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run file (TOML); defaults apply to anything left out.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Validate the config and report what would run, writing nothing.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Anisotropic,
    Random,
}

impl From<KindArg> for NetworkKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Anisotropic => NetworkKind::Anisotropic,
            KindArg::Random => NetworkKind::Random,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a network and export its edges and landscape.
    Build {
        #[command(flatten)]
        common: Common,
        /// Overrides `run.kind`.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
    },
    /// Run the 25 leave-one-out trials and the stability analysis.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Also draw trial 0 as an SVG raster.
        #[arg(long)]
        svg: bool,
    },
    /// Fit and score trajectory readouts on both network kinds.
    TrainEval {
        #[command(flatten)]
        common: Common,
        /// Export every fitted model.
        #[arg(long)]
        save_models: bool,
    },
    /// Time single-threaded trials against the real-time budget.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 200)]
        steps: usize,
    },
    /// Verify an experiment directory and recompute its metrics from the events.
    Stats {
        /// Directory written by `experiment`.
        dir: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Parse { .. } => 3,
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 4,
        Error::Numerical(_) | Error::Shape(_) | Error::DegreeUnreachable { .. } => 5,
    }
}

fn load(common: &Common) -> anisonet::Result<RunConfig> {
    match &common.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn root(cli_out: &Option<PathBuf>, cfg: Option<&RunConfig>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| cfg.and_then(|c| c.run.output_dir.clone()))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn run(cli: Cli) -> anisonet::Result<()> {
    let ctx = |cfg: &RunConfig, dry_run: bool| Ctx {
        root: root(&cli.out, Some(cfg)),
        dry_run,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Build { common, kind } => {
            let cfg = load(common)?;
            let kind = kind.map(Into::into).unwrap_or(cfg.run.kind);
            commands::build(&ctx(&cfg, common.dry_run), &cfg, kind)
        }
        Command::Experiment { common, kind, svg } => {
            let cfg = load(common)?;
            let kind = kind.map(Into::into).unwrap_or(cfg.run.kind);
            commands::experiment(&ctx(&cfg, common.dry_run), &cfg, kind, *svg)
        }
        Command::TrainEval { common, save_models } => {
            let cfg = load(common)?;
            commands::train_eval(&ctx(&cfg, common.dry_run), &cfg, *save_models)
        }
        Command::Bench { common, trials, steps } => {
            let cfg = load(common)?;
            commands::run_bench(&ctx(&cfg, common.dry_run), &cfg, *trials, *steps)
        }
        Command::Stats { dir } => {
            let c = Ctx {
                root: root(&cli.out, None),
                dry_run: false,
                quiet: cli.quiet,
            };
            commands::stats(&c, dir)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use std::path::Path;

    fn go(args: &[&str], out: &Path) -> anisonet::Result<()> {
        let mut argv = vec!["anisonet", "--quiet", "--out", out.to_str().unwrap()];
        argv.extend_from_slice(args);
        run(Cli::parse_from(argv))
    }

    fn write_cfg(dir: &Path, text: &str) -> String {
        let p = dir.join("run.toml");
        fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    }

    #[test]
    fn build_twice_same_connectome() {
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        go(&["build"], &a).unwrap();
        go(&["build"], &b).unwrap();
        let rel = "build/anisotropic/connectome.csv";
        assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap());
        assert!(a.join("build/anisotropic/landscape.csv").exists());
    }

    #[test]
    fn bad_config_exits_3() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_cfg(tmp.path(), "[connectivity]\nsigma_exc = 0.0\n");
        let err = go(&["build", "-c", &cfg], tmp.path()).unwrap_err();
        assert_eq!(exit_code(&err), 3);
        assert!(err.to_string().contains("connectivity.sigma_exc"), "{err}");
        let missing = tmp.path().join("nope.toml");
        let err = go(&["build", "-c", missing.to_str().unwrap()], tmp.path()).unwrap_err();
        assert_eq!(exit_code(&err), 4);
    }

    #[test]
    fn dry_run_writes_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("out");
        for cmd in ["build", "experiment", "train-eval", "bench"] {
            go(&[cmd, "--dry-run"], &out).unwrap();
        }
        assert!(!out.exists());
    }

    #[test]
    fn bench_rejects_zero_horizon() {
        let tmp = tempfile::tempdir().unwrap();
        let err = go(&["bench", "--steps", "0"], tmp.path()).unwrap_err();
        assert_eq!(exit_code(&err), 3);
    }

    #[test]
    fn stats_recomputes_and_detects_tampering() {
        let tmp = tempfile::tempdir().unwrap();
        go(&["experiment", "--kind", "random"], tmp.path()).unwrap();
        let dir = tmp.path().join("experiment/random");
        go(&["stats", dir.to_str().unwrap()], tmp.path()).unwrap();
        assert_eq!(fs::read(dir.join("stats.json")).unwrap(), fs::read(dir.join("metrics.json")).unwrap());

        let mut events = fs::read_to_string(dir.join("events.csv")).unwrap();
        events.push_str("0,1,2\n");
        fs::write(dir.join("events.csv"), events).unwrap();
        let err = go(&["stats", dir.to_str().unwrap()], tmp.path()).unwrap_err();
        assert!(err.to_string().contains("manifest.files"), "{err}");
    }

    #[test]
    fn train_eval_table_has_every_cell() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_cfg(tmp.path(), "[run]\nmethods = [\"ols-pooling\"]\n");
        go(&["train-eval", "-c", &cfg], tmp.path()).unwrap();
        let table = fs::read_to_string(tmp.path().join("train_eval/tasks.csv")).unwrap();
        // 2 networks x 2 tasks x 7 trajectories, plus the header
        assert_eq!(table.lines().count(), 29);
        let preds = fs::read_dir(tmp.path().join("train_eval/predictions")).unwrap().count();
        assert_eq!(preds, 56);
        manifest::Manifest::load(&tmp.path().join("train_eval")).unwrap();
    }
}
