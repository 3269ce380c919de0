use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use viper_cli::config::ExperimentConfig;
use viper_cli::plot::Metric;
use viper_cli::{runner, stages};

/// Exit codes: 0 success, 1 configuration error, 2 runtime failures.
#[derive(Parser)]
#[command(name = "viper", about = "Offline RL experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Added to every seed of the grid.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Args)]
struct Stage {
    #[command(flatten)]
    common: Common,
    /// Grid cell index, in the order `run` writes rows.
    #[arg(long, default_value_t = 0)]
    cell: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotMetric {
    Subopt,
    Latency,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute the full grid.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads (default: VIPER_WORKERS, else all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Build one cell's environment and offline dataset.
    GenData(Stage),
    /// Fit one cell's policy from its persisted dataset.
    Fit(Stage),
    /// Evaluate a persisted policy into report.csv.
    Eval(Stage),
    /// Evaluate a persisted policy with latency columns into latency.csv.
    BenchTiming(Stage),
    /// Render SVG plots from a results CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = PlotMetric::Subopt)]
        metric: PlotMetric,
    },
}

enum Failure {
    Config(Vec<String>),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Failure::Config(vec![format!("cannot read {}: {e}", common.config.display())]))?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(Failure::Config)?;
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    let out = cfg.out.clone();
    Ok((cfg, out))
}

fn workers(flag: Option<usize>) -> Result<usize, Failure> {
    if let Some(n) = flag {
        return if n == 0 { Err(Failure::Config(vec!["--workers must be >= 1".into()])) } else { Ok(n) };
    }
    match std::env::var("VIPER_WORKERS") {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Failure::Config(vec![format!("VIPER_WORKERS must be a positive integer, got `{v}`")])),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

type StageFn = fn(&ExperimentConfig, usize, u64, &Path) -> anyhow::Result<()>;

fn stage(s: &Stage, f: StageFn) -> Result<(), Failure> {
    let (cfg, out) = load(&s.common)?;
    f(&cfg, s.cell, s.common.seed_offset, &out)?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Run { common, workers: w } => {
            let (cfg, out) = load(&common)?;
            let summary = runner::run(&cfg, &out, workers(w)?, common.seed_offset)?;
            println!("{} cells, {} failed; results in {}", summary.cells, summary.failures.len(), summary.csv.display());
            if !summary.failures.is_empty() {
                for (i, e) in &summary.failures {
                    eprintln!("cell {i}: {e}");
                }
                return Err(Failure::Runtime(anyhow::anyhow!("{} cells failed", summary.failures.len())));
            }
            Ok(())
        }
        Cmd::GenData(s) => stage(&s, stages::gen_data),
        Cmd::Fit(s) => stage(&s, stages::fit),
        Cmd::Eval(s) => stage(&s, stages::eval),
        Cmd::BenchTiming(s) => stage(&s, stages::bench_timing),
        Cmd::Plot { csv, out, metric } => {
            let text = std::fs::read_to_string(&csv).map_err(|e| anyhow::anyhow!("reading {}: {e}", csv.display()))?;
            let rows = runner::parse_csv(&text)?;
            let metric = match metric {
                PlotMetric::Subopt => Metric::Subopt,
                PlotMetric::Latency => Metric::Latency,
            };
            std::fs::create_dir_all(&out).map_err(|e| anyhow::anyhow!("creating {}: {e}", out.display()))?;
            for p in runner::plot_rows(&rows, metric, "results", &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(errs)) => {
            for e in errs {
                eprintln!("config error: {e}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
