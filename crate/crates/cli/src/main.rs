//! `hurdleboost`: simulate, tune, fit, stability-select, predict and
//! summarize boosted hurdle models.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{parse_mstop, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "hurdleboost", version, about = "Boosted hurdle distributional regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input file (survey CSV, grid CSV for `predict`, predictions CSV for
    /// `summarize`).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Stopping iterations as `occupancy,mu,sigma`.
    #[arg(long, global = true, value_parser = parse_mstop)]
    mstop: Option<[usize; 3]>,
    /// Number of subsampling folds.
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Draw a synthetic survey dataset from the `[simulate]` section.
    Simulate,
    /// Fit occupancy and count models and write the model artifact.
    Fit,
    /// Choose stopping iterations by subsampling.
    Tune,
    /// Stability selection for every predictor.
    Stabsel,
    /// Predict on a segment grid over season dates.
    Predict,
    /// Per-segment summaries and GeoJSON maps of grid predictions.
    Summarize,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let overrides = Overrides {
        data: cli.data,
        seed: cli.seed,
        out: cli.out,
        mstop: cli.mstop,
        folds: cli.folds,
        threads: cli.threads,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global()?;
    }
    std::fs::create_dir_all(&cfg.out)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Fit => commands::fit(&cfg),
        Command::Tune => commands::tune(&cfg).map(|_| ()),
        Command::Stabsel => commands::stabsel(&cfg),
        Command::Predict => commands::predict(&cfg),
        Command::Summarize => commands::summarize(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
