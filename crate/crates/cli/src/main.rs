//! `gpmidas` batch command line.

mod commands;
mod io;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gpmidas::{Error, ModelConfig};

pub const VERSION: &str = env!("GPMIDAS_VERSION");

#[derive(Parser, Debug)]
#[command(name = "gpmidas", version = VERSION, about = "Bayesian MIDAS nowcasting: simulation, fitting and forecast evaluation")]
pub struct Cli {
    /// Master seed; overrides `seed` in the configuration file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Flat `key = value` model configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Monte Carlo study on the synthetic designs; writes loss grids.
    Simulate(commands::simulate::Args),
    /// Fit models at one or more target periods of a data panel.
    Fit(commands::fit::Args),
    /// Turn draws files into predictive draws and quantiles.
    Predict(commands::predict::Args),
    /// Score predictions: losses, DM tests, model confidence set, dummy regression.
    Evaluate(commands::evaluate::Args),
    /// Lasso surrogate importance of predictors for predictive medians.
    Importance(commands::importance::Args),
}

/// Resolved global settings shared by every subcommand.
pub struct RunContext {
    pub config: ModelConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn load_config(cli: &Cli) -> Result<ModelConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ModelConfig::from_file(p)
            .with_context(|| format!("reading configuration {}", p.display()))?,
        None => ModelConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    let config = load_config(&cli)?;
    std::fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = RunContext {
        seed: config.seed,
        config,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Simulate(a) => commands::simulate::run(&ctx, a),
        Command::Fit(a) => commands::fit::run(&ctx, a),
        Command::Predict(a) => commands::predict::run(&ctx, a),
        Command::Evaluate(a) => commands::evaluate::run(&ctx, a),
        Command::Importance(a) => commands::importance::run(&ctx, a),
    }
}

/// 3 for numerical failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<Error>(), Some(Error::Numerical(_))));
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
