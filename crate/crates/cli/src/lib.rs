//! The `linhop` command line: experiments as subcommands driven by a JSON
//! config, writing CSV and JSON-lines artifacts.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 when a run fails.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use output::OutputDir;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "run failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<linhop_core::Error> for CliError {
    fn from(e: linhop_core::Error) -> Self {
        match e {
            linhop_core::Error::Domain(_) | linhop_core::Error::Capacity(_) => CliError::Config(e.to_string()),
            linhop_core::Error::Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "linhop", version, about = "Linear Hopfield networks with random couplings and their mean-field limit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON), or a manifest from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the root seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads. Changes speed only, never results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Finite-N trajectories (trajectories.csv).
    Simulate,
    /// Paths of the mean-field limit (trajectories.csv).
    LimitSample,
    /// Empirical against theoretical covariance (covariance.csv).
    CompareCov,
    /// Exact finite-N moments against their limit (moments.csv, classes.csv).
    MomentsVerify,
    /// Heaviest sentence classes for odd word counts (reports.jsonl).
    LemmaScan,
    /// Cross-correlation between coordinates (reports.jsonl).
    Chaos,
    /// Long-time growth rate of the variance (reports.jsonl).
    Longtime,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::LimitSample => "limit-sample",
            Command::CompareCov => "compare-cov",
            Command::MomentsVerify => "moments-verify",
            Command::LemmaScan => "lemma-scan",
            Command::Chaos => "chaos",
            Command::Longtime => "longtime",
        }
    }
}

/// Resolves the config and runs one subcommand.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let root = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    cfg.output_dir = Some(root.clone());
    let out = OutputDir::create(&root)?;
    let run = || match cli.command {
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::LimitSample => commands::limit_sample(&cfg, &out),
        Command::CompareCov => commands::compare_cov(&cfg, &out),
        Command::MomentsVerify => commands::moments_verify(&cfg, &out),
        Command::LemmaScan => commands::lemma_scan(&cfg, &out),
        Command::Chaos => commands::chaos(&cfg, &out),
        Command::Longtime => commands::longtime(&cfg, &out),
    };
    match cli.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Io(format!("cannot start {k} worker threads: {e}")))?
            .install(run),
        None => run(),
    }
}
