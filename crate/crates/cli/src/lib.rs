//! Command-line driver: wires the core library into six deterministic,
//! config-driven experiment commands that emit CSV and JSON artifacts.

// Config validation writes `!(x > 0.0)` and friends on purpose: the negated
// form is true for NaN, which the checks must catch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "avh",
    version,
    about = "Angular hardness toolkit: scores, training dynamics, correlations, self-training"
)]
pub struct Cli {
    /// JSON run configuration; omitted fields fall back to defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed; overrides the config's seed. Identical seeds give
    /// byte-identical artifacts.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config's out_dir.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Two-Gaussian toy demo: per-sample angular hardness vs oracle hardness.
    GaussianDemo,
    /// Per-epoch hardness-binned training dynamics on a Gaussian mixture.
    Dynamics,
    /// Correlate per-sample scores with human-selection frequency.
    Correlate,
    /// Class-balanced self-training across a synthetic domain shift.
    Selftrain,
    /// Sweep the embedding scale: confidence moves, the angular score doesn't.
    NormInvariance,
    /// Write a labeled dataset CSV plus its oracle-posterior sidecar.
    GenData,
}

/// Resolved run context: merged configuration, effective seed, output dir.
pub struct Ctx {
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Ctx {
    pub fn artifact_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Writes one artifact, creating the output directory on first use.
    /// Failures here are configuration errors (unwritable out dir).
    pub fn write_artifact(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| {
            CliError::config(format!("cannot create out dir {}: {e}", self.out.display()))
        })?;
        let path = self.artifact_path(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    /// Ensures the output directory exists for writers that take a path.
    pub fn ensure_out_dir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| {
            CliError::config(format!("cannot create out dir {}: {e}", self.out.display()))
        })
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let seed = config.effective_seed(cli.seed);
    let out = config.effective_out(cli.out.as_deref());
    let ctx = Ctx { config, seed, out };
    match cli.command {
        Command::GaussianDemo => commands::gaussian_demo::run(&ctx),
        Command::Dynamics => commands::dynamics::run(&ctx),
        Command::Correlate => commands::correlate::run(&ctx),
        Command::Selftrain => commands::selftrain::run(&ctx),
        Command::NormInvariance => commands::norm_invariance::run(&ctx),
        Command::GenData => commands::gen_data::run(&ctx),
    }
}
