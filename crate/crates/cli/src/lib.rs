//! Experiment harness for `fracschro`: JSON configs, the verification
//! suite, source-to-solution and spectral-data dumps, and reconstruction
//! runs, each writing CSV artifacts and a JSON run manifest.
//!
//! Exit codes: 0 when every check passes, 1 on a failed check or runtime
//! error, 2 on an invalid configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;
pub mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "fracschro", version, about = "Fractional Schrödinger operators: verification and reconstruction runs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct GlobalArgs {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config's `output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the global pool.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the invariant suite.
    Verify {
        #[command(subcommand)]
        scope: Option<VerifyScope>,
    },
    /// Source-to-solution matrices on the β grid and a stability report.
    S2s {
        /// Comma-separated shifts β ≥ 0.
        #[arg(long, value_delimiter = ',')]
        beta_grid: Option<Vec<f64>>,
        /// Report path; `<out>/s2s_report.json` by default.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Internal spectral data.
    Specdata {
        #[command(subcommand)]
        action: SpecdataAction,
    },
    /// Reconstruct the potential on Ω′ from source-to-solution data.
    Invert {
        /// Directory of `sigma_<β>.csv` files as written by `forward`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// `node,value` CSV of the true potential.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Write source-to-solution data for the inverse problem.
    Forward {
        /// `node,value` CSV of the potential; the config's truth otherwise.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum VerifyScope {
    /// Only the resolvent checks, with a JSON report.
    Resolvent,
}

#[derive(Debug, Args, Clone, Copy, Default)]
pub struct TimeArgs {
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub nt: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum SpecdataAction {
    /// Eigenvalues and eigenvectors on Ω, plus full spectral dumps.
    Extract,
    /// Per-cluster deviations between the data of two operators.
    Compare {
        /// Compare against a random regauging of the same operator instead
        /// of the alternate potential.
        #[arg(long)]
        regauge: bool,
    },
    /// Recover rates from semigroup samples.
    Recover {
        #[command(flatten)]
        time: TimeArgs,
    },
}

/// Check failure, as opposed to a configuration or runtime error.
#[derive(Debug)]
pub struct ChecksFailed(pub Vec<String>);

impl std::fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "failed checks: {}", self.0.join(", "))
    }
}

impl std::error::Error for ChecksFailed {}

/// Loads the config and applies command-line overrides.
pub fn load_config(global: &GlobalArgs) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &global.config {
        Some(path) => {
            let mut cfg = RunConfig::load(path)?;
            if let Some(dir) = path.parent() {
                cfg.resolve_paths(dir);
            }
            cfg
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> ExitCode {
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("config error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
