//! `grad-reduce`: experiment runner for the spectral gradient-reduction
//! artifact. Subcommands mirror the pipeline: `reduce` certifies the
//! contraction and finds equilibria, `aim-scaling` measures manifold
//! distances, `sde` and `fokker-planck` drive the stochastic layer, and
//! `quasipotential` / `mane` cover the action and Hamilton-Jacobi
//! diagnostics.

mod commands;
mod config;
mod manifest;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use grad_reduce_core::dynamics::DynamicsError;
use grad_reduce_core::ldp::LdpError;
use grad_reduce_core::reduction::ReductionError;
use grad_reduce_core::stochastic::StochasticError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error("assertion failed: {0}")]
    AssertionFailed(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
    #[error(transparent)]
    Ldp(#[from] LdpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Stable exit-code contract, one code per error class.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Reduction(_) => 2,
            CliError::AssertionFailed(_) => 3,
            CliError::Dynamics(_) => 4,
            CliError::Stochastic(_) => 5,
            CliError::Ldp(_) => 6,
            CliError::Io(_) => 7,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "grad-reduce",
    version,
    about = "Finite spectral reduction of gradient reaction-diffusion dynamics with stochastic and path-space diagnostics"
)]
struct Cli {
    /// Path to the experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the contraction margin, find equilibria, scan the reduced energy.
    Reduce,
    /// Manifold-distance scaling experiment over a range of cutoffs.
    AimScaling {
        /// Exit with code 3 when a fitted slope leaves its configured window.
        #[arg(long)]
        assert: bool,
    },
    /// Langevin ensemble over the reduced energy.
    Sde,
    /// Fokker-Planck grid evolution with Gibbs reference and entropy record.
    FokkerPlanck,
    /// Infinite-horizon quasi-potential at the configured targets.
    Quasipotential,
    /// Critical-value bracket from Hamiltonian sups over test functions.
    Mane,
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Config("--config <path.json> is required".into()))?;
    let config_bytes = fs::read(&config_path)?;
    let text = String::from_utf8(config_bytes.clone())
        .map_err(|e| CliError::Config(format!("config is not UTF-8: {e}")))?;
    let cfg = config::ExperimentConfig::from_json(&text)?;
    let out_dir = cli
        .out
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));

    let work = move || -> Result<(), CliError> {
        match cli.command {
            Command::Reduce => commands::cmd_reduce(&cfg, &config_bytes, &out_dir),
            Command::AimScaling { assert } => {
                commands::cmd_aim_scaling(&cfg, &config_bytes, &out_dir, assert)
            }
            Command::Sde => commands::cmd_sde(&cfg, &config_bytes, &out_dir),
            Command::FokkerPlanck => commands::cmd_fokker_planck(&cfg, &config_bytes, &out_dir),
            Command::Quasipotential => commands::cmd_quasipotential(&cfg, &config_bytes, &out_dir),
            Command::Mane => commands::cmd_mane(&cfg, &config_bytes, &out_dir),
        }
    };

    // GRAD_REDUCE_THREADS caps the worker pool; results are identical for
    // any value because all random streams are counter-based.
    match std::env::var("GRAD_REDUCE_THREADS") {
        Ok(val) => {
            let n: usize = val
                .parse()
                .map_err(|_| CliError::Config(format!("GRAD_REDUCE_THREADS={val} is not a thread count")))?;
            if n == 0 {
                return Err(CliError::Config("GRAD_REDUCE_THREADS must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            pool.install(work)
        }
        Err(_) => work(),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
