//! mstk: stroke-controlled diffusion toolkit.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage/config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mstk::commands;
use mstk::config::RunConfig;
use mstk::error::Result;

#[derive(Parser)]
#[command(
    name = "mstk",
    version,
    about = "Stroke-controlled diffusion: training, sampling, surrogate bounds, and diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the operator/oracle/bound property suite.
    Verify {
        /// Optional config; only its seed is used (overridden by --seed).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write checks.csv and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Only run checks whose name contains this substring.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Train the denoiser on the synthetic dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw samples from a trained checkpoint.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the affine surrogate chain and check the energy bounds.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Band-SNR and one-class diagnostics over a sample run.
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: &PathBuf, seed_override: Option<u64>) -> Result<RunConfig> {
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Verify {
            config,
            out,
            seed,
            filter,
            inject_fault,
        } => {
            let config_seed = match config {
                Some(path) => RunConfig::load(&path)?.seed,
                None => RunConfig::default().seed,
            };
            commands::verify::execute(
                seed.unwrap_or(config_seed),
                filter,
                out.as_deref(),
                inject_fault,
            )
        }
        Command::Train { config, out, seed } => {
            commands::train::execute(&load_config(&config, seed)?, &out)
        }
        Command::Sample { config, out, seed } => {
            commands::sample::execute(&load_config(&config, seed)?, &out)
        }
        Command::Simulate { config, out, seed } => {
            commands::simulate::execute(&load_config(&config, seed)?, &out)
        }
        Command::Audit { config, out, seed } => {
            commands::audit::execute(&load_config(&config, seed)?, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
