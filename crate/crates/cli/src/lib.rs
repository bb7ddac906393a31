//! Command-line front end for the Banach neural operator crate: data
//! generation, DMD fitting, training, prediction, rollout, zero-shot
//! super-resolution, and report aggregation.
//!
//! Every file this binary writes (fields, checkpoints, CSVs, summaries) is
//! a pure function of (config, seed, input files); wall-clock timings are
//! printed to stdout only. Exit codes: 0 success, 1 usage or configuration,
//! 2 numerical failure, 3 I/O failure.

pub mod commands;
pub mod config;
pub mod error;

use clap::{Parser, Subcommand};
use config::Overrides;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "bno",
    version,
    about = "Hybrid Koopman/convolutional field forecaster",
    subcommand_required = true,
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Synthesize a field from the generator spec and save it.
    Generate,
    /// Fit a DMD to the field and write eigenvalues, modes, and a rank sweep.
    Dmd,
    /// Train the configured model and write checkpoint, history, and summary.
    Train,
    /// One-step prediction of every window with a trained checkpoint.
    Predict,
    /// Autoregressive window-to-window forecast from one start window.
    Rollout {
        /// Window index to start from.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Number of autoregressive steps.
        #[arg(long, default_value_t = 9)]
        steps: usize,
        /// Forecast with a per-window DMD instead of a checkpoint.
        #[arg(long)]
        dmd_baseline: bool,
    },
    /// Evaluate a checkpoint on data at any resolution, optionally with
    /// cross-architecture weight transfer against a second checkpoint.
    Superres {
        /// Second checkpoint of the opposite kind; adds both transfer
        /// directions to the table.
        #[arg(long, value_name = "PATH")]
        transfer: Option<PathBuf>,
    },
    /// Merge training summaries into one comparison table.
    Report {
        /// Run directories containing summary.json.
        #[arg(long, value_delimiter = ',', required = true, value_name = "DIR")]
        runs: Vec<PathBuf>,
    },
}

/// Parses arguments, runs the chosen command, and returns the process exit
/// code. Logging goes to stderr, controlled by the BNO_LOG environment
/// variable (off by default except errors).
pub fn run() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("BNO_LOG", "error"))
        .format_timestamp(None)
        .try_init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };

    let cfg = match config::load_config(&cli.overrides) {
        Ok(cfg) => cfg,
        Err(e) => return fail(e),
    };

    let result = match &cli.cmd {
        Cmd::Generate => commands::cmd_generate(&cfg),
        Cmd::Dmd => commands::cmd_dmd(&cfg),
        Cmd::Train => commands::cmd_train(&cfg),
        Cmd::Predict => commands::cmd_predict(&cfg),
        Cmd::Rollout { start, steps, dmd_baseline } => {
            commands::cmd_rollout(&cfg, *start, *steps, *dmd_baseline)
        }
        Cmd::Superres { transfer } => commands::cmd_superres(&cfg, transfer.as_deref()),
        Cmd::Report { runs } => commands::cmd_report(&cfg, runs),
    };

    match result {
        Ok(()) => 0,
        Err(e) => fail(e),
    }
}

fn fail(e: error::CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}
