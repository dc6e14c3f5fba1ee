//! `qss`: solve, scan and verify the coupled quasilinear system from a
//! JSON run configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qss_core::functional::ConstraintVariant;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "qss", version, about = "Sign-changing solutions of a quasilinear Schrödinger system")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "qss-out")]
    out: PathBuf,
    /// Report the constraint without the radial term of A.
    #[arg(long = "paper-literal-G", global = true)]
    literal_g: bool,
    /// Threads for multistart solves; overrides `workers` in the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Constrained minimization; writes report, trace, field dumps and slices.
    Solve,
    /// Fibering map of the seed pair, or of the given dumps, on a log grid of t.
    FiberScan {
        #[arg(requires = "v")]
        u: Option<PathBuf>,
        v: Option<PathBuf>,
    },
    /// Sampled check of the hypotheses on A.
    CheckPotential,
    /// Nodal domains of a field dump.
    NodalCount {
        field: PathBuf,
        /// Threshold relative to max|f|.
        #[arg(long, default_value_t = qss_core::analysis::DEFAULT_NODAL_THRESHOLD)]
        threshold: f64,
    },
    /// Finite-difference audit of the energy gradient.
    Gradcheck,
    /// Recomputes every certified quantity of a solve report.
    Diagnose { report: PathBuf },
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let path =
        cli.config.as_deref().ok_or_else(|| CliError::Validation("--config is required for this subcommand".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if cli.literal_g {
        cfg.constraint_variant = ConstraintVariant::Literal;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Solve => commands::solve(&load(cli)?, out),
        Command::FiberScan { u, v } => {
            let inputs = u.as_deref().zip(v.as_deref());
            commands::fiber(&load(cli)?, out, inputs)
        }
        Command::CheckPotential => commands::check_potential(&load(cli)?, out),
        Command::NodalCount { field, threshold } => commands::nodal_count(field, *threshold, out),
        Command::Gradcheck => commands::gradcheck(&load(cli)?, out),
        Command::Diagnose { report } => commands::diagnose_report(report, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qss: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
