//! `perpmm`: calibrate, solve, backtest and stress-test funding-aware quoting
//! policies from one TOML config per asset.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 input or validation failure.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use perpmm::fill_calib::HitMode;

use config::RunConfig;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<perpmm::Error> for CliError {
    fn from(e: perpmm::Error) -> Self {
        let code = if e.is_input_error() { 2 } else { 1 };
        Self { code, message: e.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Parser)]
#[command(name = "perpmm", version, about = "Funding-aware perpetual market making toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Run config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Override `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the funding model and the fill curve; writes funding.json and fill.json.
    Calibrate {
        #[command(flatten)]
        args: ConfigArgs,
        /// Override `calibration.mode`.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<HitMode>,
    },
    /// Solve the hjb_fd and pure_as tables.
    Solve {
        #[command(flatten)]
        args: ConfigArgs,
        /// Also check that the zero-funding, zero-penalty solve quotes 1/k everywhere.
        #[arg(long)]
        verify_as_limit: bool,
    },
    /// Run every configured policy on the holdout seeds, paired against pure_as.
    Backtest {
        #[command(flatten)]
        args: ConfigArgs,
        /// Also run the four stress windows.
        #[arg(long)]
        stress: bool,
    },
    /// Run the four stress windows with the parameters frozen by `backtest`.
    Stress {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Generate a synthetic mid, funding and tape dataset from a spec.
    Synth {
        /// Synthetic spec (TOML).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a config and its inputs.
    Verify {
        #[command(flatten)]
        args: ConfigArgs,
    },
}

fn parse_mode(s: &str) -> Result<HitMode, String> {
    s.parse().map_err(|e: perpmm::Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Calibrate { args, mode } => commands::calibrate(&args.load()?, mode),
        Command::Solve { args, verify_as_limit } => commands::solve_tables(&args.load()?, verify_as_limit),
        Command::Backtest { args, stress } => commands::backtest(&args.load()?, stress),
        Command::Stress { args } => commands::stress(&args.load()?),
        Command::Synth { spec, out } => commands::synth(&spec, &out),
        Command::Verify { args } => commands::verify(&args.load()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
