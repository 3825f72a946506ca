use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use robustpath_cli::commands::{cmd_portfolio, cmd_trace, cmd_verify, Mode, RegionArg};

/// Trace and verify robust, central and proximal solution paths.
///
/// Exit codes: 0 success, 1 invalid input, 2 solver failure, 3 failed verification.
/// `ROBUSTPATH_THREADS` caps the worker threads.
#[derive(Parser)]
#[command(name = "robustpath", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace a path and write it as CSV, with JSON metadata alongside.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "proximal")]
        mode: Mode,
        /// CSV output; the metadata goes to the same name with a `.json` extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check identities and bounds on an instance and report them as JSON.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of thm2, thm3, thm4, prop1, prop2, lemma3, lemma4, kappa.
        #[arg(long)]
        checks: Option<String>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// JSON report destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build robust portfolios from returns data and compare frontiers.
    Portfolio {
        /// Returns CSV (`date,asset1,…`), or `synthetic` for the bundled fixture.
        #[arg(long)]
        returns: String,
        #[arg(long, value_enum, default_value = "simplex")]
        region: RegionArg,
        /// Per-asset cap of the box region.
        #[arg(long, default_value_t = 0.12)]
        box_upper: f64,
        /// Seed of the synthetic fixture.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Trace { config, mode, out } => cmd_trace(&config, mode, &out),
        Command::Verify { config, checks, seed, out } => cmd_verify(&config, checks.as_deref(), seed, out.as_deref()),
        Command::Portfolio { returns, region, box_upper, seed, out } => cmd_portfolio(&returns, region, box_upper, seed, &out),
    };
    ExitCode::from(code as u8)
}
