//! `rcsns`: simulate, validate, iterate and fit.

mod fit;
mod iterate;
mod manifest;
mod simulate;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit codes shared by all subcommands.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CHECK_FAILED: u8 = 1;
    pub const BAD_INPUT: u8 = 2;
    pub const NUMERICAL: u8 = 3;
    pub const DIVERGED: u8 = 4;
}

#[derive(Parser)]
#[command(name = "rcsns", version, about = "Relativistic Cucker-Smale particles in a Navier-Stokes fluid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the coupled system and write diagnostics.csv and manifest.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the configured one.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the analytic oracle suite.
    Validate {
        /// Flip the sign of one check's computed quantity.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Run the successive-approximation study and write trace.jsonl.
    Iterate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit an exponential decay to the L column of a diagnostics CSV.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        /// Time window as `t0,t1`.
        #[arg(long, default_value = "1,5")]
        window: String,
        /// Viscosity entering the theoretical rate.
        #[arg(long, default_value_t = 1.0)]
        viscosity: f64,
        /// Exit 1 unless the fitted rate reaches 0.95 of the theoretical one.
        #[arg(long = "assert")]
        assert_rate: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate { config, out, seed } => simulate::run(&config, out, seed),
        Command::Validate { inject_fault } => validate::run(inject_fault.as_deref()),
        Command::Iterate { config, out, seed } => iterate::run(&config, out, seed),
        Command::Fit {
            csv,
            window,
            viscosity,
            assert_rate,
        } => fit::run(&csv, &window, viscosity, assert_rate),
    };
    ExitCode::from(code)
}
