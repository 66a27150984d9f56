//! `syncnet`: synthesize output-feedback gains for networks of identical
//! neutrally stable discrete-time linear systems, simulate the coupled
//! loops, and verify the supporting operator identities.
//!
//! Exit codes: 0 all checks passed, 1 domain failure (failed check, failed
//! identity, diverging simulation), 2 malformed input.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod formats;

#[derive(Parser)]
#[command(
    name = "syncnet",
    version,
    about = "Gain synthesis, simulation, and verification for synchronizing linear-system networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check model assumptions on a system (and a topology, when given).
    Check(commands::check::CheckArgs),
    /// Construct an output-feedback gain and write a synthesis report.
    Synthesize(commands::synthesize::SynthesizeArgs),
    /// Simulate a coupled-network scenario to a CSV trace and JSON summary.
    Simulate(commands::simulate::SimulateArgs),
    /// Run the oracle verification suites on a seeded corpus.
    Verify(commands::verify::VerifyArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Check(args) => commands::check::run(args),
        Command::Synthesize(args) => commands::synthesize::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Verify(args) => commands::verify::run(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
