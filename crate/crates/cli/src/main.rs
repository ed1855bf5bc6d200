//! `plnnv`: verify, benchmark, generate, export and oracle-check piecewise-linear networks.

mod bench;
mod export;
mod gen;
mod input;
mod oracle;
mod verify;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit code for errors of any kind.
pub const EXIT_ERROR: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "plnnv", version, about = "Branch-and-bound verification of piecewise-linear networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide or optimise one property (exit 0 = UNSAT, 1 = SAT, 2 = TIMEOUT, 3 = error).
    Verify(verify::VerifyArgs),
    /// Run every instance of a manifest with every listed strategy.
    Bench(bench::BenchArgs),
    /// Write a generated instance as network, property and box files.
    #[command(subcommand)]
    Gen(gen::GenCommand),
    /// Write the big-M MIP model of an instance in CPLEX LP format.
    Export(export::ExportArgs),
    /// Exact minimum by activation-pattern enumeration.
    Oracle(oracle::OracleArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Verify(a) => verify::run(&a),
        Command::Bench(a) => bench::run(&a).map(|_| 0),
        Command::Gen(c) => gen::run(&c).map(|_| 0),
        Command::Export(a) => export::run(&a).map(|_| 0),
        Command::Oracle(a) => oracle::run(&a).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
