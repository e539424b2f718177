use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod bench;
mod manifest;
mod mpc;
mod solve;

/// Direct-collocation optimal control from the command line.
#[derive(Parser)]
#[command(name = "ocpkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transcribe and solve a problem file.
    Solve(solve::Args),
    /// Run a closed-loop simulation described by a TOML file.
    Mpc {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a solver-by-fidelity timing matrix described by a TOML file.
    Bench(bench::BenchArgs),
    /// Build performance profiles from benchmark result files.
    Profile(bench::ProfileArgs),
}

/// Outcome of a command that ran to completion.
pub enum Outcome {
    Done,
    /// The solver stopped without reaching an optimal point.
    NotOptimal,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve::run(a),
        Command::Mpc { config, out } => mpc::run(&config, &out),
        Command::Bench(a) => bench::run_bench(a),
        Command::Profile(a) => bench::run_profile(a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotOptimal) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
