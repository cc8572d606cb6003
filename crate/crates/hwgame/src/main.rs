use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hwgame::commands::{self, Command, Failure};
use hwgame::config::{Overrides, RunConfig};
use hwgame::exec::Pool;

/// Worst-case portfolio game under a Hull-White short rate.
///
/// Exit codes: 0 success, 1 certification failed, 2 invalid configuration,
/// 3 simulation budget exceeded. HWGAME_WORKERS sets the worker count.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Solve f, g and the saddle strategies; write CSV curves and V.
    Solve(Options),
    /// Certify the saddle inequalities of the Hamiltonian on a grid.
    Certify(Options),
    /// Monte Carlo estimates of J for the saddle pair and perturbations.
    Simulate(Options),
    /// Saddle point of the game with a compact convex uncertainty set.
    Restricted(Options),
}

#[derive(Args)]
struct Options {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "DIR")]
    output: Option<String>,
    #[arg(long, value_name = "N")]
    paths: Option<usize>,
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    nodes: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Action::Solve(o) => (Command::Solve, o),
        Action::Certify(o) => (Command::Certify, o),
        Action::Simulate(o) => (Command::Simulate, o),
        Action::Restricted(o) => (Command::Restricted, o),
    };
    let overrides = Overrides { paths: opts.paths, seed: opts.seed, nodes: opts.nodes, output_dir: opts.output };
    let result = RunConfig::load(&opts.config)
        .and_then(|mut c| {
            c.apply(&overrides);
            c.resolve()
        })
        .map_err(Failure::Config)
        .and_then(|run| commands::run(command, &run, &Pool::from_env()));
    match &result {
        Err(Failure::Config(errors)) => {
            eprintln!("invalid configuration:");
            errors.iter().for_each(|e| eprintln!("  {e}"));
        }
        Err(Failure::Budget(msg)) => eprintln!("{msg}"),
        Err(Failure::Io(msg)) => eprintln!("output error: {msg}"),
        Ok(_) => {}
    }
    ExitCode::from(commands::exit_code(&result) as u8)
}
