use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{BasisArgs, DirectArgs, FitArgs, SimulateArgs};

/// Bayesian small area estimation for ordinal and nominal survey responses.
#[derive(Parser)]
#[command(name = "ordsae", version)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write draws and cell estimates.
    Fit(FitArgs),
    /// Run a simulation scenario and write its metrics.
    Simulate(SimulateArgs),
    /// Horvitz-Thompson direct estimates.
    Direct(DirectArgs),
    /// Write the spatial basis of an adjacency graph.
    Basis(BasisArgs),
}

fn run(cli: Cli) -> anyhow::Result<String> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Direct(a) => commands::direct(&a),
        Command::Basis(a) => commands::basis(&a),
    }
}

fn main() {
    match run(Cli::parse()) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
