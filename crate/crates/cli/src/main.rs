use clap::{Parser, Subcommand};

use swsim::commands::{
    cmd_fit, cmd_generate, cmd_simulate, cmd_summarize, FitArgs, GenerateArgs, SimulateArgs,
    SummarizeArgs,
};

/// Simulation and analysis of cohort stepped-wedge cluster randomized
/// trials: generate datasets, fit mixed-effects model formulations, and run
/// Monte Carlo grids measuring bias, power, and type I error.
#[derive(Debug, Parser)]
#[command(name = "swsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one trial dataset and write it as CSV.
    Generate(GenerateArgs),
    /// Fit one model formulation to a dataset CSV; print the fit as JSON.
    Fit(FitArgs),
    /// Run a simulation grid; write replicate, summary, and manifest files.
    Simulate(SimulateArgs),
    /// Recompute cell summaries from a replicate CSV.
    Summarize(SummarizeArgs),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate(args) => cmd_generate(args).map(|()| 0),
        Command::Fit(args) => cmd_fit(args).map(|()| 0),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Summarize(args) => cmd_summarize(args).map(|()| 0),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
