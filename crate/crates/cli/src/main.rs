use std::path::PathBuf;

use clap::{Parser, Subcommand};
use clm_cli::commands;
use clm_core::gradcheck::{DEFAULT_POINTS, DEFAULT_TOLERANCE};

/// Coupled local minimizers.
///
/// Relative output directories are placed under $CLM_OUTPUT_ROOT (default
/// `runs`).
#[derive(Parser)]
#[command(name = "clm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv, summary.json and friends.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare CLM with multi-start baselines over several seeds.
    Bench {
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check analytic gradients of all registered problems against finite
    /// differences.
    Gradcheck {
        #[arg(long, default_value_t = DEFAULT_POINTS)]
        points: usize,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out } => commands::cmd_run(&config, out.as_deref()),
        Command::Bench {
            config,
            seeds,
            first_seed,
            out,
        } => commands::cmd_bench(&config, seeds, first_seed, out.as_deref()),
        Command::Gradcheck { points, tol, seed } => commands::cmd_gradcheck(points, tol, seed),
    };
    std::process::exit(code);
}
