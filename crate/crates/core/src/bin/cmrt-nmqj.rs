use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cmrt_nmqj::cli::{run_command, workers_from_env, Verb, THREADS_ENV};
use cmrt_nmqj::config::{load_config_with, Overrides};

/// Laser-driven exciton dynamics with CMRT rates and non-Markovian quantum jumps.
#[derive(Parser)]
#[command(version, after_help = format!("Set {THREADS_ENV}=N to fix the number of worker threads."))]
struct Cli {
    #[command(subcommand)]
    verb: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantum-jump ensemble: populations and concurrence.
    Simulate(Flags),
    /// Deterministic master-equation solution on the same grid.
    Oracle(Flags),
    /// Dump R^dis(t) and R^pd(t) in the exciton basis.
    Rates(Flags),
    /// Linear absorption spectrum.
    Absorption(Flags),
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Time step in fs.
    #[arg(long)]
    dt: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Snapshot every K steps.
    #[arg(long)]
    stride: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (verb, flags) = match cli.verb {
        Command::Simulate(f) => (Verb::Simulate, f),
        Command::Oracle(f) => (Verb::Oracle, f),
        Command::Rates(f) => (Verb::Rates, f),
        Command::Absorption(f) => (Verb::Absorption, f),
    };
    // --out is relative to the working directory, not the config file
    let out = flags.out.map(|p| std::env::current_dir().map(|d| d.join(&p)).unwrap_or(p));
    let overrides = Overrides {
        trajectories: flags.trajectories,
        seed: flags.seed,
        dt: flags.dt,
        stride: flags.stride,
        output: out,
    };
    let result = load_config_with(&flags.config, &overrides).and_then(|c| run_command(verb, &c, workers_from_env()));
    match result {
        Ok(art) => {
            for w in &art.warnings {
                eprintln!("warning: {w}");
            }
            for p in &art.csv {
                println!("{}", p.display());
            }
            println!("{}", art.manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
