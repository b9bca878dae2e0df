use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coupled_index::commands::{run, Command};
use coupled_index::config::RunConfig;
use coupled_index::Error;

#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Simulate the original, simplified or market model.
    Simulate(Common),
    /// Calibrate idiosyncratic volatility with the particle method.
    Calibrate(Common),
    /// Implied-volatility smile of a simulated underlying.
    Smile(Common),
    /// Worst-of call prices on a simulated basket.
    WorstOf(Common),
    /// Local volatility from a call price grid.
    Dupire(Common),
    /// Bound constants and an empirical convergence study.
    Theorems(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn execute(command: Command, args: &Common) -> Result<(), Error> {
    let mut config = RunConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| Error::validation("threads", e.to_string()))?;
    let written = pool.install(|| run(command, &config, &args.out))?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Calibrate(a) => (Command::Calibrate, a),
        Sub::Smile(a) => (Command::Smile, a),
        Sub::WorstOf(a) => (Command::WorstOf, a),
        Sub::Dupire(a) => (Command::Dupire, a),
        Sub::Theorems(a) => (Command::Theorems, a),
    };
    match execute(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
