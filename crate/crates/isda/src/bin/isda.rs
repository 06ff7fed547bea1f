use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use isda::harness::{load_config, run_experiment, Mode};

/// Slotted random-access simulator with a cross-entropy policy learner.
#[derive(Parser, Debug)]
#[command(name = "isda", version)]
struct Cli {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Override the config's mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,

    /// Override the config's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match load_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(mode) = cli.mode {
        config.mode = mode;
    }
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = cli.out {
        config.output_dir = out.display().to_string();
    }
    match run_experiment(&config, cli.quiet) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
