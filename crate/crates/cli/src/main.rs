//! `nngpiu` command-line front end: fit, predict, bench, eigen, rerun.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "nngpiu", version, about = "Gaussian-process regression with composite kernels and input-noise adjustment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress and warnings at debug level.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the `[model]` section to a CSV table and write the model file.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predictive mean and variance for every row of a CSV table.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the `[experiment]` and/or `[tabular]` sections.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Gram-matrix eigenspectra for the `[eigen]` section.
    Eigen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Repeat the command recorded in a manifest into a new directory.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    let threads = cli.threads;
    match cli.command {
        Command::Fit { config, data, out, seed } => commands::fit(&config, &data, &out, seed, threads),
        Command::Predict { model, data, out } => commands::predict(&model, &data, &out, threads),
        Command::Bench { config, out, seed } => commands::bench(&config, &out, seed, threads),
        Command::Eigen { config, out, seed } => commands::eigen(&config, &out, seed, threads),
        Command::Rerun { manifest, out } => commands::rerun(&manifest, &out, threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
