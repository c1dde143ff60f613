//! `qkdfl`: run, validate and tabulate QKD-secured federated learning experiments.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qkdfl::experiment::{self, report, ExperimentConfig, ExperimentError};

#[derive(Debug, Parser)]
#[command(name = "qkdfl", version, about = "QKD-secured federated learning experiments")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate the CSV tables of a finished run directory.
    Report { run_dir: PathBuf },
    /// Check a config without running it.
    Validate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Failure::Config("config error at `output_dir`: not set and no --out given".into()))?;
            log::info!("experiment {} ({}), config hash {}", cfg.experiment.as_str(), cfg.task.as_str(), cfg.hash());
            for path in experiment::run(&cfg, &dir)? {
                println!("{}", path.display());
            }
        }
        Command::Report { run_dir } => {
            for path in report::write_tables(&run_dir)? {
                println!("{}", path.display());
            }
        }
        Command::Validate { config, seed } => {
            let cfg = load(&config, seed)?;
            println!("ok: experiment {} task {} hash {}", cfg.experiment.as_str(), cfg.task.as_str(), cfg.hash());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
