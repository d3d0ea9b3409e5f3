mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Failure;
use crate::config::{parse_list, RunConfig};

/// Matrix-factorization recommender with empirical-Bayes regularization tuning.
#[derive(Debug, Parser)]
#[command(name = "ebmf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train at fixed regularization weights and report test RMSE.
    Train(Common),
    /// Tune the weights by empirical Bayes, then retrain at the estimate.
    TuneEb(Common),
    /// Tune the weights by exhaustive grid search.
    TuneGrid(Common),
    /// Test RMSE as a function of the latent dimension.
    SweepK {
        #[command(flatten)]
        common: Common,
        /// Comma-separated latent dimensions; overrides `k_values`.
        #[arg(long)]
        k_values: Option<String>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::load(&self.config).map_err(Failure::Usage)?;
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(c) => commands::train(&c.load()?),
        Command::TuneEb(c) => commands::tune_eb(&c.load()?),
        Command::TuneGrid(c) => commands::tune_grid(&c.load()?),
        Command::SweepK { common, k_values } => {
            let mut cfg = common.load()?;
            if let Some(raw) = k_values {
                cfg.k_values = Some(parse_list("--k-values", &raw).map_err(Failure::Usage)?);
            }
            commands::sweep_k(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
