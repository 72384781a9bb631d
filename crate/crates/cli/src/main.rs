//! `softfail` — seeded soft-failure simulation and forecasting pipeline.
//!
//! Subcommands mirror the pipeline stages:
//!   simulate -> dataset -> train -> evaluate -> compare
//! Every command is deterministic given a config and seed, writes its
//! artifacts (plus the fully resolved config) into the output directory,
//! and re-running it overwrites the outputs identically.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

/// Exit codes: 0 ok, 1 runtime, 2 config, 3 calibration, 4 training
/// divergence, 5 I/O.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Parser)]
#[command(
    name = "softfail",
    about = "EDFA soft-failure simulation, BER forecasting, and repair-trigger comparison",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file (TOML).
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: `paper` (full scale) or `desk` (minutes).
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Override the master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the raw trace length.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<(RunConfig, PathBuf), CliError> {
        let mut config = match (&self.config, &self.preset) {
            (Some(path), None) => RunConfig::from_file(path)?,
            (None, Some(name)) => RunConfig::from_preset(name)?,
            (None, None) => RunConfig::default(),
            (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(samples) = self.samples {
            config.aging.horizon_samples = samples;
        }
        config.validate()?;
        let out = config.output_dir.clone();
        Ok((config, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate (and optionally calibrate) a gain + BER trace.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Build the windowed, normalized, split sequence dataset from a trace.
    Dataset {
        #[command(flatten)]
        config: ConfigArgs,
        /// Trace file produced by `simulate`.
        #[arg(long, value_name = "PATH")]
        trace: PathBuf,
    },
    /// Train the encoder-decoder forecaster on a dataset.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset file produced by `dataset`.
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
        /// Start from a saved model instead of a fresh seeded init.
        #[arg(long, value_name = "PATH")]
        init_model: Option<PathBuf>,
    },
    /// Evaluate a trained model over the dataset's test range.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
        /// Training history to re-emit as the training-curve CSV.
        #[arg(long, value_name = "PATH")]
        history: Option<PathBuf>,
    },
    /// Compare fixed gain-reduction triggers with the prediction trigger.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        /// Trace file produced by `simulate`.
        #[arg(long, value_name = "PATH")]
        trace: PathBuf,
        /// Trained model for the prediction row.
        #[arg(long, value_name = "PATH", requires = "dataset")]
        model: Option<PathBuf>,
        /// Dataset the model was trained on (carries the normalizer).
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        /// Use the perfect-oracle forecaster for the prediction row.
        #[arg(long, conflicts_with = "model")]
        oracle: bool,
        /// Fixed gain-reduction thresholds (dB), comma separated.
        #[arg(long, value_name = "DB", value_delimiter = ',')]
        reductions: Option<Vec<f64>>,
    },
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config } => {
            let (config, out) = config.resolve()?;
            commands::cmd_simulate(&config, &out)
        }
        Command::Dataset { config, trace } => {
            let (config, out) = config.resolve()?;
            commands::cmd_dataset(&config, &out, &trace)
        }
        Command::Train {
            config,
            dataset,
            init_model,
        } => {
            let (config, out) = config.resolve()?;
            commands::cmd_train(&config, &out, &dataset, init_model.as_deref())
        }
        Command::Evaluate {
            config,
            model,
            dataset,
            history,
        } => {
            let (config, out) = config.resolve()?;
            commands::cmd_evaluate(&config, &out, &model, &dataset, history.as_deref())
        }
        Command::Compare {
            config,
            trace,
            model,
            dataset,
            oracle,
            reductions,
        } => {
            let (config, out) = config.resolve()?;
            let args = commands::CompareArgs {
                trace,
                model,
                dataset,
                oracle,
                reductions,
            };
            commands::cmd_compare(&config, &out, &args)
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    use softfail_core::Error as CoreError;
    for cause in err.chain() {
        if cause.downcast_ref::<CliError>().is_some() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return match core {
                CoreError::Calibration(_) => 3,
                CoreError::TrainingDiverged { .. } => 4,
                CoreError::Io(_) | CoreError::Format(_) => 5,
                CoreError::InvalidParameter(_) | CoreError::InvalidGeometry(_) => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 5;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
