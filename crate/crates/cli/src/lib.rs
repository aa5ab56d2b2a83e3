//! `coloc`: run cooperative localization experiments and write their
//! artifacts.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod replay;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use coloc_core::Estimator;

pub use config::{ExperimentConfig, FileConfig, Preset, Switch};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "coloc",
    version,
    about = "Decentralized cooperative localization experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and run the selected estimators on it.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Repeat the scenario over measurement availabilities and seeds.
    SweepDropout {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Comma-separated availabilities in [0, 1].
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long)]
        seeds_per_point: Option<u64>,
    },
    /// Run the decentralized filter over a recorded log.
    Replay {
        /// Log in the `kind,step,robot,target,a,b,c` format written by `simulate`.
        #[arg(long)]
        log: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a config and print it with defaults resolved.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML config, or a `manifest.json` from an earlier run.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated list of dr, l-ekf, de-ekf, oracle.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<Estimator>>,
    #[arg(long)]
    pub joseph_form: bool,
    /// Chi-square innovation gating.
    #[arg(long, value_enum)]
    pub gate: Option<Switch>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<FileConfig, CliError> {
        let overrides = config::Overrides {
            seed: self.seed,
            estimators: self.estimators.clone(),
            joseph_form: self.joseph_form,
            gate: self.gate,
        };
        config::resolve(self.config.as_deref(), self.preset, &overrides)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out } => commands::simulate(&config.resolve()?, &out),
        Command::SweepDropout {
            config,
            out,
            fractions,
            seeds_per_point,
        } => {
            let mut cfg = config.resolve()?;
            if let Some(f) = fractions {
                cfg.experiment.fractions = f;
            }
            if let Some(n) = seeds_per_point {
                cfg.experiment.seeds_per_point = n;
            }
            config::validate(&cfg)?;
            commands::sweep_dropout(&cfg, &out)
        }
        Command::Replay { log, config, out } => commands::replay(&log, &config.resolve()?, &out),
        Command::Validate { config } => commands::validate(&config.resolve()?),
    }
}
