use std::fs;
use std::path::Path;

use clap::ValueEnum;
use coloc_core::sim::MAX_ORACLE_ROBOTS;
use coloc_core::{Estimator, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Which estimators to run and how to sweep availability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub estimators: Vec<Estimator>,
    /// Measurement availabilities visited by `sweep-dropout`.
    pub fractions: Vec<f64>,
    pub seeds_per_point: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            estimators: vec![Estimator::Dr, Estimator::LEkf, Estimator::DeEkf],
            fractions: (1..=9).map(|k| k as f64 / 10.0).collect(),
            seeds_per_point: 20,
        }
    }
}

/// Contents of a config file: `[scenario]` and `[experiment]` tables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: ScenarioConfig,
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    #[value(name = "paper_fig2")]
    Fig2,
    #[value(name = "paper_fig3")]
    Fig3,
    #[value(name = "paper_fig4")]
    Fig4,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Fig2, Preset::Fig3, Preset::Fig4];

    pub fn source(self) -> &'static str {
        match self {
            Preset::Fig2 => include_str!("../presets/paper_fig2.toml"),
            Preset::Fig3 => include_str!("../presets/paper_fig3.toml"),
            Preset::Fig4 => include_str!("../presets/paper_fig4.toml"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub estimators: Option<Vec<Estimator>>,
    pub joseph_form: bool,
    pub gate: Option<Switch>,
}

pub fn parse_toml(text: &str) -> Result<FileConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Deserialize)]
struct ManifestConfig {
    config: FileConfig,
}

/// Reads a TOML config, or the `config` snapshot of a JSON run manifest.
pub fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if path.extension().is_some_and(|ext| ext == "json") {
        serde_json::from_str::<ManifestConfig>(&text)
            .map(|m| m.config)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        parse_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Loads from `path`, else `preset`, else defaults; applies overrides and validates.
pub fn resolve(path: Option<&Path>, preset: Option<Preset>, overrides: &Overrides) -> Result<FileConfig, CliError> {
    let mut cfg = match (path, preset) {
        (Some(p), _) => load_file(p)?,
        (None, Some(preset)) => parse_toml(preset.source())?,
        (None, None) => FileConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(estimators) = &overrides.estimators {
        cfg.experiment.estimators = estimators.clone();
    }
    if overrides.joseph_form {
        cfg.scenario.filter.joseph_form = true;
    }
    if let Some(gate) = overrides.gate {
        cfg.scenario.filter.gate = gate == Switch::On;
    }
    validate(&cfg)?;
    Ok(cfg)
}

pub fn validate(cfg: &FileConfig) -> Result<(), CliError> {
    cfg.scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let exp = &cfg.experiment;
    if exp.estimators.is_empty() {
        return Err(CliError::Config(
            "invalid value for `experiment.estimators`: must not be empty".into(),
        ));
    }
    if exp.estimators.contains(&Estimator::Oracle) && cfg.scenario.n_robots > MAX_ORACLE_ROBOTS {
        return Err(CliError::Config(format!(
            "invalid value for `experiment.estimators`: oracle supports at most {MAX_ORACLE_ROBOTS} robots"
        )));
    }
    if let Some(f) = exp.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(CliError::Config(format!(
            "invalid value for `experiment.fractions`: {f} is outside [0, 1]"
        )));
    }
    if exp.seeds_per_point == 0 {
        return Err(CliError::Config(
            "invalid value for `experiment.seeds_per_point`: must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Normalized TOML form of a config with every default spelled out.
pub fn to_toml(cfg: &FileConfig) -> String {
    toml::to_string(cfg).expect("config is always representable as TOML")
}
