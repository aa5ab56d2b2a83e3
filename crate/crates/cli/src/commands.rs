use std::path::{Path, PathBuf};

use coloc_core::batch::{dropout_sweep, run_batch, JobOutcome};
use coloc_core::metrics::mean_std;
use coloc_core::sim::{generate_trace, run_on_trace, Trace};
use coloc_core::{Estimator, RunRecord};
use serde::Serialize;

use crate::artifacts::{self, num, Csv, EstimatorMetrics, UNITS};
use crate::config::{self, FileConfig};
use crate::error::CliError;
use crate::replay::read_log;

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    /// Replay input, relative to the working directory of the invocation.
    #[serde(skip_serializing_if = "Option::is_none")]
    log: Option<String>,
    config: &'a FileConfig,
    artifacts: Vec<String>,
    units: Vec<(&'static str, &'static str)>,
    summaries: Vec<EstimatorMetrics>,
}

impl<'a> Manifest<'a> {
    fn new(command: &'static str, config: &'a FileConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: config.scenario.seed,
            log: None,
            config,
            artifacts: Vec::new(),
            units: UNITS.to_vec(),
            summaries: Vec::new(),
        }
    }

    fn write(self, out: &Path) -> Result<(), CliError> {
        artifacts::write_json_atomic(&out.join("manifest.json"), &self)
    }
}

/// Tracks artifact paths relative to the output directory.
struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Result<Self, CliError> {
        artifacts::ensure_dir(dir)?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }
}

fn write_run_artifacts(
    out: &mut Outputs<'_>,
    trace: &Trace,
    records: &[RunRecord],
    with_truth: bool,
) -> Result<(), CliError> {
    if with_truth {
        let mut rows: Vec<(u64, &[coloc_core::Pose])> = vec![(0, &trace.initial_truth)];
        rows.extend(trace.steps.iter().map(|s| (s.step, s.truth.as_slice())));
        artifacts::write_truth(&out.path("truth.csv"), &rows)?;
    }
    for rec in records {
        let name = format!("beliefs_{}.csv", rec.estimator.file_stem());
        artifacts::write_beliefs(&out.path(&name), &trace.initial_beliefs, rec)?;
    }
    let de_ekf = records.iter().find(|r| r.estimator == Estimator::DeEkf);
    artifacts::write_measurements(&out.path("measurements.csv"), trace, de_ekf)?;
    if let Some(rec) = records.iter().find(|r| r.steps.iter().all(|s| s.schedule.is_some())) {
        artifacts::write_schedule(&out.path("schedule.csv"), rec)?;
    }
    if with_truth {
        artifacts::write_errors(&out.path("errors.csv"), records)?;
    }
    let metrics: Vec<EstimatorMetrics> = records.iter().map(EstimatorMetrics::of).collect();
    artifacts::write_metrics(&out.path("metrics.json"), &metrics)?;
    Ok(())
}

fn print_summaries(records: &[RunRecord]) {
    for rec in records {
        match rec.summary() {
            Some(s) => println!(
                "{:>7}: mean position error {:.4} m, rms position error {:.4} m, mean heading error {:.4} rad",
                rec.estimator.name(),
                s.mean_norm_rmse_position,
                s.standard_rmse_position,
                s.mean_norm_rmse_orientation
            ),
            None => println!("{:>7}: no ground truth, accuracy not evaluated", rec.estimator.name()),
        }
    }
}

pub fn simulate(cfg: &FileConfig, out_dir: &Path) -> Result<(), CliError> {
    let scenario = &cfg.scenario;
    let trace = generate_trace(scenario)?;
    let records = cfg
        .experiment
        .estimators
        .iter()
        .map(|&e| run_on_trace(scenario, &trace, e))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Outputs::new(out_dir)?;
    write_run_artifacts(&mut out, &trace, &records, true)?;
    artifacts::write_log(&out.path("log.csv"), &trace)?;

    let mut manifest = Manifest::new("simulate", cfg);
    manifest.artifacts = out.written;
    manifest.summaries = records.iter().map(EstimatorMetrics::of).collect();
    manifest.write(out_dir)?;
    print_summaries(&records);
    Ok(())
}

const SWEEP_RUN_HEADER: [&str; 11] = [
    "fraction",
    "seed",
    "estimator",
    "mean_norm_rmse_position",
    "standard_rmse_position",
    "mean_norm_rmse_orientation",
    "standard_rmse_orientation",
    "mean_nees",
    "final_position_error",
    "measurements",
    "applied",
];

const SWEEP_AGGREGATE_HEADER: [&str; 7] = [
    "fraction",
    "estimator",
    "runs",
    "mean_norm_rmse_position_mean",
    "mean_norm_rmse_position_std",
    "mean_norm_rmse_position_se",
    "standard_rmse_position_mean",
];

pub fn sweep_dropout(cfg: &FileConfig, out_dir: &Path) -> Result<(), CliError> {
    let exp = &cfg.experiment;
    let jobs = dropout_sweep(&cfg.scenario, &exp.fractions, exp.seeds_per_point);
    let outcomes = run_batch(&jobs, &exp.estimators)
        .into_iter()
        .collect::<Result<Vec<JobOutcome>, _>>()?;

    let mut out = Outputs::new(out_dir)?;
    let mut runs = Csv::create(&out.path("sweep_runs.csv"), &SWEEP_RUN_HEADER)?;
    for job in &outcomes {
        for o in &job.outcomes {
            let s = &o.summary;
            runs.row([
                num(job.availability),
                job.seed.to_string(),
                o.estimator.name().to_string(),
                num(s.mean_norm_rmse_position),
                num(s.standard_rmse_position),
                num(s.mean_norm_rmse_orientation),
                num(s.standard_rmse_orientation),
                num(s.mean_nees),
                num(s.final_position_error),
                o.counters.measurements.to_string(),
                o.counters.applied.to_string(),
            ])?;
        }
    }
    runs.finish()?;

    let mut agg = Csv::create(&out.path("sweep_aggregate.csv"), &SWEEP_AGGREGATE_HEADER)?;
    let per_point = exp.seeds_per_point as usize;
    for (k, &fraction) in exp.fractions.iter().enumerate() {
        let block = &outcomes[k * per_point..(k + 1) * per_point];
        for &estimator in &exp.estimators {
            let pick = |f: fn(&coloc_core::sim::RunSummary) -> f64| -> Vec<f64> {
                block
                    .iter()
                    .filter_map(|j| j.get(estimator))
                    .map(|o| f(&o.summary))
                    .collect()
            };
            let mean_norm = pick(|s| s.mean_norm_rmse_position);
            let (mean, std) = mean_std(&mean_norm);
            let (standard_mean, _) = mean_std(&pick(|s| s.standard_rmse_position));
            agg.row([
                num(fraction),
                estimator.name().to_string(),
                mean_norm.len().to_string(),
                num(mean),
                num(std),
                num(std / (mean_norm.len() as f64).sqrt()),
                num(standard_mean),
            ])?;
        }
    }
    agg.finish()?;

    let mut manifest = Manifest::new("sweep-dropout", cfg);
    manifest.artifacts = out.written;
    manifest.write(out_dir)?;
    println!(
        "{} runs over {} fractions written to {}",
        outcomes.len() * exp.estimators.len(),
        exp.fractions.len(),
        out_dir.display()
    );
    Ok(())
}

/// Runs the decentralized filter over a recorded log.
pub fn replay(log_path: &Path, cfg: &FileConfig, out_dir: &Path) -> Result<(), CliError> {
    let log = read_log(log_path)?;
    let mut cfg = cfg.clone();
    cfg.scenario.n_robots = log.n_robots();
    cfg.scenario.n_steps = log.steps.len() as u64;
    cfg.experiment.estimators = vec![Estimator::DeEkf];
    config::validate(&cfg)?;
    let trace = log.to_trace(&cfg.scenario)?;
    let record = run_on_trace(&cfg.scenario, &trace, Estimator::DeEkf)?;
    let records = [record];

    let mut out = Outputs::new(out_dir)?;
    write_run_artifacts(
        &mut out,
        &trace,
        &records,
        log.has_truth() && log.initial_truth.is_some(),
    )?;

    let mut manifest = Manifest::new("replay", &cfg);
    manifest.log = Some(log_path.display().to_string());
    manifest.artifacts = out.written;
    manifest.summaries = records.iter().map(EstimatorMetrics::of).collect();
    manifest.write(out_dir)?;
    print_summaries(&records);
    Ok(())
}

/// Prints the effective config with defaults filled in.
pub fn validate(cfg: &FileConfig) -> Result<(), CliError> {
    print!("{}", config::to_toml(cfg));
    Ok(())
}
