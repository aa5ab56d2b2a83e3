//! Independent runs over many scenarios (seed sweeps, dropout sweeps).
//!
//! Each job generates its own trace from its own seed, so results do not
//! depend on execution order. With the `parallel` feature (default) jobs run
//! on the rayon pool; without it they run sequentially. Output order always
//! matches input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::RunError;
use crate::sim::{generate_trace, run_on_trace, Counters, Estimator, RunSummary, ScenarioConfig};

/// Summary of one estimator on one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutcome {
    pub estimator: Estimator,
    pub summary: RunSummary,
    pub counters: Counters,
    /// Fleet-mean position error at the last step, m.
    pub final_position_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub seed: u64,
    pub availability: f64,
    pub outcomes: Vec<EstimatorOutcome>,
}

impl JobOutcome {
    pub fn get(&self, estimator: Estimator) -> Option<&EstimatorOutcome> {
        self.outcomes.iter().find(|o| o.estimator == estimator)
    }
}

/// Runs every estimator on one scenario and keeps only the summaries.
pub fn run_job(config: &ScenarioConfig, estimators: &[Estimator]) -> Result<JobOutcome, RunError> {
    let trace = generate_trace(config)?;
    let outcomes = estimators
        .iter()
        .map(|&estimator| {
            let record = run_on_trace(config, &trace, estimator)?;
            let summary = record
                .summary()
                .ok_or_else(|| RunError::Contract("simulated run has no ground truth".into()))?;
            Ok(EstimatorOutcome {
                estimator,
                final_position_error: summary.final_position_error,
                summary,
                counters: record.counters,
            })
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    Ok(JobOutcome {
        seed: config.seed,
        availability: config.sensor.availability,
        outcomes,
    })
}

pub fn run_batch_sequential(jobs: &[ScenarioConfig], estimators: &[Estimator]) -> Vec<Result<JobOutcome, RunError>> {
    jobs.iter().map(|c| run_job(c, estimators)).collect()
}

#[cfg(feature = "parallel")]
pub fn run_batch_parallel(jobs: &[ScenarioConfig], estimators: &[Estimator]) -> Vec<Result<JobOutcome, RunError>> {
    jobs.par_iter().map(|c| run_job(c, estimators)).collect()
}

/// Parallel when the `parallel` feature is enabled, sequential otherwise.
pub fn run_batch(jobs: &[ScenarioConfig], estimators: &[Estimator]) -> Vec<Result<JobOutcome, RunError>> {
    #[cfg(feature = "parallel")]
    {
        run_batch_parallel(jobs, estimators)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_sequential(jobs, estimators)
    }
}

/// Copies of `base` with seeds `base.seed + 0 .. base.seed + count`.
pub fn seed_sweep(base: &ScenarioConfig, count: u64) -> Vec<ScenarioConfig> {
    (0..count)
        .map(|i| ScenarioConfig {
            seed: base.seed.wrapping_add(i),
            ..base.clone()
        })
        .collect()
}

/// Fraction-major grid of `seed_sweep` jobs, one block per availability.
pub fn dropout_sweep(base: &ScenarioConfig, fractions: &[f64], seeds_per_point: u64) -> Vec<ScenarioConfig> {
    fractions
        .iter()
        .flat_map(|&a| {
            let mut cfg = base.clone();
            cfg.sensor.availability = a;
            seed_sweep(&cfg, seeds_per_point)
        })
        .collect()
}
