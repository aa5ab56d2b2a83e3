use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coordination::StepSchedule;
use crate::ekf::{CorrectionReport, Rejection};
use crate::geometry::{Belief, Pose, RobotId};
use crate::metrics::{self, ErrorSeries, RmseFormula};
use crate::models::RelativeMeasurement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Odometry only.
    Dr,
    /// Independent EKF per robot against known landmarks.
    LEkf,
    /// Decentralized EKF with a temporary stationary landmark.
    DeEkf,
    /// Joint-state EKF over the whole fleet.
    Oracle,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Dr, Estimator::LEkf, Estimator::DeEkf, Estimator::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Dr => "dr",
            Estimator::LEkf => "l-ekf",
            Estimator::DeEkf => "de-ekf",
            Estimator::Oracle => "oracle",
        }
    }

    /// Suffix used in artifact file names.
    pub fn file_stem(self) -> &'static str {
        match self {
            Estimator::Dr => "dr",
            Estimator::LEkf => "l_ekf",
            Estimator::DeEkf => "de_ekf",
            Estimator::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "dr" => Ok(Estimator::Dr),
            "l-ekf" | "lekf" => Ok(Estimator::LEkf),
            "de-ekf" | "deekf" => Ok(Estimator::DeEkf),
            "oracle" => Ok(Estimator::Oracle),
            other => Err(format!(
                "unknown estimator `{other}` (expected dr, l-ekf, de-ekf, oracle)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord {
    pub measurement: RelativeMeasurement,
    /// Whether the estimator applied this measurement.
    pub used: bool,
}

/// One correction attempt. `target` is `None` for landmark corrections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionEvent {
    pub observer: RobotId,
    pub target: Option<RobotId>,
    pub report: CorrectionReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    /// Empty when ground truth is unknown (replayed logs without truth rows).
    pub truth: Vec<Pose>,
    pub beliefs: Vec<Belief>,
    pub measurements: Vec<MeasurementRecord>,
    pub schedule: Option<StepSchedule>,
    pub corrections: Vec<CorrectionEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub measurements: u64,
    pub applied: u64,
    pub rejected_gate: u64,
    pub rejected_conditioning: u64,
    pub rejected_geometry: u64,
    pub belief_transfers: u64,
}

impl Counters {
    pub fn count(&mut self, report: &CorrectionReport) {
        match report.rejection {
            None => self.applied += 1,
            Some(Rejection::Gated { .. }) => self.rejected_gate += 1,
            Some(Rejection::IllConditioned { .. }) => self.rejected_conditioning += 1,
            Some(Rejection::DegenerateGeometry) => self.rejected_geometry += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub estimator: Estimator,
    pub n_robots: usize,
    pub steps: Vec<StepRecord>,
    pub counters: Counters,
}

/// Fleet-averaged accuracy of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Mean Euclidean position error over robots and steps, m.
    pub mean_norm_rmse_position: f64,
    pub standard_rmse_position: f64,
    /// Mean absolute heading error, rad.
    pub mean_norm_rmse_orientation: f64,
    pub standard_rmse_orientation: f64,
    pub mean_nees: f64,
    pub final_position_error: f64,
}

impl RunRecord {
    pub fn has_truth(&self) -> bool {
        self.steps.iter().all(|s| s.truth.len() == self.n_robots)
    }

    pub fn truth_series(&self, robot: RobotId) -> Vec<Pose> {
        self.steps.iter().map(|s| s.truth[robot.index()]).collect()
    }

    pub fn belief_series(&self, robot: RobotId) -> Vec<Belief> {
        self.steps.iter().map(|s| s.beliefs[robot.index()]).collect()
    }

    pub fn errors(&self, robot: RobotId) -> Option<ErrorSeries> {
        if !self.has_truth() || self.steps.is_empty() {
            return None;
        }
        ErrorSeries::from_beliefs(&self.truth_series(robot), &self.belief_series(robot)).ok()
    }

    /// Fleet-mean position error at each step.
    pub fn mean_position_error_per_step(&self) -> Option<Vec<f64>> {
        if !self.has_truth() {
            return None;
        }
        Some(
            self.steps
                .iter()
                .map(|s| {
                    s.truth
                        .iter()
                        .zip(&s.beliefs)
                        .map(|(t, b)| metrics::position_error(t, &b.mean))
                        .sum::<f64>()
                        / self.n_robots as f64
                })
                .collect(),
        )
    }

    pub fn summary(&self) -> Option<RunSummary> {
        if !self.has_truth() || self.steps.is_empty() {
            return None;
        }
        let mut pos_mean = 0.0;
        let mut pos_std = 0.0;
        let mut ori_mean = 0.0;
        let mut ori_std = 0.0;
        let mut nees = Vec::new();
        for r in 0..self.n_robots {
            let robot = RobotId(r);
            let truth = self.truth_series(robot);
            let est: Vec<Pose> = self.belief_series(robot).iter().map(|b| b.mean).collect();
            pos_mean += metrics::mean_norm_rmse(&truth, &est).ok()?;
            pos_std += metrics::standard_rmse(&truth, &est).ok()?;
            ori_mean += metrics::orientation_rmse(&truth, &est, RmseFormula::MeanNorm).ok()?;
            ori_std += metrics::orientation_rmse(&truth, &est, RmseFormula::Standard).ok()?;
            nees.extend(self.errors(robot)?.nees);
        }
        let n = self.n_robots as f64;
        Some(RunSummary {
            mean_norm_rmse_position: pos_mean / n,
            standard_rmse_position: pos_std / n,
            mean_norm_rmse_orientation: ori_mean / n,
            standard_rmse_orientation: ori_std / n,
            mean_nees: metrics::mean_finite(&nees),
            final_position_error: *self.mean_position_error_per_step()?.last()?,
        })
    }
}
