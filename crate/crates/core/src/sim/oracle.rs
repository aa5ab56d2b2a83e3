//! Centralized joint-state EKF over the stacked `3N` fleet state. It keeps
//! every inter-robot cross-covariance and serves as a reference for the
//! decentralized filter on small fleets.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2};

use super::record::{CorrectionEvent, Counters, Estimator, MeasurementRecord, RunRecord, StepRecord};
use super::{ScenarioConfig, Trace};
use crate::coordination::plan_step;
use crate::ekf::{CorrectionReport, Rejection, MAX_INNOVATION_CONDITION};
use crate::error::{EkfError, RunError};
use crate::geometry::{angle_diff, wrap_finite, Belief, Pose, RobotId};
use crate::models::{
    control_noise_matrix, measurement_jacobian_observer, measurement_jacobian_target, measurement_predict,
    motion_jacobian_control, motion_jacobian_state, motion_propagate, Control, MeasurementNoiseParams,
    MotionNoiseParams, RelativeMeasurement,
};

pub const MAX_ORACLE_ROBOTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct JointEkf {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    step: u64,
}

impl JointEkf {
    pub fn new(initial: &[Belief]) -> Self {
        let n = initial.len();
        let mut mean = DVector::zeros(3 * n);
        let mut cov = DMatrix::zeros(3 * n, 3 * n);
        for (i, b) in initial.iter().enumerate() {
            mean[3 * i] = b.mean.x;
            mean[3 * i + 1] = b.mean.y;
            mean[3 * i + 2] = b.mean.theta;
            cov.view_mut((3 * i, 3 * i), (3, 3)).copy_from(&b.covariance);
        }
        Self {
            mean,
            cov,
            step: initial.first().map_or(0, |b| b.step),
        }
    }

    pub fn n_robots(&self) -> usize {
        self.mean.len() / 3
    }

    pub fn pose(&self, robot: RobotId) -> Pose {
        let i = 3 * robot.index();
        Pose {
            x: self.mean[i],
            y: self.mean[i + 1],
            theta: self.mean[i + 2],
        }
    }

    /// Marginal belief of one robot.
    pub fn belief(&self, robot: RobotId) -> Belief {
        let i = 3 * robot.index();
        let block: Matrix3<f64> = self.cov.fixed_view::<3, 3>(i, i).into_owned();
        Belief::new(robot, self.step, self.pose(robot), block)
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn predict(
        &mut self,
        controls: &[Control],
        stationary: Option<RobotId>,
        dt: f64,
        noise: &MotionNoiseParams,
    ) -> Result<(), EkfError> {
        let n = self.n_robots();
        let dim = 3 * n;
        let mut g = DMatrix::<f64>::identity(dim, dim);
        let mut added = DMatrix::<f64>::zeros(dim, dim);
        let m = control_noise_matrix(noise);
        for (i, u) in controls.iter().enumerate().take(n) {
            if stationary == Some(RobotId(i)) {
                continue;
            }
            let pose = self.pose(RobotId(i));
            let next = motion_propagate(&pose, u, dt)?;
            let gi = motion_jacobian_state(&pose, u, dt)?;
            let vi = motion_jacobian_control(&pose, u, dt)?;
            g.view_mut((3 * i, 3 * i), (3, 3)).copy_from(&gi);
            added
                .view_mut((3 * i, 3 * i), (3, 3))
                .copy_from(&(vi * m * vi.transpose()));
            self.mean[3 * i] = next.x;
            self.mean[3 * i + 1] = next.y;
            self.mean[3 * i + 2] = next.theta;
        }
        let p = &g * &self.cov * g.transpose() + added;
        self.cov = (&p + p.transpose()) * 0.5;
        self.step += 1;
        Ok(())
    }

    /// Joint update with one relative measurement; rejections leave the state
    /// untouched.
    pub fn update(
        &mut self,
        z: &RelativeMeasurement,
        q: &MeasurementNoiseParams,
    ) -> Result<CorrectionReport, EkfError> {
        let (i, j) = (z.observer.index(), z.target.index());
        let (obs, tgt) = (self.pose(z.observer), self.pose(z.target));
        let trace_before = self.cov.trace();
        let rejected = |rejection| CorrectionReport {
            innovation: Vector2::zeros(),
            nis: f64::NAN,
            trace_before,
            trace_after: trace_before,
            rejection: Some(rejection),
        };
        let Ok(predicted) = measurement_predict(&obs, &tgt) else {
            return Ok(rejected(Rejection::DegenerateGeometry));
        };
        let dim = self.mean.len();
        let mut h = DMatrix::<f64>::zeros(2, dim);
        h.view_mut((0, 3 * i), (2, 3))
            .copy_from(&measurement_jacobian_observer(&obs, &tgt)?);
        h.view_mut((0, 3 * j), (2, 3))
            .copy_from(&measurement_jacobian_target(&obs, &tgt)?);
        let s = &h * &self.cov * h.transpose() + DMatrix::from_column_slice(2, 2, q.covariance().as_slice());
        let Some(s_inv) = s.clone().try_inverse() else {
            return Ok(rejected(Rejection::IllConditioned {
                condition: f64::INFINITY,
            }));
        };
        let eig = s.clone().symmetric_eigen().eigenvalues;
        let condition = eig.max() / eig.min();
        if !(eig.min() > 0.0 && condition < MAX_INNOVATION_CONDITION) {
            return Ok(rejected(Rejection::IllConditioned { condition }));
        }
        let innovation = Vector2::new(z.range - predicted[0], angle_diff(z.bearing, predicted[1])?);
        let nu = DVector::from_column_slice(innovation.as_slice());
        let nis = (nu.transpose() * &s_inv * &nu)[(0, 0)];
        let k = &self.cov * h.transpose() * s_inv;
        self.mean += &k * nu;
        for r in 0..self.n_robots() {
            self.mean[3 * r + 2] = wrap_finite(self.mean[3 * r + 2]);
        }
        let p = (DMatrix::<f64>::identity(dim, dim) - &k * &h) * &self.cov;
        self.cov = (&p + p.transpose()) * 0.5;
        Ok(CorrectionReport {
            innovation,
            nis,
            trace_before,
            trace_after: self.cov.trace(),
            rejection: None,
        })
    }
}

/// Joint EKF fed the same measurements, in the same order, that the
/// decentralized filter's schedule uses.
pub(crate) fn oracle_on(config: &ScenarioConfig, trace: &Trace) -> Result<RunRecord, RunError> {
    let n = config.n_robots;
    if n > MAX_ORACLE_ROBOTS {
        return Err(RunError::Contract(format!(
            "joint oracle supports at most {MAX_ORACLE_ROBOTS} robots, got {n}"
        )));
    }
    let fleet: Vec<RobotId> = (0..n).map(RobotId).collect();
    let q = config.sensor.noise();
    let mut joint = JointEkf::new(&trace.initial_beliefs);
    let mut counters = Counters::default();
    let mut steps = Vec::with_capacity(trace.steps.len());
    for ts in &trace.steps {
        let numerical = |source| RunError::Numerical { step: ts.step, source };
        let schedule = plan_step(&fleet, &config.epoch, ts.step - 1, &ts.measurements, config.seed)
            .map_err(|e| RunError::Contract(e.to_string()))?;
        joint
            .predict(&ts.controls, Some(schedule.stationary), config.dt, &config.motion_noise)
            .map_err(numerical)?;
        let mut used = vec![false; ts.measurements.len()];
        let mut corrections = Vec::new();
        for entry in &schedule.correction_order {
            for &source in &entry.sources {
                let Some((idx, m)) = ts
                    .measurements
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m.observer == entry.robot && m.target == source)
                    .min_by(|a, b| a.1.range.total_cmp(&b.1.range))
                else {
                    continue;
                };
                let report = joint.update(m, &q).map_err(numerical)?;
                counters.count(&report);
                used[idx] = report.applied();
                corrections.push(CorrectionEvent {
                    observer: entry.robot,
                    target: Some(source),
                    report,
                });
            }
        }
        counters.measurements += ts.measurements.len() as u64;
        steps.push(StepRecord {
            step: ts.step,
            truth: ts.truth.clone(),
            beliefs: fleet.iter().map(|&r| joint.belief(r)).collect(),
            measurements: ts
                .measurements
                .iter()
                .zip(used)
                .map(|(m, used)| MeasurementRecord { measurement: *m, used })
                .collect(),
            schedule: Some(schedule),
            corrections,
        });
    }
    Ok(RunRecord {
        estimator: Estimator::Oracle,
        n_robots: n,
        steps,
        counters,
    })
}

/// Joint-state EKF reference run; small fleets only.
pub fn run_centralized_oracle(config: &ScenarioConfig) -> Result<RunRecord, RunError> {
    oracle_on(config, &super::generate_trace(config)?)
}
