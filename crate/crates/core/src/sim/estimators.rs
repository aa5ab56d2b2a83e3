use nalgebra::Vector2;

use super::record::{CorrectionEvent, Counters, Estimator, MeasurementRecord, RunRecord, StepRecord};
use super::{generate_trace, oracle, ScenarioConfig, Trace};
use crate::coordination::{plan_step, EpochPolicy, StepSchedule};
use crate::ekf::{
    correct_against, correct_sequential, predict_moving_with, predict_stationary, FilterOptions, NeighborObservation,
};
use crate::error::RunError;
use crate::geometry::{Belief, Covariance, Pose, RobotId};
use crate::models::{Control, MeasurementNoiseParams, MotionNoiseParams, RelativeMeasurement};

/// Odometry and relative measurements for one timestep.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    /// Belief step reached after this timestep (1-based).
    pub step: u64,
    pub controls: &'a [Control],
    pub measurements: &'a [RelativeMeasurement],
}

/// What the decentralized filter did in one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct DeEkfStep {
    pub schedule: StepSchedule,
    pub corrections: Vec<CorrectionEvent>,
    /// Parallel to the step's measurements.
    pub used: Vec<bool>,
}

/// Fleet of per-robot decentralized EKFs driven one timestep at a time.
#[derive(Debug, Clone)]
pub struct DecentralizedFleet {
    beliefs: Vec<Belief>,
    fleet: Vec<RobotId>,
    dt: f64,
    motion_noise: MotionNoiseParams,
    measurement_noise: MeasurementNoiseParams,
    options: FilterOptions,
    epoch: EpochPolicy,
    seed: u64,
}

impl DecentralizedFleet {
    pub fn new(config: &ScenarioConfig, initial: Vec<Belief>) -> Self {
        Self {
            fleet: (0..initial.len()).map(RobotId).collect(),
            beliefs: initial,
            dt: config.dt,
            motion_noise: config.motion_noise,
            measurement_noise: config.sensor.noise(),
            options: config.filter_options(),
            epoch: config.epoch,
            seed: config.seed,
        }
    }

    pub fn beliefs(&self) -> &[Belief] {
        &self.beliefs
    }

    pub fn step(&mut self, inputs: &StepInputs<'_>) -> Result<DeEkfStep, RunError> {
        let n = self.beliefs.len();
        let step = inputs.step;
        if inputs.controls.len() != n {
            return Err(RunError::Contract(format!(
                "step {step}: {} controls for {n} robots",
                inputs.controls.len()
            )));
        }
        if step == 0 || self.beliefs.iter().any(|b| b.step + 1 != step) {
            return Err(RunError::Contract(format!(
                "step {step} does not follow the current beliefs"
            )));
        }
        let numerical = |source| RunError::Numerical { step, source };

        let schedule = plan_step(&self.fleet, &self.epoch, step - 1, inputs.measurements, self.seed)
            .map_err(|e| RunError::Contract(e.to_string()))?;

        let mut predicted = Vec::with_capacity(n);
        for (b, u) in self.beliefs.iter().zip(inputs.controls) {
            let p = if b.robot == schedule.stationary {
                predict_stationary(b)
            } else {
                predict_moving_with(b, u, self.dt, &self.motion_noise, self.options.covariance_tolerance)
                    .map_err(numerical)?
            };
            predicted.push(p);
        }

        let mut used = vec![false; inputs.measurements.len()];
        let mut corrections = Vec::new();
        for entry in &schedule.correction_order {
            let mut picked = Vec::with_capacity(entry.sources.len());
            let mut observations = Vec::with_capacity(entry.sources.len());
            for &source in &entry.sources {
                let Some(idx) = nearest_measurement(inputs.measurements, entry.robot, source) else {
                    continue;
                };
                picked.push(idx);
                observations.push(NeighborObservation {
                    neighbor: predicted[source.index()],
                    measurement: inputs.measurements[idx],
                });
            }
            let robot = entry.robot.index();
            let (belief, reports) =
                correct_sequential(&predicted[robot], &observations, &self.measurement_noise, &self.options)
                    .map_err(numerical)?;
            predicted[robot] = belief;
            for ((idx, obs), report) in picked.into_iter().zip(&observations).zip(reports) {
                used[idx] = report.applied();
                corrections.push(CorrectionEvent {
                    observer: entry.robot,
                    target: Some(obs.neighbor.robot),
                    report,
                });
            }
        }
        self.beliefs = predicted;
        Ok(DeEkfStep {
            schedule,
            corrections,
            used,
        })
    }
}

fn nearest_measurement(ms: &[RelativeMeasurement], observer: RobotId, target: RobotId) -> Option<usize> {
    ms.iter()
        .enumerate()
        .filter(|(_, m)| m.observer == observer && m.target == target)
        .min_by(|a, b| a.1.range.total_cmp(&b.1.range))
        .map(|(i, _)| i)
}

pub(crate) fn de_ekf_on(config: &ScenarioConfig, trace: &Trace) -> Result<RunRecord, RunError> {
    let mut fleet = DecentralizedFleet::new(config, trace.initial_beliefs.clone());
    let mut counters = Counters::default();
    let mut steps = Vec::with_capacity(trace.steps.len());
    for ts in &trace.steps {
        let out = fleet.step(&StepInputs {
            step: ts.step,
            controls: &ts.controls,
            measurements: &ts.measurements,
        })?;
        counters.measurements += ts.measurements.len() as u64;
        counters.belief_transfers += out.schedule.belief_transfers() as u64;
        out.corrections.iter().for_each(|c| counters.count(&c.report));
        steps.push(StepRecord {
            step: ts.step,
            truth: ts.truth.clone(),
            beliefs: fleet.beliefs().to_vec(),
            measurements: ts
                .measurements
                .iter()
                .zip(&out.used)
                .map(|(m, &used)| MeasurementRecord { measurement: *m, used })
                .collect(),
            schedule: Some(out.schedule),
            corrections: out.corrections,
        });
    }
    Ok(RunRecord {
        estimator: Estimator::DeEkf,
        n_robots: config.n_robots,
        steps,
        counters,
    })
}

fn predict_all(
    config: &ScenarioConfig,
    beliefs: &[Belief],
    controls: &[Control],
    stationary: RobotId,
    step: u64,
) -> Result<Vec<Belief>, RunError> {
    beliefs
        .iter()
        .zip(controls)
        .map(|(b, u)| {
            if b.robot == stationary {
                Ok(predict_stationary(b))
            } else {
                predict_moving_with(
                    b,
                    u,
                    config.dt,
                    &config.motion_noise,
                    config.filter.covariance_tolerance,
                )
                .map_err(|source| RunError::Numerical { step, source })
            }
        })
        .collect()
}

pub(crate) fn dr_on(config: &ScenarioConfig, trace: &Trace) -> Result<RunRecord, RunError> {
    let mut beliefs = trace.initial_beliefs.clone();
    let mut steps = Vec::with_capacity(trace.steps.len());
    for ts in &trace.steps {
        beliefs = predict_all(config, &beliefs, &ts.controls, ts.stationary, ts.step)?;
        steps.push(StepRecord {
            step: ts.step,
            truth: ts.truth.clone(),
            beliefs: beliefs.clone(),
            measurements: Vec::new(),
            schedule: None,
            corrections: Vec::new(),
        });
    }
    Ok(RunRecord {
        estimator: Estimator::Dr,
        n_robots: config.n_robots,
        steps,
        counters: Counters::default(),
    })
}

pub(crate) fn landmark_ekf_on(config: &ScenarioConfig, trace: &Trace) -> Result<RunRecord, RunError> {
    let q = config.sensor.noise();
    let opts = config.filter_options();
    let known = Covariance::zeros();
    let mut beliefs = trace.initial_beliefs.clone();
    let mut counters = Counters::default();
    let mut steps = Vec::with_capacity(trace.steps.len());
    for ts in &trace.steps {
        beliefs = predict_all(config, &beliefs, &ts.controls, ts.stationary, ts.step)?;
        let mut corrections = Vec::new();
        for m in &ts.landmark_measurements {
            let Some(&[x, y]) = config.landmarks.get(m.landmark) else {
                continue;
            };
            let landmark = Pose { x, y, theta: 0.0 };
            let robot = m.observer.index();
            let out = correct_against(
                &beliefs[robot],
                &landmark,
                &known,
                &Vector2::new(m.range, m.bearing),
                &q,
                &opts,
            )
            .map_err(|source| RunError::Numerical { step: ts.step, source })?;
            beliefs[robot] = out.belief;
            counters.measurements += 1;
            counters.count(&out.report);
            corrections.push(CorrectionEvent {
                observer: m.observer,
                target: None,
                report: out.report,
            });
        }
        steps.push(StepRecord {
            step: ts.step,
            truth: ts.truth.clone(),
            beliefs: beliefs.clone(),
            measurements: Vec::new(),
            schedule: None,
            corrections,
        });
    }
    Ok(RunRecord {
        estimator: Estimator::LEkf,
        n_robots: config.n_robots,
        steps,
        counters,
    })
}

/// Runs `estimator` over an already generated trace.
pub fn run_on_trace(config: &ScenarioConfig, trace: &Trace, estimator: Estimator) -> Result<RunRecord, RunError> {
    match estimator {
        Estimator::Dr => dr_on(config, trace),
        Estimator::LEkf => landmark_ekf_on(config, trace),
        Estimator::DeEkf => de_ekf_on(config, trace),
        Estimator::Oracle => oracle::oracle_on(config, trace),
    }
}

/// Decentralized EKF with a temporary stationary landmark.
pub fn run_de_ekf(config: &ScenarioConfig) -> Result<RunRecord, RunError> {
    de_ekf_on(config, &generate_trace(config)?)
}

/// Dead reckoning: prediction only.
pub fn run_dr(config: &ScenarioConfig) -> Result<RunRecord, RunError> {
    dr_on(config, &generate_trace(config)?)
}

/// Per-robot EKF against the configured known landmarks.
pub fn run_landmark_ekf(config: &ScenarioConfig) -> Result<RunRecord, RunError> {
    landmark_ekf_on(config, &generate_trace(config)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ekf::innovation_covariance;
    use crate::sim::ProcessNoise;

    fn small(steps: u64) -> ScenarioConfig {
        ScenarioConfig {
            n_steps: steps,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn de_ekf_is_deterministic() {
        let cfg = small(200);
        assert_eq!(run_de_ekf(&cfg).unwrap(), run_de_ekf(&cfg).unwrap());
    }

    #[test]
    fn zero_availability_reduces_to_dead_reckoning() {
        let mut cfg = small(300);
        cfg.sensor.availability = 0.0;
        let de = run_de_ekf(&cfg).unwrap();
        let dr = run_dr(&cfg).unwrap();
        for (a, b) in de.steps.iter().zip(&dr.steps) {
            assert_eq!(a.beliefs, b.beliefs);
        }
        assert_eq!(de.counters.applied, 0);
    }

    #[test]
    fn dead_reckoning_without_noise_is_exact() {
        let mut cfg = small(200);
        cfg.motion_noise = MotionNoiseParams {
            sigma_v: 0.0,
            sigma_omega: 0.0,
        };
        cfg.process_noise = Some(ProcessNoise {
            sigma_x: 0.0,
            sigma_y: 0.0,
            sigma_theta: 0.0,
        });
        cfg.initial.sigma_x = 0.0;
        cfg.initial.sigma_y = 0.0;
        cfg.initial.sigma_theta = 0.0;
        let dr = run_dr(&cfg).unwrap();
        for s in &dr.steps {
            for (t, b) in s.truth.iter().zip(&s.beliefs) {
                assert!((t.x - b.mean.x).abs() < 1e-12 && (t.y - b.mean.y).abs() < 1e-12);
            }
        }
        assert_eq!(dr.counters.measurements, 0);
    }

    #[test]
    fn landmark_ekf_without_landmarks_is_dead_reckoning() {
        let mut cfg = small(100);
        cfg.landmarks.clear();
        let trace = generate_trace(&cfg).unwrap();
        let l = landmark_ekf_on(&cfg, &trace).unwrap();
        let d = dr_on(&cfg, &trace).unwrap();
        for (a, b) in l.steps.iter().zip(&d.steps) {
            assert_eq!(a.beliefs, b.beliefs);
        }
    }

    #[test]
    fn known_landmark_innovation_covariance() {
        // A landmark is a reference with zero covariance: S = H P H^T + Q.
        let q = MeasurementNoiseParams {
            sigma_r: 0.01,
            sigma_phi: 0.02,
        };
        let obs = Belief::new(
            RobotId(0),
            0,
            Pose {
                x: 1.0,
                y: 2.0,
                theta: 0.4,
            },
            Covariance::identity() * 0.3,
        );
        let lm = Belief::new(
            RobotId(1),
            0,
            Pose {
                x: 5.0,
                y: 5.0,
                theta: 0.0,
            },
            Covariance::zeros(),
        );
        let s = innovation_covariance(&obs, &lm, &q).unwrap();
        let h = crate::models::measurement_jacobian_observer(&obs.mean, &lm.mean).unwrap();
        assert_eq!(s, h * obs.covariance * h.transpose() + q.covariance());
    }

    #[test]
    fn fleet_rejects_out_of_order_steps() {
        let cfg = small(10);
        let trace = generate_trace(&cfg).unwrap();
        let mut fleet = DecentralizedFleet::new(&cfg, trace.initial_beliefs.clone());
        let ts = &trace.steps[1];
        let r = fleet.step(&StepInputs {
            step: ts.step,
            controls: &ts.controls,
            measurements: &ts.measurements,
        });
        assert!(matches!(r, Err(RunError::Contract(_))));
    }
}
