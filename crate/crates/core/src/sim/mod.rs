//! Seeded ground-truth world and the estimators compared on it.

mod config;
mod estimators;
mod oracle;
mod record;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use config::{
    ControlPolicy, FilterConfig, InitialConditions, ProcessNoise, ScenarioConfig, SensorParams, TruthNoise,
};
pub use estimators::{run_de_ekf, run_dr, run_landmark_ekf, run_on_trace, DeEkfStep, DecentralizedFleet, StepInputs};
pub use oracle::{run_centralized_oracle, JointEkf, MAX_ORACLE_ROBOTS};
pub use record::{CorrectionEvent, Counters, Estimator, MeasurementRecord, RunRecord, RunSummary, StepRecord};

use crate::coordination::select_stationary;
use crate::error::RunError;
use crate::geometry::{wrap_finite, Belief, Pose, RobotId};
use crate::models::{measurement_predict, motion_propagate, Control, RelativeMeasurement, RANGE_EPSILON};
use crate::rng::{self, Purpose};

/// True poses of the whole fleet after `step` completed timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub truth: Vec<Pose>,
    pub step: u64,
}

/// Range-bearing observation of a known landmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkMeasurement {
    pub observer: RobotId,
    pub landmark: usize,
    pub range: f64,
    pub bearing: f64,
    pub step: u64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Advances every true pose by one step. `noise_streams[i]` drives robot
/// `i`; the `stationary` robot, if any, stays exactly where it is.
pub fn step_truth(
    world: &WorldState,
    controls: &[Control],
    stationary: Option<RobotId>,
    dt: f64,
    noise: &TruthNoise,
    noise_streams: &mut [ChaCha8Rng],
) -> Result<WorldState, RunError> {
    let n = world.truth.len();
    if controls.len() != n || noise_streams.len() != n {
        return Err(RunError::Contract(format!(
            "fleet of {n} robots given {} controls and {} noise streams",
            controls.len(),
            noise_streams.len()
        )));
    }
    let mut truth = Vec::with_capacity(n);
    for (i, (pose, u)) in world.truth.iter().zip(controls).enumerate() {
        // Draw unconditionally so stream alignment does not depend on the schedule.
        let rng = &mut noise_streams[i];
        let (nx, ny, nt) = (normal(rng), normal(rng), normal(rng));
        if stationary == Some(RobotId(i)) {
            truth.push(*pose);
            continue;
        }
        let executed = match noise {
            TruthNoise::Control(m) => Control::new(u.v + m.sigma_v * nx, u.omega + m.sigma_omega * ny),
            TruthNoise::State(_) => *u,
        };
        let moved = motion_propagate(pose, &executed, dt).map_err(|e| RunError::Numerical {
            step: world.step + 1,
            source: e.into(),
        })?;
        truth.push(match noise {
            TruthNoise::Control(_) => moved,
            TruthNoise::State(p) => Pose {
                x: moved.x + p.sigma_x * nx,
                y: moved.y + p.sigma_y * ny,
                theta: wrap_finite(moved.theta + p.sigma_theta * nt),
            },
        });
    }
    Ok(WorldState {
        truth,
        step: world.step + 1,
    })
}

/// Noisy range-bearing measurements between all ordered robot pairs.
/// `sensing_streams[i]` drives observer `i`.
pub fn sense(
    world: &WorldState,
    params: &SensorParams,
    sensing_streams: &mut [ChaCha8Rng],
) -> Vec<RelativeMeasurement> {
    let n = world.truth.len();
    let mut out = Vec::new();
    for (i, rng) in sensing_streams.iter_mut().enumerate().take(n) {
        for j in 0..n {
            if i == j {
                continue;
            }
            let draw: f64 = rng.random();
            let (nr, nb) = (normal(rng), normal(rng));
            let (obs, tgt) = (&world.truth[i], &world.truth[j]);
            let distance = obs.distance_to(tgt);
            if draw >= params.availability || distance <= RANGE_EPSILON || !params.in_range(distance) {
                continue;
            }
            let Ok(z) = measurement_predict(obs, tgt) else { continue };
            out.push(RelativeMeasurement {
                observer: RobotId(i),
                target: RobotId(j),
                range: (z[0] + params.sigma_r * nr).max(0.0),
                bearing: wrap_finite(z[1] + params.sigma_phi * nb),
                step: world.step,
            });
        }
    }
    out
}

/// Noisy measurements from every robot to every known landmark.
pub fn sense_landmarks(
    world: &WorldState,
    landmarks: &[[f64; 2]],
    params: &SensorParams,
    streams: &mut [ChaCha8Rng],
) -> Vec<LandmarkMeasurement> {
    let mut out = Vec::new();
    for (i, rng) in streams.iter_mut().enumerate().take(world.truth.len()) {
        for (l, pos) in landmarks.iter().enumerate() {
            let draw: f64 = rng.random();
            let (nr, nb) = (normal(rng), normal(rng));
            let lm = Pose {
                x: pos[0],
                y: pos[1],
                theta: 0.0,
            };
            let obs = &world.truth[i];
            let distance = obs.distance_to(&lm);
            if draw >= params.availability || distance <= RANGE_EPSILON || !params.in_range(distance) {
                continue;
            }
            let Ok(z) = measurement_predict(obs, &lm) else { continue };
            out.push(LandmarkMeasurement {
                observer: RobotId(i),
                landmark: l,
                range: (z[0] + params.sigma_r * nr).max(0.0),
                bearing: wrap_finite(z[1] + params.sigma_phi * nb),
                step: world.step,
            });
        }
    }
    out
}

/// Everything that happens in one simulated timestep, shared by all estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// Belief step reached after this timestep (1-based).
    pub step: u64,
    pub stationary: RobotId,
    /// Odometry reported by each robot.
    pub controls: Vec<Control>,
    pub truth: Vec<Pose>,
    pub measurements: Vec<RelativeMeasurement>,
    pub landmark_measurements: Vec<LandmarkMeasurement>,
}

/// A complete simulated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub initial_truth: Vec<Pose>,
    pub initial_beliefs: Vec<Belief>,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn fleet(&self) -> Vec<RobotId> {
        (0..self.initial_truth.len()).map(RobotId).collect()
    }
}

fn streams(seed: u64, purpose: Purpose, n: usize) -> Vec<ChaCha8Rng> {
    (0..n as u64).map(|i| rng::stream(seed, purpose, i)).collect()
}

pub fn initial_truth(config: &ScenarioConfig) -> Vec<Pose> {
    let init = &config.initial;
    let hw = init.arena_half_width;
    (0..config.n_robots)
        .map(|i| {
            let mut rng = rng::stream(config.seed, Purpose::InitialTruth, i as u64);
            let (mut x, mut y) = (
                init.position_scale * normal(&mut rng),
                init.position_scale * normal(&mut rng),
            );
            let theta = wrap_finite(init.heading_scale * normal(&mut rng));
            if init.clamp_to_arena {
                x = x.clamp(-hw, hw);
                y = y.clamp(-hw, hw);
            }
            Pose { x, y, theta }
        })
        .collect()
}

pub fn initial_beliefs(config: &ScenarioConfig, truth: &[Pose]) -> Vec<Belief> {
    let init = &config.initial;
    let covariance = init.covariance();
    truth
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut rng = rng::stream(config.seed, Purpose::InitialBelief, i as u64);
            let mean = Pose {
                x: t.x + init.sigma_x * normal(&mut rng),
                y: t.y + init.sigma_y * normal(&mut rng),
                theta: wrap_finite(t.theta + init.sigma_theta * normal(&mut rng)),
            };
            Belief::new(RobotId(i), 0, mean, covariance)
        })
        .collect()
}

/// Simulates ground truth, odometry and measurements for `config`.
pub fn generate_trace(config: &ScenarioConfig) -> Result<Trace, RunError> {
    config.validate()?;
    let n = config.n_robots;
    let fleet: Vec<RobotId> = (0..n).map(RobotId).collect();
    let truth_noise = config.truth_noise();

    let truth0 = initial_truth(config);
    let beliefs0 = initial_beliefs(config, &truth0);
    let mut control_rngs = streams(config.seed, Purpose::Control, n);
    let mut noise_rngs = streams(config.seed, Purpose::ProcessNoise, n);
    let mut sense_rngs = streams(config.seed, Purpose::Sensing, n);
    let mut landmark_rngs = streams(config.seed, Purpose::LandmarkSensing, n);

    let mut world = WorldState {
        truth: truth0.clone(),
        step: 0,
    };
    let mut steps = Vec::with_capacity(config.n_steps as usize);
    for k in 0..config.n_steps {
        let epoch = config
            .epoch
            .epoch_of(k)
            .map_err(|e| RunError::Contract(e.to_string()))?;
        let stationary = select_stationary(&fleet, epoch, &config.epoch, config.seed)
            .map_err(|e| RunError::Contract(e.to_string()))?;
        let controls: Vec<Control> = control_rngs
            .iter_mut()
            .enumerate()
            .map(|(i, rng)| {
                let omega = config.control.omega_scale * normal(rng);
                if RobotId(i) == stationary {
                    Control::ZERO
                } else {
                    Control::new(config.control.v, omega)
                }
            })
            .collect();
        world = step_truth(
            &world,
            &controls,
            Some(stationary),
            config.dt,
            &truth_noise,
            &mut noise_rngs,
        )?;
        let measurements = sense(&world, &config.sensor, &mut sense_rngs);
        let landmark_measurements = sense_landmarks(&world, &config.landmarks, &config.sensor, &mut landmark_rngs);
        steps.push(TraceStep {
            step: world.step,
            stationary,
            controls,
            truth: world.truth.clone(),
            measurements,
            landmark_measurements,
        });
    }
    Ok(Trace {
        initial_truth: truth0,
        initial_beliefs: beliefs0,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_world(n: usize) -> WorldState {
        WorldState {
            truth: (0..n)
                .map(|i| Pose {
                    x: i as f64,
                    y: -(i as f64),
                    theta: 0.1 * i as f64,
                })
                .collect(),
            step: 0,
        }
    }

    const NO_NOISE: TruthNoise = TruthNoise::State(ProcessNoise {
        sigma_x: 0.0,
        sigma_y: 0.0,
        sigma_theta: 0.0,
    });

    #[test]
    fn zero_controls_zero_noise_keep_world() {
        let w = quiet_world(4);
        let mut rngs = streams(3, Purpose::ProcessNoise, 4);
        let next = step_truth(&w, &[Control::ZERO; 4], None, 0.05, &NO_NOISE, &mut rngs).unwrap();
        assert_eq!(next.truth, w.truth);
        assert_eq!(next.step, 1);
    }

    #[test]
    fn stationary_robot_ignores_noise() {
        let w = quiet_world(3);
        let noisy = TruthNoise::Control(crate::models::MotionNoiseParams {
            sigma_v: 1.0,
            sigma_omega: 1.0,
        });
        let mut rngs = streams(3, Purpose::ProcessNoise, 3);
        let next = step_truth(
            &w,
            &[Control::new(0.2, 0.1); 3],
            Some(RobotId(1)),
            0.05,
            &noisy,
            &mut rngs,
        )
        .unwrap();
        assert_eq!(next.truth[1], w.truth[1]);
        assert_ne!(next.truth[0], w.truth[0]);
    }

    #[test]
    fn straight_path_length() {
        let mut w = WorldState {
            truth: vec![Pose::origin()],
            step: 0,
        };
        let mut rngs = streams(1, Purpose::ProcessNoise, 1);
        for _ in 0..1000 {
            w = step_truth(&w, &[Control::new(0.2, 0.0)], None, 0.05, &NO_NOISE, &mut rngs).unwrap();
        }
        assert!((w.truth[0].x - 10.0).abs() < 1e-9);
    }

    #[test]
    fn controls_length_is_checked() {
        let w = quiet_world(2);
        let mut rngs = streams(3, Purpose::ProcessNoise, 2);
        assert!(step_truth(&w, &[Control::ZERO], None, 0.05, &NO_NOISE, &mut rngs).is_err());
    }

    #[test]
    fn availability_limits() {
        let w = quiet_world(5);
        let mut params = SensorParams::default();
        let mut rngs = streams(9, Purpose::Sensing, 5);
        assert_eq!(sense(&w, &params, &mut rngs).len(), 20);
        params.availability = 0.0;
        assert!(sense(&w, &params, &mut rngs).is_empty());
    }

    #[test]
    fn max_range_filters_pairs() {
        let w = quiet_world(3);
        let params = SensorParams {
            max_range: Some(1.5),
            ..SensorParams::default()
        };
        let mut rngs = streams(9, Purpose::Sensing, 3);
        // only neighbours at distance sqrt(2)
        assert_eq!(sense(&w, &params, &mut rngs).len(), 4);
    }

    #[test]
    fn measurement_noise_has_configured_spread() {
        let w = WorldState {
            truth: vec![
                Pose::origin(),
                Pose {
                    x: 3.0,
                    y: 4.0,
                    theta: 0.0,
                },
            ],
            step: 0,
        };
        let params = SensorParams::default();
        let mut rngs = streams(77, Purpose::Sensing, 2);
        let truth = measurement_predict(&w.truth[0], &w.truth[1]).unwrap();
        let (mut sr, mut sr2, mut sb, mut sb2) = (0.0, 0.0, 0.0, 0.0);
        let mut n = 0.0;
        while n < 1e5 {
            for m in sense(&w, &params, &mut rngs)
                .iter()
                .filter(|m| m.observer == RobotId(0))
            {
                let er = m.range - truth[0];
                let eb = m.bearing - truth[1];
                sr += er;
                sr2 += er * er;
                sb += eb;
                sb2 += eb * eb;
                n += 1.0;
            }
        }
        let std_r = (sr2 / n - (sr / n).powi(2)).sqrt();
        let std_b = (sb2 / n - (sb / n).powi(2)).sqrt();
        assert!((std_r - 0.01).abs() < 0.03 * 0.01, "{std_r}");
        assert!((std_b - 0.01).abs() < 0.03 * 0.01, "{std_b}");
    }

    #[test]
    fn bearings_are_wrapped() {
        let cfg = ScenarioConfig {
            n_steps: 200,
            ..ScenarioConfig::default()
        };
        let trace = generate_trace(&cfg).unwrap();
        for s in &trace.steps {
            for m in &s.measurements {
                assert!(m.bearing > -std::f64::consts::PI && m.bearing <= std::f64::consts::PI);
            }
        }
    }

    #[test]
    fn trace_is_reproducible() {
        let cfg = ScenarioConfig {
            n_steps: 100,
            ..ScenarioConfig::default()
        };
        assert_eq!(generate_trace(&cfg).unwrap(), generate_trace(&cfg).unwrap());
    }

    #[test]
    fn availability_does_not_perturb_truth() {
        let a = ScenarioConfig {
            n_steps: 100,
            ..ScenarioConfig::default()
        };
        let mut b = a.clone();
        b.sensor.availability = 0.3;
        let ta = generate_trace(&a).unwrap();
        let tb = generate_trace(&b).unwrap();
        for (sa, sb) in ta.steps.iter().zip(&tb.steps) {
            assert_eq!(sa.truth, sb.truth);
            assert_eq!(sa.controls, sb.controls);
        }
        assert_eq!(ta.initial_beliefs, tb.initial_beliefs);
    }

    #[test]
    fn stationary_truth_is_frozen() {
        let cfg = ScenarioConfig {
            n_steps: 300,
            ..ScenarioConfig::default()
        };
        let trace = generate_trace(&cfg).unwrap();
        let mut prev = trace.initial_truth.clone();
        for s in &trace.steps {
            let i = s.stationary.index();
            assert_eq!(s.truth[i], prev[i]);
            assert_eq!(s.controls[i], Control::ZERO);
            prev = s.truth.clone();
        }
    }

    #[test]
    fn initial_positions_are_clamped() {
        let cfg = ScenarioConfig {
            n_robots: 50,
            ..ScenarioConfig::default()
        };
        for p in initial_truth(&cfg) {
            assert!(p.x.abs() <= 5.0 && p.y.abs() <= 5.0);
        }
    }
}
