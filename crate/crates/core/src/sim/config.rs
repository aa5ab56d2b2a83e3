use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::coordination::EpochPolicy;
use crate::ekf::{FilterOptions, DEFAULT_GATE, MAX_INNOVATION_CONDITION};
use crate::error::ConfigError;
use crate::geometry::{Covariance, COVARIANCE_TOLERANCE};
use crate::models::{MeasurementNoiseParams, MotionNoiseParams};

/// Commanded velocities: constant `v`, `omega = omega_scale * N(0, 1)`
/// resampled every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlPolicy {
    pub v: f64,
    pub omega_scale: f64,
}

impl Default for ControlPolicy {
    fn default() -> Self {
        Self {
            v: 0.2,
            omega_scale: 0.5,
        }
    }
}

/// Diagonal state-space noise added to the true motion each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessNoise {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_theta: f64,
}

/// How the ground truth deviates from the reported odometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruthNoise {
    /// Each robot executes `(v + sigma_v * n1, omega + sigma_omega * n2)`
    /// while reporting the commanded control, which is exactly the noise the
    /// filters assume up to linearization.
    Control(MotionNoiseParams),
    /// Independent world-frame noise added to the propagated pose.
    State(ProcessNoise),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorParams {
    /// Metres; `None` means unlimited.
    pub max_range: Option<f64>,
    /// Probability that each ordered pair yields a measurement in a step.
    pub availability: f64,
    pub sigma_r: f64,
    pub sigma_phi: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            max_range: None,
            availability: 1.0,
            sigma_r: 0.01,
            sigma_phi: 0.01,
        }
    }
}

impl SensorParams {
    pub fn noise(&self) -> MeasurementNoiseParams {
        MeasurementNoiseParams {
            sigma_r: self.sigma_r,
            sigma_phi: self.sigma_phi,
        }
    }

    pub fn in_range(&self, distance: f64) -> bool {
        self.max_range.is_none_or(|r| distance <= r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConditions {
    /// Initial belief error and covariance sigmas (m, m, rad).
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_theta: f64,
    /// True start: `x, y = position_scale * N(0,1)`, `theta = heading_scale * N(0,1)`.
    pub position_scale: f64,
    pub heading_scale: f64,
    pub clamp_to_arena: bool,
    /// Arena is the square `[-w, w]^2`.
    pub arena_half_width: f64,
}

impl InitialConditions {
    /// Diagonal covariance of every initial belief.
    pub fn covariance(&self) -> Covariance {
        Covariance::from_diagonal(&Vector3::new(
            self.sigma_x.powi(2),
            self.sigma_y.powi(2),
            self.sigma_theta.powi(2),
        ))
    }
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self {
            sigma_x: 0.01,
            sigma_y: 0.01,
            sigma_theta: 0.01,
            position_scale: 5.0,
            heading_scale: 2.0,
            clamp_to_arena: true,
            arena_half_width: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub joseph_form: bool,
    pub gate: bool,
    pub gate_threshold: f64,
    pub covariance_tolerance: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            joseph_form: false,
            gate: false,
            gate_threshold: DEFAULT_GATE,
            covariance_tolerance: COVARIANCE_TOLERANCE,
        }
    }
}

impl FilterConfig {
    pub fn options(&self) -> FilterOptions {
        FilterOptions {
            joseph_form: self.joseph_form,
            gate: self.gate.then_some(self.gate_threshold),
            max_condition: MAX_INNOVATION_CONDITION,
            covariance_tolerance: self.covariance_tolerance,
        }
    }
}

/// Everything needed to reproduce one simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_robots: usize,
    pub n_steps: u64,
    /// Seconds per step.
    pub dt: f64,
    pub seed: u64,
    pub control: ControlPolicy,
    /// Odometry noise assumed by the filters.
    pub motion_noise: MotionNoiseParams,
    /// World-frame noise applied to the ground truth instead of executing
    /// perturbed controls drawn from `motion_noise`.
    pub process_noise: Option<ProcessNoise>,
    pub sensor: SensorParams,
    pub initial: InitialConditions,
    pub epoch: EpochPolicy,
    pub filter: FilterConfig,
    /// Known landmark positions for the landmark-EKF baseline.
    pub landmarks: Vec<[f64; 2]>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_robots: 5,
            n_steps: 1000,
            dt: 0.05,
            seed: 1,
            control: ControlPolicy::default(),
            motion_noise: MotionNoiseParams::default(),
            process_noise: None,
            sensor: SensorParams::default(),
            initial: InitialConditions::default(),
            epoch: EpochPolicy::default(),
            filter: FilterConfig::default(),
            landmarks: vec![[-5.0, -5.0], [5.0, -5.0], [5.0, 5.0], [-5.0, 5.0]],
        }
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if !v.is_finite() || v < 0.0 {
        return Err(ConfigError::invalid(field, format!("must be finite and >= 0, got {v}")));
    }
    Ok(())
}

fn finite(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if !v.is_finite() {
        return Err(ConfigError::invalid(field, format!("must be finite, got {v}")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_robots == 0 {
            return Err(ConfigError::invalid("n_robots", "must be at least 1"));
        }
        if self.n_steps == 0 {
            return Err(ConfigError::invalid("n_steps", "must be at least 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ConfigError::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        finite("control.v", self.control.v)?;
        non_negative("control.omega_scale", self.control.omega_scale)?;
        non_negative("motion_noise.sigma_v", self.motion_noise.sigma_v)?;
        non_negative("motion_noise.sigma_omega", self.motion_noise.sigma_omega)?;
        if let Some(p) = &self.process_noise {
            non_negative("process_noise.sigma_x", p.sigma_x)?;
            non_negative("process_noise.sigma_y", p.sigma_y)?;
            non_negative("process_noise.sigma_theta", p.sigma_theta)?;
        }
        let s = &self.sensor;
        if !(0.0..=1.0).contains(&s.availability) {
            return Err(ConfigError::invalid(
                "sensor.availability",
                format!("must lie in [0, 1], got {}", s.availability),
            ));
        }
        if let Some(r) = s.max_range {
            if r.is_nan() || r <= 0.0 {
                return Err(ConfigError::invalid(
                    "sensor.max_range",
                    format!("must be positive, got {r}"),
                ));
            }
        }
        non_negative("sensor.sigma_r", s.sigma_r)?;
        non_negative("sensor.sigma_phi", s.sigma_phi)?;
        let i = &self.initial;
        non_negative("initial.sigma_x", i.sigma_x)?;
        non_negative("initial.sigma_y", i.sigma_y)?;
        non_negative("initial.sigma_theta", i.sigma_theta)?;
        non_negative("initial.position_scale", i.position_scale)?;
        non_negative("initial.heading_scale", i.heading_scale)?;
        if !(i.arena_half_width.is_finite() && i.arena_half_width > 0.0) {
            return Err(ConfigError::invalid("initial.arena_half_width", "must be positive"));
        }
        if self.epoch.length == 0 {
            return Err(ConfigError::invalid("epoch.length", "must be at least 1"));
        }
        non_negative("filter.gate_threshold", self.filter.gate_threshold)?;
        non_negative("filter.covariance_tolerance", self.filter.covariance_tolerance)?;
        for l in &self.landmarks {
            finite("landmarks", l[0])?;
            finite("landmarks", l[1])?;
        }
        Ok(())
    }

    pub fn truth_noise(&self) -> TruthNoise {
        match self.process_noise {
            Some(p) => TruthNoise::State(p),
            None => TruthNoise::Control(self.motion_noise),
        }
    }

    pub fn filter_options(&self) -> FilterOptions {
        self.filter.options()
    }
}
