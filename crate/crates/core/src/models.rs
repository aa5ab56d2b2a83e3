//! Velocity motion model and range-bearing measurement model with analytic
//! Jacobians.
//!
//! The circular-arc update is evaluated in half-angle form,
//! `dx = v*dt*cos(theta + w*dt/2) * sinc(w*dt/2)`, which is algebraically
//! identical to the `v/w` form but has no cancellation for small `w`.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::DomainError;
use crate::geometry::{angle_diff, wrap_finite, Pose, RobotId};

/// Below this |omega| (rad/s) the straight-line limit of the arc is used.
pub const OMEGA_EPSILON: f64 = 1e-6;
/// Minimum separation (m) for which range and bearing are defined.
pub const RANGE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    /// Translational velocity, m/s.
    pub v: f64,
    /// Rotational velocity, rad/s.
    pub omega: f64,
}

impl Control {
    pub const ZERO: Control = Control { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

/// Standard deviations of the odometry noise in control space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionNoiseParams {
    pub sigma_v: f64,
    pub sigma_omega: f64,
}

impl Default for MotionNoiseParams {
    fn default() -> Self {
        Self {
            sigma_v: 0.5,
            sigma_omega: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementNoiseParams {
    pub sigma_r: f64,
    pub sigma_phi: f64,
}

impl MeasurementNoiseParams {
    /// `Q = diag(sigma_r^2, sigma_phi^2)`.
    pub fn covariance(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal(&Vector2::new(self.sigma_r.powi(2), self.sigma_phi.powi(2)))
    }
}

/// Range and bearing from `observer` to `target` at belief step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeMeasurement {
    pub observer: RobotId,
    pub target: RobotId,
    pub range: f64,
    pub bearing: f64,
    pub step: u64,
}

impl RelativeMeasurement {
    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.range, self.bearing)
    }
}

fn check_dt(dt: f64) -> Result<(), DomainError> {
    if !dt.is_finite() {
        return Err(DomainError::NonFinite("dt"));
    }
    if dt <= 0.0 {
        return Err(DomainError::NonPositiveDt(dt));
    }
    Ok(())
}

fn check_inputs(pose: &Pose, u: &Control, dt: f64) -> Result<(), DomainError> {
    check_dt(dt)?;
    if !pose.is_finite() {
        return Err(DomainError::NonFinite("pose"));
    }
    if !u.v.is_finite() || !u.omega.is_finite() {
        return Err(DomainError::NonFinite("control"));
    }
    Ok(())
}

/// sin(h)/h and its derivative, with the straight-line limit below threshold.
struct ArcTerms {
    cos_mid: f64,
    sin_mid: f64,
    sinc: f64,
    dsinc: f64,
}

impl ArcTerms {
    fn new(theta: f64, omega: f64, dt: f64) -> Self {
        let half = 0.5 * omega * dt;
        let mid = theta + half;
        let (sinc, dsinc) = if omega.abs() < OMEGA_EPSILON {
            (1.0, 0.0)
        } else {
            (half.sin() / half, dsinc(half))
        };
        Self {
            cos_mid: mid.cos(),
            sin_mid: mid.sin(),
            sinc,
            dsinc,
        }
    }
}

// d/dh (sin h / h)
fn dsinc(h: f64) -> f64 {
    if h.abs() < 1e-2 {
        let h2 = h * h;
        h * (-1.0 / 3.0 + h2 * (1.0 / 30.0 - h2 / 840.0))
    } else {
        (h * h.cos() - h.sin()) / (h * h)
    }
}

/// Deterministic part of the velocity motion model.
pub fn motion_propagate(pose: &Pose, u: &Control, dt: f64) -> Result<Pose, DomainError> {
    check_inputs(pose, u, dt)?;
    let arc = ArcTerms::new(pose.theta, u.omega, dt);
    let chord = u.v * dt * arc.sinc;
    Ok(Pose {
        x: pose.x + chord * arc.cos_mid,
        y: pose.y + chord * arc.sin_mid,
        theta: wrap_finite(pose.theta + u.omega * dt),
    })
}

/// `G = dg/dX`.
pub fn motion_jacobian_state(pose: &Pose, u: &Control, dt: f64) -> Result<Matrix3<f64>, DomainError> {
    check_inputs(pose, u, dt)?;
    let arc = ArcTerms::new(pose.theta, u.omega, dt);
    let chord = u.v * dt * arc.sinc;
    let dx = chord * arc.cos_mid;
    let dy = chord * arc.sin_mid;
    #[rustfmt::skip]
    let g = Matrix3::new(
        1.0, 0.0, -dy,
        0.0, 1.0, dx,
        0.0, 0.0, 1.0,
    );
    Ok(g)
}

/// `V = dg/du`, columns ordered (v, omega).
pub fn motion_jacobian_control(pose: &Pose, u: &Control, dt: f64) -> Result<Matrix3x2<f64>, DomainError> {
    check_inputs(pose, u, dt)?;
    let arc = ArcTerms::new(pose.theta, u.omega, dt);
    let half_dt = 0.5 * dt;
    let vdt = u.v * dt;
    #[rustfmt::skip]
    let v = Matrix3x2::new(
        dt * arc.cos_mid * arc.sinc, vdt * half_dt * (arc.cos_mid * arc.dsinc - arc.sin_mid * arc.sinc),
        dt * arc.sin_mid * arc.sinc, vdt * half_dt * (arc.sin_mid * arc.dsinc + arc.cos_mid * arc.sinc),
        0.0,                         dt,
    );
    Ok(v)
}

/// `M = diag(sigma_v^2, sigma_omega^2)`.
pub fn control_noise_matrix(params: &MotionNoiseParams) -> Matrix2<f64> {
    Matrix2::from_diagonal(&Vector2::new(params.sigma_v.powi(2), params.sigma_omega.powi(2)))
}

fn offset(observer: &Pose, target: &Pose) -> Result<(f64, f64, f64), DomainError> {
    if !observer.is_finite() || !target.is_finite() {
        return Err(DomainError::NonFinite("pose"));
    }
    let dx = target.x - observer.x;
    let dy = target.y - observer.y;
    let r = dx.hypot(dy);
    if r <= RANGE_EPSILON {
        return Err(DomainError::DegenerateGeometry(r));
    }
    Ok((dx, dy, r))
}

/// Predicted `(range, bearing)` of `target` as seen from `observer`.
pub fn measurement_predict(observer: &Pose, target: &Pose) -> Result<Vector2<f64>, DomainError> {
    let (dx, dy, r) = offset(observer, target)?;
    let bearing = angle_diff(dy.atan2(dx), observer.theta)?;
    Ok(Vector2::new(r, bearing))
}

/// Jacobian of the measurement with respect to the observer pose.
pub fn measurement_jacobian_observer(observer: &Pose, target: &Pose) -> Result<Matrix2x3<f64>, DomainError> {
    let (dx, dy, r) = offset(observer, target)?;
    let r2 = r * r;
    #[rustfmt::skip]
    let h = Matrix2x3::new(
        -dx / r, -dy / r, 0.0,
        dy / r2, -dx / r2, -1.0,
    );
    Ok(h)
}

/// Jacobian of the measurement with respect to the target pose. The heading
/// column is zero.
pub fn measurement_jacobian_target(observer: &Pose, target: &Pose) -> Result<Matrix2x3<f64>, DomainError> {
    let (dx, dy, r) = offset(observer, target)?;
    let r2 = r * r;
    #[rustfmt::skip]
    let h = Matrix2x3::new(
        dx / r, dy / r, 0.0,
        -dy / r2, dx / r2, 0.0,
    );
    Ok(h)
}
