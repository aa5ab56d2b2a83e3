//! Per-robot EKF: prediction for moving and stationary robots, pairwise
//! correction against an uncertain neighbor, and sequential fusion of
//! several neighbors.
//!
//! Neighbor beliefs are treated as independent priors; cross-correlations
//! between robots are not tracked.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::EkfError;
use crate::geometry::{
    angle_diff, symmetrize, validate_covariance_with, wrap_finite, Belief, Covariance, Pose, COVARIANCE_TOLERANCE,
};
use crate::models::{
    control_noise_matrix, measurement_jacobian_observer, measurement_jacobian_target, measurement_predict,
    motion_jacobian_control, motion_jacobian_state, motion_propagate, Control, MeasurementNoiseParams,
    MotionNoiseParams, RelativeMeasurement,
};

/// Chi-square 2-dof threshold at p ~= 0.001.
pub const DEFAULT_GATE: f64 = 13.8;
/// Innovation covariances with a larger condition number are refused.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    /// Use `(I-KH) P (I-KH)^T + K R K^T` instead of `(I-KH) P`.
    pub joseph_form: bool,
    /// Squared Mahalanobis threshold; `None` disables gating.
    pub gate: Option<f64>,
    pub max_condition: f64,
    pub covariance_tolerance: f64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            joseph_form: false,
            gate: None,
            max_condition: MAX_INNOVATION_CONDITION,
            covariance_tolerance: COVARIANCE_TOLERANCE,
        }
    }
}

/// A neighbor's belief paired with the observer's measurement of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborObservation {
    pub neighbor: Belief,
    pub measurement: RelativeMeasurement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Rejection {
    DegenerateGeometry,
    IllConditioned { condition: f64 },
    Gated { nis: f64 },
}

/// Diagnostics of one correction attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionReport {
    pub innovation: Vector2<f64>,
    /// Normalized innovation squared; NaN when rejected before it could be formed.
    pub nis: f64,
    pub trace_before: f64,
    pub trace_after: f64,
    pub rejection: Option<Rejection>,
}

impl CorrectionReport {
    pub fn applied(&self) -> bool {
        self.rejection.is_none()
    }

    fn rejected(trace: f64, rejection: Rejection) -> Self {
        Self {
            innovation: Vector2::zeros(),
            nis: f64::NAN,
            trace_before: trace,
            trace_after: trace,
            rejection: Some(rejection),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corrected {
    pub belief: Belief,
    pub report: CorrectionReport,
}

fn checked(belief: Belief, tolerance: f64) -> Result<Belief, EkfError> {
    let verdict = validate_covariance_with(&belief.covariance, tolerance);
    if verdict.is_valid() {
        Ok(belief)
    } else {
        Err(EkfError::InvalidCovariance {
            robot: belief.robot,
            verdict,
            matrix: Box::new(belief.covariance),
        })
    }
}

/// EKF prediction for a robot that moves under odometry `u`.
pub fn predict_moving(belief: &Belief, u: &Control, dt: f64, noise: &MotionNoiseParams) -> Result<Belief, EkfError> {
    predict_moving_with(belief, u, dt, noise, COVARIANCE_TOLERANCE)
}

pub fn predict_moving_with(
    belief: &Belief,
    u: &Control,
    dt: f64,
    noise: &MotionNoiseParams,
    tolerance: f64,
) -> Result<Belief, EkfError> {
    let mean = motion_propagate(&belief.mean, u, dt)?;
    let g = motion_jacobian_state(&belief.mean, u, dt)?;
    let v = motion_jacobian_control(&belief.mean, u, dt)?;
    let m = control_noise_matrix(noise);
    let cov = g * belief.covariance * g.transpose() + v * m * v.transpose();
    checked(
        Belief {
            robot: belief.robot,
            step: belief.step + 1,
            mean,
            covariance: symmetrize(&cov),
        },
        tolerance,
    )
}

/// A stationary robot keeps its previous mean and covariance.
pub fn predict_stationary(belief: &Belief) -> Belief {
    Belief {
        step: belief.step + 1,
        ..*belief
    }
}

/// `S = H_o P_o H_o^T + H_t P_t H_t^T + Q` for a measurement from `observer`
/// to `target`.
pub fn innovation_covariance(
    observer: &Belief,
    target: &Belief,
    q: &MeasurementNoiseParams,
) -> Result<Matrix2<f64>, EkfError> {
    let h_obs = measurement_jacobian_observer(&observer.mean, &target.mean)?;
    let h_tgt = measurement_jacobian_target(&observer.mean, &target.mean)?;
    let s = h_obs * observer.covariance * h_obs.transpose()
        + h_tgt * target.covariance * h_tgt.transpose()
        + q.covariance();
    Ok(s)
}

// Condition number of a symmetric 2x2 matrix; infinite if not positive definite.
fn condition_number(s: &Matrix2<f64>) -> f64 {
    let mean = 0.5 * (s[(0, 0)] + s[(1, 1)]);
    let half_diff = 0.5 * (s[(0, 0)] - s[(1, 1)]);
    let off = 0.5 * (s[(0, 1)] + s[(1, 0)]);
    let radius = half_diff.hypot(off);
    let (lo, hi) = (mean - radius, mean + radius);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Corrects `observer` with measurement `z` of a reference whose pose belief
/// is (`reference`, `reference_cov`). Known landmarks use a zero covariance.
///
/// Degenerate geometry, an ill-conditioned `S` and gated innovations are not
/// errors: the input belief is returned unchanged with the rejection recorded.
pub fn correct_against(
    observer: &Belief,
    reference: &Pose,
    reference_cov: &Covariance,
    z: &Vector2<f64>,
    q: &MeasurementNoiseParams,
    opts: &FilterOptions,
) -> Result<Corrected, EkfError> {
    let trace_before = observer.covariance.trace();
    let unchanged = |rejection| Corrected {
        belief: *observer,
        report: CorrectionReport::rejected(trace_before, rejection),
    };

    let predicted = match measurement_predict(&observer.mean, reference) {
        Ok(z) => z,
        Err(_) => return Ok(unchanged(Rejection::DegenerateGeometry)),
    };
    let h_obs = measurement_jacobian_observer(&observer.mean, reference)?;
    let h_ref = measurement_jacobian_target(&observer.mean, reference)?;
    // Noise seen by the observer: sensor noise plus the reference's own uncertainty.
    let r_eff = h_ref * reference_cov * h_ref.transpose() + q.covariance();
    let s = h_obs * observer.covariance * h_obs.transpose() + r_eff;

    let condition = condition_number(&s);
    if condition.is_nan() || condition >= opts.max_condition {
        return Ok(unchanged(Rejection::IllConditioned { condition }));
    }
    let s_inv = match s.try_inverse() {
        Some(inv) => inv,
        None => return Ok(unchanged(Rejection::IllConditioned { condition })),
    };

    let innovation = Vector2::new(z[0] - predicted[0], angle_diff(z[1], predicted[1])?);
    let nis = (innovation.transpose() * s_inv * innovation)[(0, 0)];
    if let Some(gate) = opts.gate {
        if nis > gate {
            let mut out = unchanged(Rejection::Gated { nis });
            out.report.innovation = innovation;
            out.report.nis = nis;
            return Ok(out);
        }
    }

    let gain = observer.covariance * h_obs.transpose() * s_inv;
    let delta: Vector3<f64> = gain * innovation;
    let i_kh = Matrix3::identity() - gain * h_obs;
    let cov = if opts.joseph_form {
        i_kh * observer.covariance * i_kh.transpose() + gain * r_eff * gain.transpose()
    } else {
        i_kh * observer.covariance
    };
    let mean = Pose {
        x: observer.mean.x + delta[0],
        y: observer.mean.y + delta[1],
        theta: wrap_finite(observer.mean.theta + delta[2]),
    };
    if !mean.is_finite() {
        return Err(EkfError::Domain(crate::error::DomainError::NonFinite("corrected mean")));
    }
    let belief = checked(
        Belief {
            mean,
            covariance: symmetrize(&cov),
            ..*observer
        },
        opts.covariance_tolerance,
    )?;
    Ok(Corrected {
        report: CorrectionReport {
            innovation,
            nis,
            trace_before,
            trace_after: belief.covariance.trace(),
            rejection: None,
        },
        belief,
    })
}

/// Corrects `observer` with its measurement of an already-estimated neighbor.
pub fn correct_pair(
    observer: &Belief,
    neighbor: &NeighborObservation,
    q: &MeasurementNoiseParams,
    opts: &FilterOptions,
) -> Result<Corrected, EkfError> {
    let m = &neighbor.measurement;
    if m.observer != observer.robot {
        return Err(EkfError::Contract(format!(
            "measurement observer {} does not match belief of robot {}",
            m.observer, observer.robot
        )));
    }
    if m.target != neighbor.neighbor.robot {
        return Err(EkfError::Contract(format!(
            "measurement target {} does not match neighbor belief of robot {}",
            m.target, neighbor.neighbor.robot
        )));
    }
    if m.step != observer.step || neighbor.neighbor.step != observer.step {
        return Err(EkfError::Contract(format!(
            "step mismatch: observer {}, neighbor {}, measurement {}",
            observer.step, neighbor.neighbor.step, m.step
        )));
    }
    correct_against(
        observer,
        &neighbor.neighbor.mean,
        &neighbor.neighbor.covariance,
        &m.as_vector(),
        q,
        opts,
    )
}

/// Left fold of [`correct_pair`] over `observations` in the given order.
/// Rejected measurements are skipped.
pub fn correct_sequential(
    observer: &Belief,
    observations: &[NeighborObservation],
    q: &MeasurementNoiseParams,
    opts: &FilterOptions,
) -> Result<(Belief, Vec<CorrectionReport>), EkfError> {
    let mut belief = *observer;
    let mut reports = Vec::with_capacity(observations.len());
    for obs in observations {
        let corrected = correct_pair(&belief, obs, q, opts)?;
        belief = corrected.belief;
        reports.push(corrected.report);
    }
    Ok((belief, reports))
}
