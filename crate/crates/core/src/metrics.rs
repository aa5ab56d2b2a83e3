//! Accuracy and consistency metrics.
//!
//! Two aggregates are provided. `mean_norm_rmse` is the mean Euclidean
//! position error `(1/n) * sum |e_t|`, which is what much of the
//! cooperative-localization literature reports as "RMSE". `standard_rmse`
//! is `sqrt((1/n) * sum |e_t|^2)`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angle_diff, Belief, Pose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("series lengths differ ({truth} vs {estimate})")]
    LengthMismatch { truth: usize, estimate: usize },
    #[error("series is empty")]
    Empty,
    #[error("covariance is singular")]
    SingularCovariance,
    #[error("non-finite heading")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RmseFormula {
    /// Mean of absolute errors.
    MeanNorm,
    /// Root of mean squared errors.
    Standard,
}

fn check_lengths(truth: &[Pose], est: &[Pose]) -> Result<(), MetricsError> {
    if truth.len() != est.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            estimate: est.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn position_error(truth: &Pose, est: &Pose) -> f64 {
    (truth.x - est.x).hypot(truth.y - est.y)
}

/// `|angle_diff(truth, est)|`, in `[0, pi]`.
pub fn orientation_error(truth: &Pose, est: &Pose) -> Result<f64, MetricsError> {
    angle_diff(truth.theta, est.theta)
        .map(f64::abs)
        .map_err(|_| MetricsError::NonFinite)
}

fn aggregate(errors: impl Iterator<Item = f64>, n: usize, formula: RmseFormula) -> f64 {
    let n = n as f64;
    match formula {
        RmseFormula::MeanNorm => errors.sum::<f64>() / n,
        RmseFormula::Standard => (errors.map(|e| e * e).sum::<f64>() / n).sqrt(),
    }
}

/// Mean Euclidean position error over the series.
pub fn mean_norm_rmse(truth: &[Pose], est: &[Pose]) -> Result<f64, MetricsError> {
    check_lengths(truth, est)?;
    Ok(aggregate(
        truth.iter().zip(est).map(|(t, e)| position_error(t, e)),
        truth.len(),
        RmseFormula::MeanNorm,
    ))
}

pub fn standard_rmse(truth: &[Pose], est: &[Pose]) -> Result<f64, MetricsError> {
    check_lengths(truth, est)?;
    Ok(aggregate(
        truth.iter().zip(est).map(|(t, e)| position_error(t, e)),
        truth.len(),
        RmseFormula::Standard,
    ))
}

pub fn orientation_rmse(truth: &[Pose], est: &[Pose], formula: RmseFormula) -> Result<f64, MetricsError> {
    check_lengths(truth, est)?;
    let errors = truth
        .iter()
        .zip(est)
        .map(|(t, e)| orientation_error(t, e))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(errors.into_iter(), truth.len(), formula))
}

/// Normalized estimation error squared, `e^T P^-1 e`, heading error wrapped.
pub fn nees(truth: &Pose, belief: &Belief) -> Result<f64, MetricsError> {
    let e = Vector3::new(
        truth.x - belief.mean.x,
        truth.y - belief.mean.y,
        angle_diff(truth.theta, belief.mean.theta).map_err(|_| MetricsError::NonFinite)?,
    );
    let inv = belief
        .covariance
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(MetricsError::SingularCovariance)?;
    Ok((e.transpose() * inv * e)[(0, 0)])
}

/// Per-step errors of one robot's estimate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub position: Vec<f64>,
    pub orientation: Vec<f64>,
    /// NaN where the covariance was singular.
    pub nees: Vec<f64>,
}

impl ErrorSeries {
    pub fn from_beliefs(truth: &[Pose], beliefs: &[Belief]) -> Result<Self, MetricsError> {
        if truth.len() != beliefs.len() {
            return Err(MetricsError::LengthMismatch {
                truth: truth.len(),
                estimate: beliefs.len(),
            });
        }
        let mut out = ErrorSeries::default();
        for (t, b) in truth.iter().zip(beliefs) {
            out.position.push(position_error(t, &b.mean));
            out.orientation.push(orientation_error(t, &b.mean)?);
            out.nees.push(nees(t, b).unwrap_or(f64::NAN));
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }
}

/// Running aggregate after each step: element `k` aggregates `errors[..=k]`.
pub fn running(errors: &[f64], formula: RmseFormula) -> Vec<f64> {
    let mut acc = 0.0;
    errors
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let n = (k + 1) as f64;
            match formula {
                RmseFormula::MeanNorm => {
                    acc += e;
                    acc / n
                }
                RmseFormula::Standard => {
                    acc += e * e;
                    (acc / n).sqrt()
                }
            }
        })
        .collect()
}

/// Arithmetic mean ignoring NaN entries; NaN if none remain.
pub fn mean_finite(values: &[f64]) -> f64 {
    let (sum, n) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Sample mean and (n-1) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Covariance, RobotId};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn p(x: f64, y: f64, t: f64) -> Pose {
        Pose::new(x, y, t).unwrap()
    }

    fn series() -> impl Strategy<Value = (Vec<Pose>, Vec<Pose>)> {
        (1usize..40).prop_flat_map(|n| {
            let pose = (-10.0f64..10.0, -10.0f64..10.0, -PI..PI).prop_map(|(x, y, t)| p(x, y, t));
            (prop::collection::vec(pose.clone(), n), prop::collection::vec(pose, n))
        })
    }

    #[test]
    fn rmse_examples() {
        let truth: Vec<Pose> = (0..5).map(|k| p(k as f64, 1.0, 0.1)).collect();
        assert_eq!(mean_norm_rmse(&truth, &truth).unwrap(), 0.0);
        assert_eq!(standard_rmse(&truth, &truth).unwrap(), 0.0);
        let shifted: Vec<Pose> = truth.iter().map(|t| p(t.x + 0.3, t.y + 0.4, t.theta)).collect();
        assert!((mean_norm_rmse(&truth, &shifted).unwrap() - 0.5).abs() < 1e-12);
        assert!((standard_rmse(&truth, &shifted).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rmse_errors() {
        let a = vec![Pose::origin(); 3];
        let b = vec![Pose::origin(); 2];
        assert!(matches!(
            mean_norm_rmse(&a, &b),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(standard_rmse(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn orientation_wraps() {
        let truth = vec![p(0.0, 0.0, PI - 0.01)];
        let est = vec![p(0.0, 0.0, -PI + 0.01)];
        for f in [RmseFormula::MeanNorm, RmseFormula::Standard] {
            assert!((orientation_rmse(&truth, &est, f).unwrap() - 0.02).abs() < 1e-12);
            assert_eq!(orientation_rmse(&truth, &truth, f).unwrap(), 0.0);
        }
    }

    #[test]
    fn nees_examples() {
        let b = Belief::new(RobotId(0), 0, p(1.0, 2.0, 0.3), Covariance::identity());
        assert_eq!(nees(&b.mean, &b).unwrap(), 0.0);
        assert!((nees(&p(1.0, 3.0, 0.3), &b).unwrap() - 1.0).abs() < 1e-15);
        let singular = Belief {
            covariance: Covariance::zeros(),
            ..b
        };
        assert_eq!(nees(&b.mean, &singular), Err(MetricsError::SingularCovariance));
    }

    #[test]
    fn running_series() {
        let r = running(&[1.0, 3.0, 2.0], RmseFormula::MeanNorm);
        assert_eq!(r, vec![1.0, 2.0, 2.0]);
        let r = running(&[3.0, 4.0], RmseFormula::Standard);
        assert!((r[1] - 12.5f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn mean_norm_rmse_matches_brute_force((truth, est) in series()) {
            let mut sum = 0.0;
            for k in 0..truth.len() {
                let dx = truth[k].x - est[k].x;
                let dy = truth[k].y - est[k].y;
                sum += (dx * dx + dy * dy).sqrt();
            }
            let brute = sum / truth.len() as f64;
            let got = mean_norm_rmse(&truth, &est).unwrap();
            prop_assert!((got - brute).abs() <= 1e-12 * brute.max(1e-300));
        }

        #[test]
        fn orientation_matches_brute_force((truth, est) in series()) {
            let mut sum = 0.0;
            for k in 0..truth.len() {
                let mut d = truth[k].theta - est[k].theta;
                while d > PI { d -= 2.0 * PI; }
                while d <= -PI { d += 2.0 * PI; }
                sum += d.abs();
            }
            let brute = sum / truth.len() as f64;
            let got = orientation_rmse(&truth, &est, RmseFormula::MeanNorm).unwrap();
            prop_assert!((got - brute).abs() <= 1e-12 * brute.max(1e-300));
        }

        #[test]
        fn standard_dominates_mean_norm((truth, est) in series()) {
            let s = standard_rmse(&truth, &est).unwrap();
            let m = mean_norm_rmse(&truth, &est).unwrap();
            prop_assert!(s + 1e-12 >= m);
            prop_assert!(m >= 0.0);
        }

        #[test]
        fn permutation_invariant((truth, est) in series(), rot in 0usize..40) {
            let k = rot % truth.len();
            let mut t2 = truth.clone();
            let mut e2 = est.clone();
            t2.rotate_left(k);
            e2.rotate_left(k);
            let a = mean_norm_rmse(&truth, &est).unwrap();
            let b = mean_norm_rmse(&t2, &e2).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
            let a = standard_rmse(&truth, &est).unwrap();
            let b = standard_rmse(&t2, &e2).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }

        #[test]
        fn orientation_invariant_under_full_turns((truth, est) in series()) {
            let turned: Vec<Pose> = est.iter().map(|e| Pose { theta: e.theta + 2.0 * PI, ..*e }).collect();
            let a = orientation_rmse(&truth, &est, RmseFormula::Standard).unwrap();
            let b = orientation_rmse(&truth, &turned, RmseFormula::Standard).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
