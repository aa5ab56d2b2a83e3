//! Planar poses, angle arithmetic and covariance validity checks.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::DomainError;

const TWO_PI: f64 = 2.0 * PI;

/// Default absolute tolerance for covariance symmetry and PSD checks.
pub const COVARIANCE_TOLERANCE: f64 = 1e-9;

/// 3×3 pose covariance over (x, y, theta).
pub type Covariance = Matrix3<f64>;

/// Index of a robot within a fleet; fleets use the dense range `0..N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RobotId(pub usize);

impl RobotId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> Result<f64, DomainError> {
    if !theta.is_finite() {
        return Err(DomainError::NonFinite("angle"));
    }
    Ok(wrap_finite(theta))
}

/// Wrapped difference `a - b`.
pub fn angle_diff(a: f64, b: f64) -> Result<f64, DomainError> {
    if !a.is_finite() || !b.is_finite() {
        return Err(DomainError::NonFinite("angle"));
    }
    Ok(wrap_finite(a - b))
}

// Caller guarantees finiteness.
pub(crate) fn wrap_finite(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let r = theta.rem_euclid(TWO_PI);
    if r > PI {
        r - TWO_PI
    } else {
        r
    }
}

/// Planar pose. `theta` is kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Result<Self, DomainError> {
        if !x.is_finite() || !y.is_finite() {
            return Err(DomainError::NonFinite("position"));
        }
        Ok(Self {
            x,
            y,
            theta: wrap_angle(theta)?,
        })
    }

    pub fn origin() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Outcome of [`validate_covariance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceVerdict {
    Valid,
    NonFinite,
    /// Largest `|m[i][j] - m[j][i]|`.
    Asymmetric {
        max_deviation: f64,
    },
    NotPositiveSemidefinite {
        min_eigenvalue: f64,
    },
}

impl CovarianceVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, CovarianceVerdict::Valid)
    }
}

impl fmt::Display for CovarianceVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceVerdict::Valid => write!(f, "valid"),
            CovarianceVerdict::NonFinite => write!(f, "non-finite entries"),
            CovarianceVerdict::Asymmetric { max_deviation } => {
                write!(f, "asymmetric (max deviation {max_deviation:e})")
            }
            CovarianceVerdict::NotPositiveSemidefinite { min_eigenvalue } => {
                write!(f, "not PSD (min eigenvalue {min_eigenvalue:e})")
            }
        }
    }
}

/// Checks symmetry and positive semi-definiteness at [`COVARIANCE_TOLERANCE`].
pub fn validate_covariance(m: &Covariance) -> CovarianceVerdict {
    validate_covariance_with(m, COVARIANCE_TOLERANCE)
}

pub fn validate_covariance_with(m: &Covariance, tolerance: f64) -> CovarianceVerdict {
    if m.iter().any(|v| !v.is_finite()) {
        return CovarianceVerdict::NonFinite;
    }
    let max_deviation = (m - m.transpose()).abs().max();
    if max_deviation > tolerance {
        return CovarianceVerdict::Asymmetric { max_deviation };
    }
    let min_eigenvalue = min_eigenvalue(m);
    if min_eigenvalue < -tolerance {
        return CovarianceVerdict::NotPositiveSemidefinite { min_eigenvalue };
    }
    CovarianceVerdict::Valid
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &Covariance) -> f64 {
    let sym = symmetrize(m);
    SymmetricEigen::new(sym).eigenvalues.min()
}

pub fn symmetrize(m: &Covariance) -> Covariance {
    (m + m.transpose()) * 0.5
}

/// Per-robot state estimate: pose mean plus covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Belief {
    pub robot: RobotId,
    /// Number of completed timesteps this belief accounts for.
    pub step: u64,
    pub mean: Pose,
    pub covariance: Covariance,
}

impl Belief {
    pub fn new(robot: RobotId, step: u64, mean: Pose, covariance: Covariance) -> Self {
        Self {
            robot,
            step,
            mean,
            covariance,
        }
    }

    /// Standard deviation of the position marginal, averaged over both axes.
    pub fn position_sigma(&self) -> f64 {
        (0.5 * (self.covariance[(0, 0)] + self.covariance[(1, 1)])).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent oracle: shift by whole turns until inside the interval.
    fn wrap_by_loop(mut t: f64) -> f64 {
        while t <= -PI {
            t += TWO_PI;
        }
        while t > PI {
            t -= TWO_PI;
        }
        t
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert!((wrap_angle(3.0 * PI).unwrap() - PI).abs() < 1e-12);
        assert!(wrap_angle(3.0 * PI).unwrap() > 0.0);
        assert_eq!(wrap_angle(-PI).unwrap(), PI);
        assert_eq!(wrap_angle(PI).unwrap(), PI);
        let expected = wrap_by_loop(-7.5);
        assert!((expected - (-7.5 + TWO_PI)).abs() < 1e-15);
        assert!((wrap_angle(-7.5).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn wrap_rejects_non_finite() {
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
        assert!(angle_diff(0.0, f64::NEG_INFINITY).is_err());
        assert!(Pose::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn angle_diff_examples() {
        assert!(angle_diff(PI, -PI).unwrap().abs() < 1e-12);
        assert!((angle_diff(0.1, -0.1).unwrap() - 0.2).abs() < 1e-15);
        let expected = 6.0 - TWO_PI;
        assert!((expected - (-0.283_185_3)).abs() < 1e-7);
        assert!((angle_diff(3.0, -3.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn covariance_examples() {
        assert!(validate_covariance(&Covariance::identity()).is_valid());
        let m = Covariance::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            validate_covariance(&m),
            CovarianceVerdict::NotPositiveSemidefinite { .. }
        ));
        let mut m = Covariance::identity();
        m[(0, 1)] = 1e-3;
        assert!(matches!(validate_covariance(&m), CovarianceVerdict::Asymmetric { .. }));
        let mut m = Covariance::identity();
        m[(2, 2)] = f64::NAN;
        assert_eq!(validate_covariance(&m), CovarianceVerdict::NonFinite);
    }

    proptest! {
        #[test]
        fn wrap_in_range_and_matches_loop(t in -1e3f64..1e3) {
            let w = wrap_angle(t).unwrap();
            prop_assert!(w > -PI && w <= PI);
            prop_assert!((w - wrap_by_loop(t)).abs() < 1e-9);
        }

        #[test]
        fn wrap_idempotent(t in -1e6f64..1e6) {
            let w = wrap_angle(t).unwrap();
            prop_assert_eq!(wrap_angle(w).unwrap(), w);
        }

        #[test]
        fn wrap_periodic(t in -100.0f64..100.0, k in -20i32..20) {
            let a = wrap_angle(t).unwrap();
            let b = wrap_angle(t + TWO_PI * k as f64).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn angle_diff_antisymmetric(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let ab = angle_diff(a, b).unwrap();
            let ba = angle_diff(b, a).unwrap();
            prop_assert!(ab.abs() <= PI);
            let sum = (ab + ba).abs();
            prop_assert!(sum < 1e-12 || (sum - TWO_PI).abs() < 1e-12);
        }
    }
}
