use nalgebra::Matrix3;
use thiserror::Error;

use crate::geometry::{CovarianceVerdict, RobotId};

/// Invalid numeric input to a model or geometry routine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("timestep must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("degenerate geometry: positions coincide (distance {0:e} m)")]
    DegenerateGeometry(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EkfError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("covariance of robot {robot} failed validation: {verdict}")]
    InvalidCovariance {
        robot: RobotId,
        verdict: CovarianceVerdict,
        matrix: Box<Matrix3<f64>>,
    },
    #[error("contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

/// Failure of a full simulation or replay run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure at step {step}: {source}")]
    Numerical {
        step: u64,
        #[source]
        source: EkfError,
    },
    #[error("contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("fleet is empty")]
    EmptyFleet,
    #[error("epoch length must be at least 1")]
    ZeroEpochLength,
}
