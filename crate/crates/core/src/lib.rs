//! Decentralized cooperative localization for robot fleets.
//!
//! One robot per epoch holds still and acts as a temporary landmark; the
//! others correct their odometry with range-bearing measurements chained
//! outward from it, each robot keeping only its own pose belief.

pub mod batch;
pub mod coordination;
pub mod ekf;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod sim;

pub use error::{ConfigError, DomainError, EkfError, RunError, ScheduleError};
pub use geometry::{angle_diff, wrap_angle, Belief, Covariance, Pose, RobotId};
pub use models::{Control, MeasurementNoiseParams, MotionNoiseParams, RelativeMeasurement};
pub use sim::{Estimator, RunRecord, ScenarioConfig};
