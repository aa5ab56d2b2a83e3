//! CSV and JSON artifact writers. Floats use Rust's shortest round-trip
//! formatting so files re-parse to the exact same bits.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use coloc_core::metrics::{running, RmseFormula};
use coloc_core::sim::{Counters, RunSummary, Trace};
use coloc_core::{Belief, Estimator, Pose, RobotId, RunRecord};
use serde::Serialize;

use crate::error::CliError;

pub const TRUTH_HEADER: [&str; 5] = ["step", "robot", "x", "y", "theta"];
pub const BELIEF_HEADER: [&str; 11] = [
    "step", "robot", "x", "y", "theta", "s11", "s12", "s13", "s22", "s23", "s33",
];
pub const MEASUREMENT_HEADER: [&str; 6] = ["step", "observer", "target", "range", "bearing", "used_flag"];
pub const SCHEDULE_HEADER: [&str; 4] = ["step", "stationary", "robot", "source_list"];
pub const ERROR_HEADER: [&str; 10] = [
    "estimator",
    "step",
    "robot",
    "position_error",
    "orientation_error",
    "nees",
    "running_mean_norm_rmse_position",
    "running_standard_rmse_position",
    "running_mean_norm_rmse_orientation",
    "running_standard_rmse_orientation",
];
pub const LOG_HEADER: [&str; 7] = ["kind", "step", "robot", "target", "a", "b", "c"];

/// Description of the position accuracy figures in `metrics.json`.
pub const POSITION_METRIC_LABEL: &str =
    "mean_norm_rmse: mean Euclidean position error over steps (m); standard_rmse: root of mean squared position error (m)";

/// Units of the CSV columns, recorded in the manifest.
pub const UNITS: [(&str, &str); 13] = [
    ("step", "timesteps since start, 0 is the initial state"),
    ("x, y, range", "m"),
    ("theta, bearing", "rad"),
    ("s11, s12, s22", "m^2"),
    ("s13, s23", "m rad"),
    ("s33", "rad^2"),
    ("position_error, running_*_position", "m"),
    ("orientation_error, running_*_orientation", "rad"),
    ("nees", "dimensionless"),
    ("log odom a, b", "m/s, rad/s"),
    ("log meas a, b", "m, rad"),
    ("log init and truth a, b, c", "m, m, rad"),
    ("used_flag", "1 if the decentralized filter applied the measurement"),
];

pub fn num(x: f64) -> String {
    x.to_string()
}

pub struct Csv {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl Csv {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        writer.write_record(header).map_err(|e| csv_error(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| csv_error(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn pose_row(step: u64, robot: usize, p: &Pose) -> [String; 5] {
    [step.to_string(), robot.to_string(), num(p.x), num(p.y), num(p.theta)]
}

pub fn write_truth(path: &Path, rows: &[(u64, &[Pose])]) -> Result<(), CliError> {
    let mut csv = Csv::create(path, &TRUTH_HEADER)?;
    for (step, poses) in rows {
        for (i, p) in poses.iter().enumerate() {
            csv.row(pose_row(*step, i, p))?;
        }
    }
    csv.finish()
}

fn belief_row(b: &Belief) -> Vec<String> {
    let s = &b.covariance;
    let mut row = pose_row(b.step, b.robot.index(), &b.mean).to_vec();
    row.extend([s[(0, 0)], s[(0, 1)], s[(0, 2)], s[(1, 1)], s[(1, 2)], s[(2, 2)]].map(num));
    row
}

/// Initial beliefs as step 0 followed by every recorded step.
pub fn write_beliefs(path: &Path, initial: &[Belief], record: &RunRecord) -> Result<(), CliError> {
    let mut csv = Csv::create(path, &BELIEF_HEADER)?;
    for b in initial {
        csv.row(belief_row(b))?;
    }
    for s in &record.steps {
        for b in &s.beliefs {
            csv.row(belief_row(b))?;
        }
    }
    csv.finish()
}

/// Measurements with the decentralized filter's usage flags, if it ran.
pub fn write_measurements(path: &Path, trace: &Trace, de_ekf: Option<&RunRecord>) -> Result<(), CliError> {
    let mut csv = Csv::create(path, &MEASUREMENT_HEADER)?;
    for (k, ts) in trace.steps.iter().enumerate() {
        for (j, m) in ts.measurements.iter().enumerate() {
            let used = de_ekf.is_some_and(|r| r.steps[k].measurements[j].used);
            csv.row([
                m.step.to_string(),
                m.observer.index().to_string(),
                m.target.index().to_string(),
                num(m.range),
                num(m.bearing),
                u8::from(used).to_string(),
            ])?;
        }
    }
    csv.finish()
}

/// One row per scheduled robot; `source_list` is `;`-separated, nearest first.
pub fn write_schedule(path: &Path, record: &RunRecord) -> Result<(), CliError> {
    let mut csv = Csv::create(path, &SCHEDULE_HEADER)?;
    for s in &record.steps {
        let Some(schedule) = &s.schedule else { continue };
        for entry in &schedule.correction_order {
            let sources: Vec<String> = entry.sources.iter().map(|r| r.index().to_string()).collect();
            csv.row([
                s.step.to_string(),
                schedule.stationary.index().to_string(),
                entry.robot.index().to_string(),
                sources.join(";"),
            ])?;
        }
    }
    csv.finish()
}

/// Instantaneous and running errors of every estimator with ground truth.
pub fn write_errors(path: &Path, records: &[RunRecord]) -> Result<(), CliError> {
    let mut csv = Csv::create(path, &ERROR_HEADER)?;
    for rec in records {
        for r in 0..rec.n_robots {
            let Some(e) = rec.errors(RobotId(r)) else { continue };
            let run_pos_mean = running(&e.position, RmseFormula::MeanNorm);
            let run_pos_std = running(&e.position, RmseFormula::Standard);
            let run_ori_mean = running(&e.orientation, RmseFormula::MeanNorm);
            let run_ori_std = running(&e.orientation, RmseFormula::Standard);
            for (k, s) in rec.steps.iter().enumerate() {
                csv.row([
                    rec.estimator.name().to_string(),
                    s.step.to_string(),
                    r.to_string(),
                    num(e.position[k]),
                    num(e.orientation[k]),
                    num(e.nees[k]),
                    num(run_pos_mean[k]),
                    num(run_pos_std[k]),
                    num(run_ori_mean[k]),
                    num(run_ori_std[k]),
                ])?;
            }
        }
    }
    csv.finish()
}

/// Replay log of a simulated trace; `coloc replay` reads it back.
pub fn write_log(path: &Path, trace: &Trace) -> Result<(), CliError> {
    let mut csv = Csv::create(path, &LOG_HEADER)?;
    let empty = String::new;
    for b in &trace.initial_beliefs {
        let (x, y, t) = (b.mean.x, b.mean.y, b.mean.theta);
        csv.row([
            "init".into(),
            "0".into(),
            b.robot.index().to_string(),
            empty(),
            num(x),
            num(y),
            num(t),
        ])?;
    }
    for (i, p) in trace.initial_truth.iter().enumerate() {
        csv.row([
            "truth".into(),
            "0".into(),
            i.to_string(),
            empty(),
            num(p.x),
            num(p.y),
            num(p.theta),
        ])?;
    }
    for ts in &trace.steps {
        let step = ts.step.to_string();
        for (i, u) in ts.controls.iter().enumerate() {
            csv.row([
                "odom".into(),
                step.clone(),
                i.to_string(),
                empty(),
                num(u.v),
                num(u.omega),
                empty(),
            ])?;
        }
        for m in &ts.measurements {
            csv.row([
                "meas".into(),
                step.clone(),
                m.observer.index().to_string(),
                m.target.index().to_string(),
                num(m.range),
                num(m.bearing),
                empty(),
            ])?;
        }
        for (i, p) in ts.truth.iter().enumerate() {
            csv.row([
                "truth".into(),
                step.clone(),
                i.to_string(),
                empty(),
                num(p.x),
                num(p.y),
                num(p.theta),
            ])?;
        }
    }
    csv.finish()
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorMetrics {
    pub estimator: Estimator,
    pub summary: Option<RunSummary>,
    pub counters: Counters,
}

impl EstimatorMetrics {
    pub fn of(record: &RunRecord) -> Self {
        Self {
            estimator: record.estimator,
            summary: record.summary(),
            counters: record.counters,
        }
    }
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    position_metric: &'a str,
    estimators: &'a [EstimatorMetrics],
}

pub fn write_metrics(path: &Path, metrics: &[EstimatorMetrics]) -> Result<(), CliError> {
    write_json(
        path,
        &MetricsFile {
            position_metric: POSITION_METRIC_LABEL,
            estimators: metrics,
        },
    )
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes via a temporary sibling and a rename so readers never see a partial file.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let tmp = path.with_extension("json.partial");
    write_json(&tmp, value)?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}
