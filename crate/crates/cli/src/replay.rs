//! Reader for the replay log written by `simulate` (`log.csv`).
//!
//! One CSV with header `kind,step,robot,target,a,b,c`:
//!
//! | kind  | step | robot    | target | a     | b       | c     |
//! |-------|------|----------|--------|-------|---------|-------|
//! | init  | 0    | robot    |        | x     | y       | theta |
//! | odom  | >= 1 | robot    |        | v     | omega   |       |
//! | meas  | >= 1 | observer | target | range | bearing |       |
//! | truth | >= 0 | robot    |        | x     | y       | theta |
//!
//! Steps never decrease. Every robot has exactly one `init` row and one
//! `odom` row per step; `meas` rows are optional; `truth` rows are either
//! absent or cover every robot at every step from 1 on.

use std::collections::BTreeMap;
use std::path::Path;

use coloc_core::coordination::select_stationary;
use coloc_core::sim::{Trace, TraceStep};
use coloc_core::{Belief, Control, Pose, RelativeMeasurement, RobotId, ScenarioConfig};

use crate::artifacts::LOG_HEADER;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayLog {
    pub initial: Vec<Pose>,
    pub initial_truth: Option<Vec<Pose>>,
    pub steps: Vec<ReplayStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayStep {
    pub step: u64,
    pub controls: Vec<Control>,
    pub measurements: Vec<RelativeMeasurement>,
    pub truth: Option<Vec<Pose>>,
}

impl ReplayLog {
    pub fn n_robots(&self) -> usize {
        self.initial.len()
    }

    pub fn has_truth(&self) -> bool {
        self.steps.iter().all(|s| s.truth.is_some())
    }

    /// Simulation trace equivalent of the log, with the stationary robot of
    /// each step chosen by `config`'s epoch policy.
    pub fn to_trace(&self, config: &ScenarioConfig) -> Result<Trace, CliError> {
        let covariance = config.initial.covariance();
        let fleet: Vec<RobotId> = (0..self.n_robots()).map(RobotId).collect();
        let initial_beliefs = self
            .initial
            .iter()
            .enumerate()
            .map(|(i, p)| Belief::new(RobotId(i), 0, *p, covariance))
            .collect();
        let steps = self
            .steps
            .iter()
            .map(|s| {
                let epoch = config
                    .epoch
                    .epoch_of(s.step - 1)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                let stationary = select_stationary(&fleet, epoch, &config.epoch, config.seed)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                Ok(TraceStep {
                    step: s.step,
                    stationary,
                    controls: s.controls.clone(),
                    truth: s.truth.clone().unwrap_or_default(),
                    measurements: s.measurements.clone(),
                    landmark_measurements: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(Trace {
            initial_truth: self.initial_truth.clone().unwrap_or_else(|| self.initial.clone()),
            initial_beliefs,
            steps,
        })
    }
}

#[derive(Default)]
struct PendingStep {
    controls: BTreeMap<usize, Control>,
    measurements: Vec<RelativeMeasurement>,
    truth: BTreeMap<usize, Pose>,
}

struct Reader<'a> {
    path: &'a Path,
    row: u64,
}

impl Reader<'_> {
    fn err(&self, reason: impl Into<String>) -> CliError {
        CliError::schema(self.path, self.row, reason)
    }

    fn field<'r>(&self, rec: &'r csv::StringRecord, i: usize) -> &'r str {
        rec.get(i).unwrap_or("").trim()
    }

    fn float(&self, rec: &csv::StringRecord, i: usize) -> Result<f64, CliError> {
        let raw = self.field(rec, i);
        let v: f64 = raw
            .parse()
            .map_err(|_| self.err(format!("column `{}`: expected a number, got `{raw}`", LOG_HEADER[i])))?;
        if !v.is_finite() {
            return Err(self.err(format!("column `{}`: value must be finite", LOG_HEADER[i])));
        }
        Ok(v)
    }

    fn index(&self, rec: &csv::StringRecord, i: usize) -> Result<u64, CliError> {
        let raw = self.field(rec, i);
        raw.parse().map_err(|_| {
            self.err(format!(
                "column `{}`: expected a non-negative integer, got `{raw}`",
                LOG_HEADER[i]
            ))
        })
    }
}

pub fn read_log(path: &Path) -> Result<ReplayLog, CliError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::io(path, std::io::Error::other(e.to_string())))?;
    let mut reader = Reader { path, row: 0 };
    let mut records = csv.records();

    reader.row = 1;
    let header = records
        .next()
        .ok_or_else(|| reader.err("empty log"))?
        .map_err(|e| reader.err(e.to_string()))?;
    if header.iter().map(str::trim).ne(LOG_HEADER) {
        return Err(reader.err(format!("header must be `{}`", LOG_HEADER.join(","))));
    }

    let mut initial: BTreeMap<usize, Pose> = BTreeMap::new();
    let mut initial_truth: BTreeMap<usize, Pose> = BTreeMap::new();
    let mut pending: BTreeMap<u64, PendingStep> = BTreeMap::new();
    let mut last_step = 0u64;
    for rec in records {
        reader.row += 1;
        let rec = rec.map_err(|e| reader.err(e.to_string()))?;
        if rec.len() != LOG_HEADER.len() {
            return Err(reader.err(format!("expected {} columns, found {}", LOG_HEADER.len(), rec.len())));
        }
        let kind = reader.field(&rec, 0);
        let step = reader.index(&rec, 1)?;
        if step < last_step {
            return Err(reader.err(format!("step {step} after step {last_step}; steps must not decrease")));
        }
        for done in last_step.max(1)..step {
            let controls = pending.get(&done).map(|p| &p.controls);
            if let Some(missing) = (0..initial.len()).find(|r| !controls.is_some_and(|c| c.contains_key(r))) {
                return Err(reader.err(format!("robot {missing} has no odom row at step {done}")));
            }
        }
        last_step = step;
        let robot = reader.index(&rec, 2)? as usize;
        match kind {
            "init" => {
                if step != 0 {
                    return Err(reader.err("init rows must have step 0"));
                }
                let pose = Pose::new(reader.float(&rec, 4)?, reader.float(&rec, 5)?, reader.float(&rec, 6)?)
                    .map_err(|e| reader.err(e.to_string()))?;
                if initial.insert(robot, pose).is_some() {
                    return Err(reader.err(format!("duplicate init row for robot {robot}")));
                }
            }
            "odom" => {
                if step == 0 {
                    return Err(reader.err("odom rows must have step >= 1"));
                }
                let u = Control::new(reader.float(&rec, 4)?, reader.float(&rec, 5)?);
                if pending.entry(step).or_default().controls.insert(robot, u).is_some() {
                    return Err(reader.err(format!("duplicate odom row for robot {robot} at step {step}")));
                }
            }
            "meas" => {
                if step == 0 {
                    return Err(reader.err("meas rows must have step >= 1"));
                }
                let target = reader.index(&rec, 3)? as usize;
                if target == robot {
                    return Err(reader.err("a robot cannot measure itself"));
                }
                let range = reader.float(&rec, 4)?;
                if range <= 0.0 {
                    return Err(reader.err("range must be positive"));
                }
                pending.entry(step).or_default().measurements.push(RelativeMeasurement {
                    observer: RobotId(robot),
                    target: RobotId(target),
                    range,
                    bearing: reader.float(&rec, 5)?,
                    step,
                });
            }
            "truth" => {
                let pose = Pose::new(reader.float(&rec, 4)?, reader.float(&rec, 5)?, reader.float(&rec, 6)?)
                    .map_err(|e| reader.err(e.to_string()))?;
                let slot = if step == 0 {
                    &mut initial_truth
                } else {
                    &mut pending.entry(step).or_default().truth
                };
                if slot.insert(robot, pose).is_some() {
                    return Err(reader.err(format!("duplicate truth row for robot {robot} at step {step}")));
                }
            }
            other => return Err(reader.err(format!("unknown row kind `{other}`"))),
        }
    }

    let end_row = reader.row;
    let at_end = |reason: String| CliError::schema(path, end_row, reason);
    let n = initial.len();
    if n == 0 {
        return Err(at_end("log has no init rows".into()));
    }
    if initial.keys().copied().ne(0..n) {
        return Err(at_end(format!("init rows must cover robots 0..{n} exactly")));
    }
    let complete = |m: &BTreeMap<usize, Pose>| m.len() == n && m.keys().copied().eq(0..n);
    if !initial_truth.is_empty() && !complete(&initial_truth) {
        return Err(at_end("step 0 truth rows do not cover every robot".into()));
    }

    let n_steps = pending.keys().next_back().copied().unwrap_or(0);
    let any_truth = pending.values().any(|p| !p.truth.is_empty());
    let mut steps = Vec::with_capacity(n_steps as usize);
    for step in 1..=n_steps {
        let p = pending.remove(&step).unwrap_or_default();
        if let Some(missing) = (0..n).find(|r| !p.controls.contains_key(r)) {
            return Err(at_end(format!("robot {missing} has no odom row at step {step}")));
        }
        if p.controls.len() != n {
            return Err(at_end(format!("odom rows at step {step} name robots outside 0..{n}")));
        }
        if let Some(m) = p
            .measurements
            .iter()
            .find(|m| m.observer.index() >= n || m.target.index() >= n)
        {
            return Err(at_end(format!(
                "measurement {} -> {} at step {step} names an unknown robot",
                m.observer, m.target
            )));
        }
        let truth = if any_truth {
            if !complete(&p.truth) {
                return Err(at_end(format!("truth rows at step {step} do not cover every robot")));
            }
            Some(p.truth.into_values().collect())
        } else {
            None
        };
        steps.push(ReplayStep {
            step,
            controls: p.controls.into_values().collect(),
            measurements: p.measurements,
            truth,
        });
    }

    Ok(ReplayLog {
        initial: initial.into_values().collect(),
        initial_truth: (!initial_truth.is_empty()).then(|| initial_truth.into_values().collect()),
        steps,
    })
}
