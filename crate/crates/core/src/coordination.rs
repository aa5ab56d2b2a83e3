//! Stationary-robot selection and the per-step correction chain.
//!
//! Each epoch one robot holds still. Moving robots are then corrected in
//! order of measured range outward from it: a robot may only use neighbors
//! that are already localized this step.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ScheduleError;
use crate::geometry::RobotId;
use crate::models::RelativeMeasurement;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpochMode {
    SeededRandom,
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpochPolicy {
    pub mode: EpochMode,
    /// Timesteps per epoch.
    pub length: u64,
}

impl Default for EpochPolicy {
    fn default() -> Self {
        Self {
            mode: EpochMode::SeededRandom,
            length: 20,
        }
    }
}

impl EpochPolicy {
    pub fn epoch_of(&self, step_index: u64) -> Result<u64, ScheduleError> {
        if self.length == 0 {
            return Err(ScheduleError::ZeroEpochLength);
        }
        Ok(step_index / self.length)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub robot: RobotId,
    /// Localized neighbors to correct against, nearest first. Empty means
    /// prediction only.
    pub sources: Vec<RobotId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub stationary: RobotId,
    pub correction_order: Vec<ScheduleEntry>,
}

impl StepSchedule {
    /// Number of neighbor beliefs that must be sent to correctors this step.
    pub fn belief_transfers(&self) -> usize {
        self.correction_order.iter().map(|e| e.sources.len()).sum()
    }

    /// Checks the chain property against `fleet`.
    pub fn check(&self, fleet: &[RobotId]) -> Result<(), String> {
        let mut localized = vec![self.stationary];
        for entry in &self.correction_order {
            if entry.robot == self.stationary {
                return Err(format!("stationary robot {} scheduled for correction", entry.robot));
            }
            if localized.contains(&entry.robot) {
                return Err(format!("robot {} scheduled twice", entry.robot));
            }
            if let Some(bad) = entry.sources.iter().find(|s| !localized.contains(s)) {
                return Err(format!(
                    "robot {} uses source {} before it is localized",
                    entry.robot, bad
                ));
            }
            localized.push(entry.robot);
        }
        let mut scheduled = localized;
        scheduled.sort();
        let mut expected = fleet.to_vec();
        expected.sort();
        if scheduled != expected {
            return Err(format!("schedule covers {scheduled:?}, fleet is {expected:?}"));
        }
        Ok(())
    }
}

/// Picks the robot that holds still during epoch `epoch_index`.
pub fn select_stationary(
    fleet: &[RobotId],
    epoch_index: u64,
    policy: &EpochPolicy,
    seed: u64,
) -> Result<RobotId, ScheduleError> {
    if fleet.is_empty() {
        return Err(ScheduleError::EmptyFleet);
    }
    let n = fleet.len() as u64;
    let slot = match policy.mode {
        EpochMode::RoundRobin => epoch_index % n,
        EpochMode::SeededRandom => rng::stream(seed, Purpose::StationarySelection, epoch_index).random_range(0..n),
    };
    Ok(fleet[slot as usize])
}

/// Greedy nearest-first correction chain rooted at `stationary`.
///
/// Only measurements whose observer is a moving robot are used; the observer
/// is the robot being corrected. Robots with no path to the localized set
/// are appended last, in id order, with no sources.
pub fn build_schedule(fleet: &[RobotId], stationary: RobotId, measurements: &[RelativeMeasurement]) -> StepSchedule {
    // Shortest measured range per (observer, target).
    let mut ranges: BTreeMap<(RobotId, RobotId), f64> = BTreeMap::new();
    for m in measurements {
        if m.observer == stationary
            || m.observer == m.target
            || !fleet.contains(&m.observer)
            || !fleet.contains(&m.target)
            || !m.range.is_finite()
        {
            continue;
        }
        ranges
            .entry((m.observer, m.target))
            .and_modify(|r| *r = r.min(m.range))
            .or_insert(m.range);
    }

    let mut pending: Vec<RobotId> = fleet.iter().copied().filter(|&r| r != stationary).collect();
    pending.sort();
    pending.dedup();
    let mut localized = vec![stationary];
    let mut order = Vec::with_capacity(pending.len());

    loop {
        let mut best: Option<(f64, RobotId)> = None;
        for &robot in &pending {
            let nearest = localized
                .iter()
                .filter_map(|t| ranges.get(&(robot, *t)))
                .copied()
                .fold(f64::INFINITY, f64::min);
            if nearest.is_finite() && best.is_none_or(|(r, id)| nearest < r || (nearest == r && robot < id)) {
                best = Some((nearest, robot));
            }
        }
        let Some((_, robot)) = best else { break };
        let mut sources: Vec<(f64, RobotId)> = localized
            .iter()
            .filter_map(|t| ranges.get(&(robot, *t)).map(|r| (*r, *t)))
            .collect();
        sources.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        order.push(ScheduleEntry {
            robot,
            sources: sources.into_iter().map(|(_, id)| id).collect(),
        });
        localized.push(robot);
        pending.retain(|&r| r != robot);
    }

    order.extend(pending.into_iter().map(|robot| ScheduleEntry {
        robot,
        sources: Vec::new(),
    }));
    StepSchedule {
        stationary,
        correction_order: order,
    }
}

/// Schedule for the zero-based timestep `step_index`.
pub fn plan_step(
    fleet: &[RobotId],
    policy: &EpochPolicy,
    step_index: u64,
    measurements: &[RelativeMeasurement],
    seed: u64,
) -> Result<StepSchedule, ScheduleError> {
    let epoch = policy.epoch_of(step_index)?;
    let stationary = select_stationary(fleet, epoch, policy, seed)?;
    Ok(build_schedule(fleet, stationary, measurements))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fleet(n: usize) -> Vec<RobotId> {
        (0..n).map(RobotId).collect()
    }

    fn meas(observer: usize, target: usize, range: f64) -> RelativeMeasurement {
        RelativeMeasurement {
            observer: RobotId(observer),
            target: RobotId(target),
            range,
            bearing: 0.0,
            step: 1,
        }
    }

    #[test]
    fn round_robin_cycles() {
        let policy = EpochPolicy {
            mode: EpochMode::RoundRobin,
            length: 20,
        };
        let picks: Vec<usize> = (0..6)
            .map(|e| select_stationary(&fleet(5), e, &policy, 0).unwrap().0)
            .collect();
        assert_eq!(picks, vec![0, 1, 2, 3, 4, 0]);
    }

    #[test]
    fn seeded_random_is_deterministic() {
        let policy = EpochPolicy::default();
        let run = |seed| -> Vec<RobotId> {
            (0..50)
                .map(|e| select_stationary(&fleet(5), e, &policy, seed).unwrap())
                .collect()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn seeded_random_is_balanced() {
        // Binomial(10000, 0.2): sd = 40, so 3 sd = 120 < 150.
        let policy = EpochPolicy::default();
        let mut counts = [0usize; 5];
        for e in 0..10_000 {
            counts[select_stationary(&fleet(5), e, &policy, 2024).unwrap().0] += 1;
        }
        for c in counts {
            assert!((c as i64 - 2000).abs() <= 150, "{counts:?}");
        }
    }

    #[test]
    fn empty_fleet_and_zero_epoch_are_errors() {
        assert_eq!(
            select_stationary(&[], 0, &EpochPolicy::default(), 0),
            Err(ScheduleError::EmptyFleet)
        );
        let bad = EpochPolicy {
            mode: EpochMode::RoundRobin,
            length: 0,
        };
        assert_eq!(
            plan_step(&fleet(3), &bad, 0, &[], 0),
            Err(ScheduleError::ZeroEpochLength)
        );
    }

    #[test]
    fn chain_follows_nearest_neighbor() {
        // Stationary 0; robot 3 nearest to 0, robot 1 nearest to 3, robot 2 nearest to 1.
        let ms = vec![
            meas(3, 0, 1.0),
            meas(1, 0, 4.0),
            meas(1, 3, 1.5),
            meas(2, 1, 1.2),
            meas(2, 3, 3.0),
            meas(0, 3, 1.0),
            meas(4, 2, 2.0),
        ];
        let s = build_schedule(&fleet(5), RobotId(0), &ms);
        let order: Vec<(usize, Vec<usize>)> = s
            .correction_order
            .iter()
            .map(|e| (e.robot.0, e.sources.iter().map(|r| r.0).collect()))
            .collect();
        assert_eq!(
            order,
            vec![(3, vec![0]), (1, vec![3, 0]), (2, vec![1, 3]), (4, vec![2])]
        );
        s.check(&fleet(5)).unwrap();
        assert_eq!(s.belief_transfers(), 6);
    }

    #[test]
    fn no_measurements_means_dead_reckoning() {
        let s = build_schedule(&fleet(5), RobotId(2), &[]);
        assert_eq!(s.stationary, RobotId(2));
        let ids: Vec<usize> = s.correction_order.iter().map(|e| e.robot.0).collect();
        assert_eq!(ids, vec![0, 1, 3, 4]);
        assert!(s.correction_order.iter().all(|e| e.sources.is_empty()));
        s.check(&fleet(5)).unwrap();
    }

    #[test]
    fn range_ties_go_to_lower_id() {
        let ms = vec![meas(3, 0, 2.0), meas(1, 0, 2.0)];
        let s = build_schedule(&fleet(4), RobotId(0), &ms);
        assert_eq!(s.correction_order[0].robot, RobotId(1));
        assert_eq!(s.correction_order[1].robot, RobotId(3));
    }

    #[test]
    fn epochs_share_a_stationary_robot() {
        let policy = EpochPolicy {
            mode: EpochMode::RoundRobin,
            length: 20,
        };
        let f = fleet(5);
        let s0 = plan_step(&f, &policy, 0, &[], 9).unwrap();
        let s19 = plan_step(&f, &policy, 19, &[], 9).unwrap();
        let s20 = plan_step(&f, &policy, 20, &[], 9).unwrap();
        assert_eq!(s0.stationary, s19.stationary);
        assert_ne!(s0.stationary, s20.stationary);
    }

    #[test]
    fn check_detects_chain_violation() {
        let s = StepSchedule {
            stationary: RobotId(0),
            correction_order: vec![
                ScheduleEntry {
                    robot: RobotId(1),
                    sources: vec![RobotId(2)],
                },
                ScheduleEntry {
                    robot: RobotId(2),
                    sources: vec![RobotId(0)],
                },
            ],
        };
        assert!(s.check(&fleet(3)).is_err());
    }
}
