//! Task model: time-triggered (TT) and event-triggered (ET) tasks over a
//! discrete microtick timeline.
//!
//! Conventions baked into the model:
//! - all durations are integer microticks;
//! - TT tasks are periodic with constrained deadlines (`D <= T`) and share a
//!   single priority strictly above every ET priority;
//! - ET tasks are sporadic with minimal inter-arrival time `T`, arbitrary
//!   deadlines, and fixed priorities (larger value = higher priority, equal
//!   priorities served FIFO).

use crate::rational::{rtick, Rat};
use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub String);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "TT")]
    Tt,
    #[serde(rename = "ET")]
    Et,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: TaskId,
    pub kind: TaskKind,
    /// Worst-case computation time `C`, in microticks.
    pub wcet: u64,
    /// Period (TT) or minimal inter-arrival time (ET) `T`, in microticks.
    pub period: u64,
    /// Relative deadline `D`, in microticks.
    pub deadline: u64,
    /// Fixed priority; larger value = higher priority.
    pub priority: u32,
}

impl Task {
    pub fn utilization(&self) -> Rat {
        rtick(self.wcet) / rtick(self.period)
    }
}

/// A complete system: TT tasks, ET tasks, and the slot capacity `lambda`
/// (computation delivered per microtick; 1 for a single unit-speed core).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSet {
    pub microtick_ns: u64,
    pub lambda: Rat,
    pub tt: Vec<Task>,
    pub et: Vec<Task>,
}

impl TaskSet {
    pub fn new(microtick_ns: u64, lambda: Rat, tasks: Vec<Task>) -> Self {
        let (tt, et) = tasks.into_iter().partition(|t| t.kind == TaskKind::Tt);
        TaskSet { microtick_ns, lambda, tt, et }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("hyperperiod of an empty TT set is undefined")]
    EmptyTaskList,
    #[error("hyperperiod exceeds the addressable tick range (u64)")]
    HyperperiodTooLarge,
    #[error("task {0} has period 0")]
    ZeroPeriod(TaskId),
}

/// Least common multiple of the task periods. The intermediate value is
/// arbitrary precision, so the only failure modes are an empty list, a zero
/// period, or a result that does not fit the tick range.
pub fn hyperperiod(tasks: &[Task]) -> Result<u64, ModelError> {
    if tasks.is_empty() {
        return Err(ModelError::EmptyTaskList);
    }
    let mut acc = BigUint::one();
    for t in tasks {
        if t.period == 0 {
            return Err(ModelError::ZeroPeriod(t.id.clone()));
        }
        acc = acc.lcm(&BigUint::from(t.period));
    }
    acc.to_u64().ok_or(ModelError::HyperperiodTooLarge)
}

/// Utilization and computation-time aggregates, exact.
///
/// Per-priority views are relative to an ET priority level `p`:
/// `u_above(p)` counts everything scheduled in preference to level `p`
/// (all TT work plus strictly higher ET levels), while the `c_et_*`
/// accessors slice total ET computation time by level.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    pub lambda: Rat,
    pub u_tt: Rat,
    pub u_et: Rat,
    /// Sum of TT computation times, in microticks.
    pub c_tt: u64,
    /// Distinct ET priority levels, descending, with per-level sums.
    levels: Vec<LevelSums>,
}

#[derive(Debug, Clone, PartialEq)]
struct LevelSums {
    priority: u32,
    u_eq: Rat,
    c_eq: u64,
}

impl Aggregates {
    pub fn of(ts: &TaskSet) -> Self {
        let u_tt: Rat = ts.tt.iter().map(Task::utilization).sum();
        let u_et: Rat = ts.et.iter().map(Task::utilization).sum();
        let c_tt: u64 = ts.tt.iter().map(|t| t.wcet).sum();

        let mut prios: Vec<u32> = ts.et.iter().map(|t| t.priority).collect();
        prios.sort_unstable();
        prios.dedup();
        prios.reverse();

        let mut levels = Vec::with_capacity(prios.len());
        for p in prios {
            let at: Vec<&Task> = ts.et.iter().filter(|t| t.priority == p).collect();
            let u_eq: Rat = at.iter().map(|t| t.utilization()).sum();
            let c_eq: u64 = at.iter().map(|t| t.wcet).sum();
            levels.push(LevelSums { priority: p, u_eq, c_eq });
        }
        Aggregates { lambda: ts.lambda.clone(), u_tt, u_et, c_tt, levels }
    }

    /// Distinct ET priority levels present, descending.
    pub fn et_levels(&self) -> impl Iterator<Item = u32> + '_ {
        self.levels.iter().map(|l| l.priority)
    }

    /// `U_{>p}`: TT utilization plus ET utilization strictly above level `p`.
    pub fn u_above(&self, p: u32) -> Rat {
        let mut u = self.u_tt.clone();
        for l in &self.levels {
            if l.priority > p {
                u += l.u_eq.clone();
            }
        }
        u
    }

    /// `U^ET_{=p}`.
    pub fn u_et_at(&self, p: u32) -> Rat {
        self.levels
            .iter()
            .find(|l| l.priority == p)
            .map(|l| l.u_eq.clone())
            .unwrap_or_else(Rat::zero)
    }

    /// `C^ET_{>p}` in microticks.
    pub fn c_et_above(&self, p: u32) -> u64 {
        self.levels.iter().filter(|l| l.priority > p).map(|l| l.c_eq).sum()
    }

    /// `C^ET_{=p}` in microticks.
    pub fn c_et_at(&self, p: u32) -> u64 {
        self.levels.iter().find(|l| l.priority == p).map(|l| l.c_eq).unwrap_or(0)
    }

    /// `C^ET_{>=p}` in microticks.
    pub fn c_et_at_or_above(&self, p: u32) -> u64 {
        self.c_et_above(p) + self.c_et_at(p)
    }
}

/// A single broken validation rule, naming the offending task where one exists.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ZeroCost { id: TaskId },
    PeriodBelowCost { id: TaskId },
    TtDeadlineAbovePeriod { id: TaskId },
    DeadlineBelowCost { id: TaskId },
    DuplicateId { id: TaskId },
    TtPrioritiesDiffer { id: TaskId },
    TtNotAboveEt { tt_priority: u32, et_id: TaskId },
    Overloaded { total: Rat, lambda: Rat },
    NonPositiveLambda { lambda: Rat },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroCost { id } => write!(f, "task {id}: computation time must be >= 1"),
            Violation::PeriodBelowCost { id } => write!(f, "task {id}: period is below computation time"),
            Violation::TtDeadlineAbovePeriod { id } => {
                write!(f, "task {id}: TT deadline exceeds period")
            }
            Violation::DeadlineBelowCost { id } => {
                write!(f, "task {id}: deadline is below computation time")
            }
            Violation::DuplicateId { id } => write!(f, "task id {id} appears more than once"),
            Violation::TtPrioritiesDiffer { id } => {
                write!(f, "task {id}: TT tasks must share a single priority")
            }
            Violation::TtNotAboveEt { tt_priority, et_id } => write!(
                f,
                "ET task {et_id} has priority >= the TT priority {tt_priority}"
            ),
            Violation::Overloaded { total, lambda } => {
                write!(f, "total utilization {total} exceeds capacity {lambda}")
            }
            Violation::NonPositiveLambda { lambda } => {
                write!(f, "capacity lambda {lambda} must be positive")
            }
        }
    }
}

/// Checks every task-set invariant; an empty result means the set is valid.
pub fn validate(ts: &TaskSet) -> Vec<Violation> {
    let mut out = Vec::new();
    if ts.lambda <= Rat::zero() {
        out.push(Violation::NonPositiveLambda { lambda: ts.lambda.clone() });
    }

    let mut seen = HashSet::new();
    for t in ts.tt.iter().chain(&ts.et) {
        if !seen.insert(&t.id) {
            out.push(Violation::DuplicateId { id: t.id.clone() });
        }
        if t.wcet == 0 {
            out.push(Violation::ZeroCost { id: t.id.clone() });
            continue;
        }
        if t.period < t.wcet {
            out.push(Violation::PeriodBelowCost { id: t.id.clone() });
        }
        if t.kind == TaskKind::Tt && t.deadline > t.period {
            out.push(Violation::TtDeadlineAbovePeriod { id: t.id.clone() });
        }
        if t.deadline < t.wcet {
            out.push(Violation::DeadlineBelowCost { id: t.id.clone() });
        }
    }

    if let Some(first) = ts.tt.first() {
        let p = first.priority;
        for t in &ts.tt {
            if t.priority != p {
                out.push(Violation::TtPrioritiesDiffer { id: t.id.clone() });
            }
        }
        for t in &ts.et {
            if t.priority >= p {
                out.push(Violation::TtNotAboveEt { tt_priority: p, et_id: t.id.clone() });
            }
        }
    }

    let total: Rat = ts.tt.iter().chain(&ts.et).map(Task::utilization).sum();
    if total > ts.lambda && ts.lambda > Rat::zero() {
        out.push(Violation::Overloaded { total, lambda: ts.lambda.clone() });
    }
    out
}

/// Shorthand used across tests and generators.
pub fn task(id: &str, kind: TaskKind, wcet: u64, period: u64, deadline: u64, priority: u32) -> Task {
    Task { id: id.into(), kind, wcet, period, deadline, priority }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rint};

    fn tt(id: &str, c: u64, t: u64) -> Task {
        task(id, TaskKind::Tt, c, t, t, 7)
    }

    fn et(id: &str, c: u64, t: u64, d: u64, p: u32) -> Task {
        task(id, TaskKind::Et, c, t, d, p)
    }

    #[test]
    fn hyperperiod_of_common_period_grids() {
        let ts = vec![tt("a", 1, 2000), tt("b", 1, 3000), tt("c", 1, 4000)];
        assert_eq!(hyperperiod(&ts).unwrap(), 12000);
        assert_eq!(hyperperiod(&[tt("a", 1, 5)]).unwrap(), 5);
        assert_eq!(hyperperiod(&[tt("a", 1, 50), tt("b", 1, 100)]).unwrap(), 100);
    }

    #[test]
    fn hyperperiod_rejects_empty_set() {
        assert_eq!(hyperperiod(&[]), Err(ModelError::EmptyTaskList));
    }

    #[test]
    fn hyperperiod_survives_wide_intermediates() {
        // Pairwise-coprime periods whose product overflows u64 only at the end.
        let ts: Vec<Task> = [4294967291u64, 4294967279, 4294967231]
            .iter()
            .enumerate()
            .map(|(i, &p)| tt(&format!("t{i}"), 1, p))
            .collect();
        assert_eq!(hyperperiod(&ts), Err(ModelError::HyperperiodTooLarge));
    }

    #[test]
    fn aggregates_relativize_by_priority() {
        let ts = TaskSet::new(
            1000,
            rint(1),
            vec![
                tt("tt0", 1, 4), // U = 1/4
                et("hi", 1, 8, 8, 5),  // U = 1/8
                et("hi2", 1, 8, 8, 5), // U = 1/8
                et("mid", 2, 16, 16, 3), // U = 1/8
                et("lo", 1, 16, 16, 1),  // U = 1/16
            ],
        );
        let ag = Aggregates::of(&ts);
        assert_eq!(ag.u_tt, rat(1, 4));
        assert_eq!(ag.u_et, rat(1, 8) + rat(1, 8) + rat(1, 8) + rat(1, 16));
        assert_eq!(ag.c_tt, 1);

        assert_eq!(ag.u_above(5), rat(1, 4));
        assert_eq!(ag.u_above(3), rat(1, 4) + rat(1, 4));
        assert_eq!(ag.u_above(1), rat(1, 4) + rat(1, 4) + rat(1, 8));
        assert_eq!(ag.u_above(0), ag.u_tt.clone() + ag.u_et.clone());

        assert_eq!(ag.c_et_at(5), 2);
        assert_eq!(ag.c_et_above(5), 0);
        assert_eq!(ag.c_et_at_or_above(3), 4);
        assert_eq!(ag.c_et_at_or_above(1), 5);
        // Levels with no ET task aggregate to the same slices as the level above.
        assert_eq!(ag.c_et_at(2), 0);
        assert_eq!(ag.c_et_at_or_above(2), ag.c_et_above(2));
    }

    #[test]
    fn aggregate_identities_hold_on_every_level() {
        let ts = TaskSet::new(
            1000,
            rint(1),
            vec![
                tt("tt0", 2, 10),
                et("a", 1, 7, 7, 6),
                et("b", 3, 21, 40, 4),
                et("c", 2, 14, 5, 4),
                et("d", 1, 35, 35, 0),
            ],
        );
        let ag = Aggregates::of(&ts);
        for p in ag.et_levels().collect::<Vec<_>>() {
            assert_eq!(ag.c_et_above(p) + ag.c_et_at(p), ag.c_et_at_or_above(p));
            let u_et_above = ag.u_above(p) - ag.u_tt.clone();
            assert_eq!(ag.u_above(p), ag.u_tt.clone() + u_et_above);
        }
    }

    #[test]
    fn validate_flags_overload_against_configured_capacity() {
        // U = 0.5 + 0.45 = 0.95 against lambda = 0.9.
        let ts = TaskSet::new(
            1000,
            rat(9, 10),
            vec![tt("tt0", 1, 2), et("et0", 9, 20, 20, 0)],
        );
        let vs = validate(&ts);
        assert!(vs.iter().any(|v| matches!(v, Violation::Overloaded { .. })), "{vs:?}");
    }

    #[test]
    fn validate_checks_deadline_rules_by_kind() {
        let bad_tt = TaskSet::new(1000, rint(1), vec![task("x", TaskKind::Tt, 1, 4, 5, 7)]);
        assert!(validate(&bad_tt)
            .iter()
            .any(|v| matches!(v, Violation::TtDeadlineAbovePeriod { .. })));

        let bad_et = TaskSet::new(1000, rint(1), vec![task("y", TaskKind::Et, 3, 9, 2, 0)]);
        assert!(validate(&bad_et)
            .iter()
            .any(|v| matches!(v, Violation::DeadlineBelowCost { .. })));

        let bad_tt_slack = TaskSet::new(1000, rint(1), vec![task("w", TaskKind::Tt, 3, 9, 2, 7)]);
        assert!(validate(&bad_tt_slack)
            .iter()
            .any(|v| matches!(v, Violation::DeadlineBelowCost { .. })));

        // ET deadline above period is allowed.
        let ok = TaskSet::new(1000, rint(1), vec![task("z", TaskKind::Et, 1, 4, 40, 0)]);
        assert!(validate(&ok).is_empty());
    }

    #[test]
    fn validate_enforces_priority_band() {
        let ts = TaskSet::new(
            1000,
            rint(1),
            vec![tt("a", 1, 8), task("b", TaskKind::Tt, 1, 8, 8, 6), et("e", 1, 8, 8, 7)],
        );
        let vs = validate(&ts);
        assert!(vs.iter().any(|v| matches!(v, Violation::TtPrioritiesDiffer { .. })));
        assert!(vs.iter().any(|v| matches!(v, Violation::TtNotAboveEt { .. })));
    }

    #[test]
    fn validate_accepts_a_clean_set() {
        let ts = TaskSet::new(
            1000,
            rint(1),
            vec![tt("tt0", 2, 20), tt("tt1", 3, 30), et("et0", 1, 30, 15, 3)],
        );
        assert_eq!(validate(&ts), Vec::new());
    }
}
