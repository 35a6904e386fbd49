//! Independent validation of schedule tables: exact TT deadline accounting,
//! and brute-force worst-case ET response measurement by simulating the
//! second-level fixed-priority dispatcher in the table's idle slots.
//!
//! The ET adversary is the synchronous pattern: every ET task releases at
//! once and re-releases at its minimum inter-arrival time. Because a fixed
//! table breaks time-translation invariance, no single critical instant
//! exists; the measurement sweeps every release offset against the cycle
//! instead. The sweep is exhaustive over phases but fixes the release
//! pattern, so it is a high-confidence oracle, not a certified analysis;
//! the analytic response bound, which dominates all patterns, is checked
//! alongside it.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use num_integer::Integer;
use rayon::prelude::*;
use thiserror::Error;

use crate::budget::{window_envelope_check, BudgetParams, ScheduleTable, Slot};
use crate::envelope::{et_response_bound, ResponseBound};
use crate::rational::{rtick, Rat};
use crate::taskmodel::{hyperperiod, Aggregates, Task, TaskId, TaskSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TtViolation {
    #[error("table cycle {cycle} is not a multiple of the TT hyperperiod {hyperperiod}")]
    CycleMismatch { cycle: u64, hyperperiod: u64 },
    #[error("slot {at} references TT index {index} beyond the task list")]
    UnknownIndex { index: u32, at: u64 },
    #[error("{task} released at {release} holds {got} of {need} slots before its deadline")]
    WrongAllocation { task: TaskId, release: u64, got: u64, need: u64 },
    #[error("{task} runs at slot {at}, outside every one of its job windows")]
    StraySlot { task: TaskId, at: u64 },
}

/// Exact accounting of the repeating table against the TT jobs: every job
/// receives its full cost inside `[release, release + deadline)`, and no
/// task runs outside its windows. Slot indices ascend within each check, so
/// the first violation is deterministic.
pub fn validate_tt(sched: &ScheduleTable, tt: &[Task]) -> Result<(), TtViolation> {
    let cycle = sched.cycle();
    for (at, slot) in sched.slots.iter().enumerate() {
        if let Slot::Tt(index) = *slot {
            if index as usize >= tt.len() {
                return Err(TtViolation::UnknownIndex { index, at: at as u64 });
            }
        }
    }
    if tt.is_empty() {
        return Ok(());
    }
    let hyper = hyperperiod(tt).expect("TT periods validated upstream");
    if cycle == 0 || cycle % hyper != 0 {
        return Err(TtViolation::CycleMismatch { cycle, hyperperiod: hyper });
    }
    for (i, t) in tt.iter().enumerate() {
        let owned = Slot::Tt(i as u32);
        for release in (0..cycle).step_by(t.period as usize) {
            let got = (release..release + t.deadline)
                .filter(|&s| sched.slots[(s % cycle) as usize] == owned)
                .count() as u64;
            if got != t.wcet {
                return Err(TtViolation::WrongAllocation {
                    task: t.id.clone(),
                    release,
                    got,
                    need: t.wcet,
                });
            }
        }
        // Constrained deadlines make the windows disjoint, so any slot at a
        // period offset past the deadline serves no job at all.
        if let Some(at) =
            (0..cycle).find(|&s| sched.slots[s as usize] == owned && s % t.period >= t.deadline)
        {
            return Err(TtViolation::StraySlot { task: t.id.clone(), at });
        }
    }
    Ok(())
}

/// The idle capacity cannot drain the synchronous ET load released at
/// `offset`: the backlog grows between two phase-aligned snapshots.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("ET backlog keeps growing under release offset {offset}")]
pub struct BacklogUnbounded {
    pub offset: u64,
}

/// Snapshots are comparable only where table phase and release phases both
/// repeat, so the observation span folds the ET periods into the cycle. The
/// fold stops growing at this cap; periods left unfolded degrade the
/// backlog check from certified to heuristic (and the span back to the
/// cycle itself when even that exceeds the cap).
const ALIGN_CAP: u64 = 1 << 16;

fn alignment_span(cycle: u64, et: &[Task]) -> u64 {
    let mut span = cycle;
    for t in et {
        let folded = u128::from(span / span.gcd(&t.period)) * u128::from(t.period);
        if folded <= u128::from(ALIGN_CAP) {
            span = folded as u64;
        }
    }
    span
}

/// Worst observed response per ET task, with the release offset that
/// produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EtMeasurement {
    pub worst_response: u64,
    pub witness_offset: u64,
}

/// Simulates one release offset: all ET tasks release together at `offset`
/// and re-release at their minimum inter-arrival times; idle slots serve
/// the highest-priority pending job, FIFO within a priority level; TT slots
/// always preempt. Returns the per-task worst response over a horizon of
/// two alignment spans plus the largest deadline.
///
/// The backlog check compares total pending work at one and two spans after
/// the release: the samples see identical table and release phases, so the
/// backlog is non-decreasing between them and strict growth means the load
/// never drains. Jobs still pending at the horizon count with their elapsed
/// wait when released within the sampled spans (already past every
/// deadline by then).
pub fn et_responses_at(
    sched: &ScheduleTable,
    et: &[Task],
    offset: u64,
) -> Result<Vec<u64>, BacklogUnbounded> {
    let cycle = sched.cycle();
    assert!(cycle > 0, "table must have at least one slot");
    if et.is_empty() {
        return Ok(Vec::new());
    }

    struct Job {
        task: usize,
        left: u64,
        release: u64,
    }

    let max_deadline = et.iter().map(|t| t.deadline).max().expect("nonempty ET set");
    let span = alignment_span(cycle, et);
    let end = offset + 2 * span + max_deadline;

    let mut jobs: Vec<Job> = Vec::new();
    let mut worst = vec![0u64; et.len()];
    let mut pending_at = [0u64; 2];
    for t in offset..end {
        if t == offset + span || t == offset + 2 * span {
            pending_at[((t - offset) / span - 1) as usize] =
                jobs.iter().map(|j| j.left).sum();
        }
        for (i, task) in et.iter().enumerate() {
            if (t - offset) % task.period == 0 {
                jobs.push(Job { task: i, left: task.wcet, release: t });
            }
        }
        if sched.slots[(t % cycle) as usize] == Slot::Idle {
            if let Some(job) =
                jobs.iter_mut().min_by_key(|j| (Reverse(et[j.task].priority), j.release))
            {
                job.left -= 1;
                if job.left == 0 {
                    worst[job.task] = worst[job.task].max(t + 1 - job.release);
                }
            }
        }
        jobs.retain(|j| j.left > 0);
    }

    if pending_at[1] > pending_at[0] {
        return Err(BacklogUnbounded { offset });
    }
    for j in &jobs {
        if j.release <= offset + 2 * span {
            worst[j.task] = worst[j.task].max(end - j.release);
        }
    }
    Ok(worst)
}

/// Sweeps every release offset in `[0, cycle)` and keeps the per-task worst
/// response with its earliest witness offset. Offsets are independent, so
/// the sweep runs in parallel; results are folded in offset order.
pub fn measure_et_worst(
    sched: &ScheduleTable,
    et: &[Task],
) -> Result<BTreeMap<TaskId, EtMeasurement>, BacklogUnbounded> {
    let runs: Vec<Result<Vec<u64>, BacklogUnbounded>> = (0..sched.cycle())
        .into_par_iter()
        .map(|offset| et_responses_at(sched, et, offset))
        .collect();
    let mut worst = vec![EtMeasurement { worst_response: 0, witness_offset: 0 }; et.len()];
    for (offset, run) in runs.into_iter().enumerate() {
        for (i, &response) in run?.iter().enumerate() {
            if response > worst[i].worst_response {
                worst[i] =
                    EtMeasurement { worst_response: response, witness_offset: offset as u64 };
            }
        }
    }
    Ok(et.iter().zip(worst).map(|(t, m)| (t.id.clone(), m)).collect())
}

/// A measured response above the analytic bound for its priority level.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundBreach {
    pub task: TaskId,
    pub measured: u64,
    pub bound: Rat,
}

/// Everything the oracle can say about one table.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub tt_violation: Option<TtViolation>,
    /// Empty when the backlog check failed.
    pub et_worst: BTreeMap<TaskId, EtMeasurement>,
    /// Offset whose backlog would not drain, if any.
    pub backlog_unbounded: Option<u64>,
    pub envelope_ok: bool,
    /// Measured responses above the analytic bound at the exported ceiling.
    pub bound_breaches: Vec<BoundBreach>,
}

impl ValidationReport {
    pub fn tt_ok(&self) -> bool {
        self.tt_violation.is_none()
    }

    pub fn all_green(&self) -> bool {
        self.tt_ok()
            && self.backlog_unbounded.is_none()
            && self.envelope_ok
            && self.bound_breaches.is_empty()
    }
}

/// Composes the TT check, the ET measurement, the window-sum envelope
/// check, and the measured-versus-analytic comparison at the exported
/// ceiling. Levels without a finite analytic bound have nothing to breach.
pub fn full_report(sched: &ScheduleTable, ts: &TaskSet, params: &BudgetParams) -> ValidationReport {
    let tt_violation = validate_tt(sched, &ts.tt).err();
    let (et_worst, backlog_unbounded) = match measure_et_worst(sched, &ts.et) {
        Ok(m) => (m, None),
        Err(BacklogUnbounded { offset }) => (BTreeMap::new(), Some(offset)),
    };
    let envelope_ok = window_envelope_check(sched, &params.service_envelope()).is_ok();

    let ag = Aggregates::of(ts);
    let mut bound_breaches = Vec::new();
    for t in &ts.et {
        let Some(m) = et_worst.get(&t.id) else { continue };
        if let ResponseBound::Finite(bound) = et_response_bound(&ag, t.priority, &params.ceiling) {
            if rtick(m.worst_response) > bound {
                bound_breaches.push(BoundBreach {
                    task: t.id.clone(),
                    measured: m.worst_response,
                    bound,
                });
            }
        }
    }
    ValidationReport { tt_violation, et_worst, backlog_unbounded, envelope_ok, bound_breaches }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::{max_tt_burst, BurstBound};
    use crate::polling::{
        advpoll_design, advpoll_response, advpoll_table, default_cycle_cap, llf_table, spoll_table,
        Baseline, LlfOutcome, LlfTask, PeriodRule, Response, ServerDesign,
    };
    use crate::rational::{rat, rint};
    use crate::synth::{synthesize, BudgetGrid, Synthesis};
    use crate::taskmodel::{task, TaskKind};
    use proptest::prelude::*;

    fn tt(id: &str, wcet: u64, period: u64, deadline: u64) -> Task {
        task(id, TaskKind::Tt, wcet, period, deadline, 7)
    }

    fn et(id: &str, wcet: u64, period: u64, deadline: u64, priority: u32) -> Task {
        task(id, TaskKind::Et, wcet, period, deadline, priority)
    }

    fn table(slots: &[Option<u32>]) -> ScheduleTable {
        ScheduleTable::new(
            slots.iter().map(|s| s.map_or(Slot::Idle, Slot::Tt)).collect(),
        )
    }

    #[test]
    fn tt_validation_accepts_exact_tables() {
        let tasks = [tt("tt0", 1, 3, 3)];
        assert_eq!(validate_tt(&table(&[Some(0), None, None]), &tasks), Ok(()));
        // An empty TT set has nothing to check.
        assert_eq!(validate_tt(&ScheduleTable::all_idle(4), &[]), Ok(()));
    }

    #[test]
    fn tt_validation_flags_missing_and_stray_slots() {
        let tasks = [tt("tt0", 1, 3, 3)];
        assert_eq!(
            validate_tt(&ScheduleTable::all_idle(3), &tasks),
            Err(TtViolation::WrongAllocation {
                task: "tt0".into(),
                release: 0,
                got: 0,
                need: 1
            })
        );
        assert_eq!(
            validate_tt(&table(&[Some(0), Some(0), None]), &tasks),
            Err(TtViolation::WrongAllocation {
                task: "tt0".into(),
                release: 0,
                got: 2,
                need: 1
            })
        );
        // The window is satisfied, but a slot runs past the deadline.
        let constrained = [tt("tt0", 1, 3, 2)];
        assert_eq!(
            validate_tt(&table(&[Some(0), None, Some(0)]), &constrained),
            Err(TtViolation::StraySlot { task: "tt0".into(), at: 2 })
        );
    }

    #[test]
    fn tt_validation_checks_table_structure() {
        let tasks = [tt("tt0", 1, 3, 3)];
        assert_eq!(
            validate_tt(&ScheduleTable::all_idle(4), &tasks),
            Err(TtViolation::CycleMismatch { cycle: 4, hyperperiod: 3 })
        );
        assert_eq!(
            validate_tt(&table(&[Some(7), None, None]), &tasks),
            Err(TtViolation::UnknownIndex { index: 7, at: 0 })
        );
    }

    #[test]
    fn micro_instance_sweep_is_exhaustive() {
        // One TT slot per three; the ET task tolerates a response of 3.
        let sched = table(&[Some(0), None, None]);
        let ets = [et("a", 1, 3, 3, 3)];
        let worst = measure_et_worst(&sched, &ets).unwrap();
        let m = &worst[&TaskId::from("a")];
        // Releasing into the TT slot waits it out; the bound holds.
        assert_eq!((m.worst_response, m.witness_offset), (2, 0));
    }

    #[test]
    fn zero_idle_table_reports_unbounded_backlog() {
        let sched = table(&[Some(0)]);
        let ets = [et("a", 1, 5, 5, 3)];
        assert_eq!(measure_et_worst(&sched, &ets), Err(BacklogUnbounded { offset: 0 }));
    }

    #[test]
    fn overload_reports_unbounded_backlog() {
        // Half the slots are idle; the ET task needs three quarters.
        let sched = table(&[Some(0), None]);
        let ets = [et("a", 3, 4, 4, 3)];
        assert!(measure_et_worst(&sched, &ets).is_err());
    }

    #[test]
    fn isolated_task_on_an_idle_table_responds_in_its_cost() {
        let sched = ScheduleTable::all_idle(4);
        let ets = [et("a", 2, 5, 5, 3)];
        let worst = measure_et_worst(&sched, &ets).unwrap();
        assert_eq!(worst[&TaskId::from("a")].worst_response, 2);
    }

    #[test]
    fn priority_orders_service_and_fifo_breaks_ties() {
        let sched = ScheduleTable::all_idle(5);
        // Equal priority: input order is FIFO order at a synchronous release.
        let fifo = [et("a", 2, 10, 10, 3), et("b", 1, 10, 10, 3)];
        let worst = measure_et_worst(&sched, &fifo).unwrap();
        assert_eq!(worst[&TaskId::from("a")].worst_response, 2);
        assert_eq!(worst[&TaskId::from("b")].worst_response, 3);

        // A higher level is served first regardless of input order.
        let ranked = [et("a", 2, 10, 10, 3), et("b", 1, 10, 10, 5)];
        let worst = measure_et_worst(&sched, &ranked).unwrap();
        assert_eq!(worst[&TaskId::from("a")].worst_response, 3);
        assert_eq!(worst[&TaskId::from("b")].worst_response, 1);
    }

    #[test]
    fn higher_priority_releases_preempt_running_jobs() {
        let sched = ScheduleTable::all_idle(4);
        let ets = [et("slow", 3, 20, 20, 1), et("fast", 1, 2, 2, 5)];
        let worst = measure_et_worst(&sched, &ets).unwrap();
        // The slow job is stretched across the fast task's gaps.
        assert_eq!(worst[&TaskId::from("slow")].worst_response, 6);
        assert_eq!(worst[&TaskId::from("fast")].worst_response, 1);
    }

    #[test]
    fn offsets_a_cycle_apart_behave_identically() {
        let sched = table(&[Some(0), None, None]);
        let ets = [et("a", 1, 3, 3, 3), et("b", 1, 4, 4, 2)];
        for offset in 0..3 {
            assert_eq!(
                et_responses_at(&sched, &ets, offset),
                et_responses_at(&sched, &ets, offset + 3)
            );
        }
    }

    #[test]
    fn witness_replay_reproduces_the_worst_response() {
        let sched = table(&[Some(0), Some(0), None, None]);
        let ets = [et("a", 1, 4, 8, 3)];
        let worst = measure_et_worst(&sched, &ets).unwrap();
        let m = &worst[&TaskId::from("a")];
        assert_eq!(m.worst_response, 3);
        let replay = et_responses_at(&sched, &ets, m.witness_offset).unwrap();
        assert_eq!(replay[0], m.worst_response);
    }

    #[test]
    fn polling_baseline_reports_all_green() {
        let ts = TaskSet::new(
            1,
            rint(1),
            vec![tt("tt0", 1, 2, 2), et("a", 1, 8, 8, 3)],
        );
        let (schedule, params) =
            match spoll_table(&ts, PeriodRule::Midpoint, default_cycle_cap(&ts)).unwrap() {
                Baseline::Feasible { schedule, params, .. } => (schedule, params),
                other => panic!("expected a baseline, got {other:?}"),
            };
        let report = full_report(&schedule, &ts, &params);
        assert!(report.all_green(), "{report:?}");
        assert!(report.et_worst[&TaskId::from("a")].worst_response <= 8);

        // Dropping the TT slot turns exactly the TT check red.
        let gutted = ScheduleTable::all_idle(schedule.cycle());
        let report = full_report(&gutted, &ts, &params);
        assert!(!report.tt_ok());
        assert!(report.envelope_ok && report.backlog_unbounded.is_none());

        // Re-packing the TT slots adjacently keeps every deadline but
        // breaks the exported envelope, and only it.
        let packed = table(&[None, Some(0), Some(0), None]);
        assert_eq!(validate_tt(&packed, &ts.tt), Ok(()));
        let report = full_report(&packed, &ts, &params);
        assert!(report.tt_ok() && !report.envelope_ok);
        assert!(report.backlog_unbounded.is_none() && report.bound_breaches.is_empty());
    }

    #[test]
    fn synthesized_micro_instance_reports_all_green() {
        let ts = TaskSet::new(1, rint(1), vec![tt("tt0", 1, 3, 3), et("a", 1, 3, 3, 3)]);
        let b_tt_max = match max_tt_burst(&ts) {
            BurstBound::Feasible { b_tt_max, .. } => b_tt_max,
            other => panic!("expected an admissible burst, got {other:?}"),
        };
        assert_eq!(b_tt_max, rint(1));
        let outcome = match synthesize(&ts.tt, &rint(1), &b_tt_max, 3, BudgetGrid::Pruned) {
            Ok(Synthesis::Feasible(o)) => o,
            other => panic!("expected a table, got {other:?}"),
        };
        assert_eq!(validate_tt(&outcome.schedule, &ts.tt), Ok(()));
        let report = full_report(&outcome.schedule, &ts, &outcome.params);
        assert!(report.all_green(), "{report:?}");
    }

    fn arb_tt_tasks() -> impl Strategy<Value = Vec<Task>> {
        proptest::collection::vec((1u64..3, 0usize..4), 1..3).prop_map(|specs| {
            let periods = [2u64, 3, 4, 6];
            specs
                .iter()
                .enumerate()
                .map(|(i, &(c, p))| {
                    let t = periods[p];
                    tt(&format!("tt{i}"), c.min(t), t, t)
                })
                .collect()
        })
    }

    fn arb_et_tasks() -> impl Strategy<Value = Vec<Task>> {
        proptest::collection::vec((1u64..3, 0usize..4, 0u32..7), 1..3).prop_map(|specs| {
            let periods = [4u64, 6, 8, 12];
            specs
                .iter()
                .enumerate()
                .map(|(i, &(c, p, prio))| et(&format!("e{i}"), c, periods[p], periods[p], prio))
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn feasible_laxity_tables_pass_tt_validation(tasks in arb_tt_tasks()) {
            let cycle = hyperperiod(&tasks).unwrap();
            let rows: Vec<LlfTask> =
                tasks.iter().enumerate().map(|(i, t)| LlfTask::tt(i, t)).collect();
            if let LlfOutcome::Feasible(sched) = llf_table(&rows, cycle) {
                prop_assert_eq!(validate_tt(&sched, &tasks), Ok(()));
            }
        }

        #[test]
        fn spoll_success_implies_green_report(
            tt_tasks in arb_tt_tasks(),
            et_tasks in arb_et_tasks(),
        ) {
            let mut tasks = tt_tasks;
            tasks.extend(et_tasks);
            let ts = TaskSet::new(1, rint(1), tasks);
            let cap = default_cycle_cap(&ts);
            if let Baseline::Feasible { schedule, params, .. } =
                spoll_table(&ts, PeriodRule::Midpoint, cap).unwrap()
            {
                let report = full_report(&schedule, &ts, &params);
                prop_assert!(report.all_green(), "{:?}", report);
                for t in &ts.et {
                    prop_assert!(report.et_worst[&t.id].worst_response <= t.deadline);
                }
            }
        }

        #[test]
        fn advpoll_success_implies_green_report_within_analysis(
            tt_tasks in arb_tt_tasks(),
            et_tasks in arb_et_tasks(),
        ) {
            let mut tasks = tt_tasks;
            tasks.extend(et_tasks);
            let ts = TaskSet::new(1, rint(1), tasks);
            let cap = default_cycle_cap(&ts);
            if let Baseline::Feasible { schedule, params, .. } = advpoll_table(&ts, cap).unwrap() {
                let report = full_report(&schedule, &ts, &params);
                prop_assert!(report.all_green(), "{:?}", report);
                let srv = match advpoll_design(&ts, cap).unwrap() {
                    ServerDesign::Feasible(srv) => srv,
                    ServerDesign::Infeasible => unreachable!("a table exists"),
                };
                for (i, t) in ts.et.iter().enumerate() {
                    let analytic = match advpoll_response(&ts, i, &srv).unwrap() {
                        Response::Converged(r) => r,
                        Response::Divergent => unreachable!("design accepted the server"),
                    };
                    let measured = rtick(report.et_worst[&t.id].worst_response);
                    prop_assert!(measured <= analytic && analytic <= rtick(t.deadline));
                }
            }
        }

        #[test]
        fn synthesis_success_implies_green_report(
            tt_tasks in arb_tt_tasks(),
            et_tasks in arb_et_tasks(),
        ) {
            let mut tasks = tt_tasks;
            tasks.extend(et_tasks);
            let ts = TaskSet::new(1, rint(1), tasks);
            let b_tt_max = match max_tt_burst(&ts) {
                BurstBound::Feasible { b_tt_max, .. } => b_tt_max,
                BurstBound::Infeasible { .. } => return Ok(()),
            };
            let cycle = hyperperiod(&ts.tt).unwrap();
            if let Synthesis::Feasible(outcome) =
                synthesize(&ts.tt, &rint(1), &b_tt_max, cycle, BudgetGrid::Pruned).unwrap()
            {
                let report = full_report(&outcome.schedule, &ts, &outcome.params);
                prop_assert!(report.all_green(), "{:?}", report);
            }
        }
    }

    #[test]
    fn bound_breach_detection_uses_the_exported_ceiling() {
        // A table this bursty cannot have come from the claimed budget: the
        // envelope check and the bound comparison both flag it.
        let ts = TaskSet::new(1, rint(1), vec![tt("tt0", 2, 8, 8), et("a", 1, 4, 4, 3)]);
        let sched = table(&[Some(0), Some(0), None, None, None, None, None, None]);
        let params =
            BudgetParams::for_utilization(&rat(1, 4), &rint(1), rat(1, 4)).unwrap();
        let report = full_report(&sched, &ts, &params);
        assert!(report.tt_ok());
        assert!(!report.envelope_ok);
        assert_eq!(report.bound_breaches.len(), 1);
        assert_eq!(report.bound_breaches[0].task, TaskId::from("a"));
    }
}
