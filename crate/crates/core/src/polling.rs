//! Polling baselines: a periodic reservation per event task (simple
//! polling) or one shared server sized by supply-bound analysis (advanced
//! polling), handed to a plain least-laxity table generator.
//!
//! Both methods turn sporadic demand into periodic rows of the table. The
//! slots a reservation wins are exported idle: the event dispatcher uses
//! them at runtime, so the table itself only ever names real TT tasks.

use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::budget::{tightest_burst, BudgetParams, ParamError, ScheduleTable, Slot};
use crate::rational::{rtick, Rat};
use crate::taskmodel::{hyperperiod, Aggregates, Task, TaskId, TaskSet};

/// How a reservation was derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PollVariant {
    /// Period equals the served deadline; requires strictly periodic slots.
    Strict,
    /// Oversampled period; slots may drift within each period.
    Oversampled,
    /// Shared server sized by response-time analysis.
    Server,
}

/// A periodic reservation standing in for event-triggered demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PollingTask {
    pub serves: Vec<TaskId>,
    /// `C_p`, in microticks.
    pub wcet: u64,
    /// `T_p`, in microticks.
    pub period: u64,
    pub variant: PollVariant,
}

impl PollingTask {
    pub fn utilization(&self) -> Rat {
        rtick(self.wcet) / rtick(self.period)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PollError {
    #[error("strict polling requires deadline == period for {0}")]
    StrictNeedsImplicitDeadline(TaskId),
    #[error("level demand is undefined for arbitrary-deadline event task {0}")]
    ArbitraryDeadline(TaskId),
    #[error("server sizing requires implicit TT deadlines; {0} is constrained")]
    ConstrainedTtDeadline(TaskId),
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// Choice of ideal polling period for an event task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeriodRule {
    /// `(D + C) / 2`: the largest period passing the availability bound
    /// `2 (T_p - C_p) + C_p <= D` when each period reserves the task's own
    /// cost.
    #[default]
    Midpoint,
    /// `(D - C) / 2`: one extra execution of margin inside the deadline
    /// window, at a correspondingly higher reservation rate.
    Conservative,
}

impl PeriodRule {
    fn ideal(self, et: &Task) -> u64 {
        match self {
            PeriodRule::Midpoint => (et.deadline + et.wcet) / 2,
            PeriodRule::Conservative => et.deadline.saturating_sub(et.wcet) / 2,
        }
    }
}

/// Strict variant: the reservation mirrors the served task one-to-one and
/// is pinned to a fixed offset by the table generator.
pub fn spoll_strict(et: &Task) -> Result<PollingTask, PollError> {
    if et.deadline != et.period {
        return Err(PollError::StrictNeedsImplicitDeadline(et.id.clone()));
    }
    Ok(PollingTask {
        serves: vec![et.id.clone()],
        wcet: et.wcet,
        period: et.deadline,
        variant: PollVariant::Strict,
    })
}

/// Oversampled reservation for one event task: the largest period at or
/// below the rule's ideal that fits its own cost and keeps the extended
/// cycle within `cycle_cap`. A constrained task reserves its cost once per
/// period; an arbitrary-deadline task reserves one cost per release that
/// can fall inside the period. `None` when no period qualifies.
pub fn spoll_derive(
    et: &Task,
    running_cycle: u64,
    cycle_cap: u64,
    rule: PeriodRule,
) -> Option<PollingTask> {
    let constrained = et.deadline <= et.period;
    for period in (1..=rule.ideal(et)).rev() {
        let wcet =
            if constrained { et.wcet } else { period.div_ceil(et.period) * et.wcet };
        if wcet > period {
            continue;
        }
        if extended_cycle(running_cycle, period) <= u128::from(cycle_cap) {
            return Some(PollingTask {
                serves: vec![et.id.clone()],
                wcet,
                period,
                variant: PollVariant::Oversampled,
            });
        }
    }
    None
}

/// `lcm(cycle, period)`, widened so the cap comparison cannot overflow.
fn extended_cycle(cycle: u64, period: u64) -> u128 {
    u128::from(cycle / cycle.gcd(&period)) * u128::from(period)
}

/// Table cycle before any reservation extends it.
fn base_cycle(ts: &TaskSet) -> u64 {
    if ts.tt.is_empty() {
        1
    } else {
        hyperperiod(&ts.tt).expect("task periods validated upstream")
    }
}

/// The conventional cap on reservation-extended cycles: four base cycles.
pub fn default_cycle_cap(ts: &TaskSet) -> u64 {
    base_cycle(ts).saturating_mul(4)
}

/// Per-event reservations threaded in input order: each accepted period
/// extends the running cycle that constrains the next.
#[derive(Debug, Clone, PartialEq)]
pub enum SpollPlan {
    Feasible { polls: Vec<PollingTask>, cycle: u64 },
    /// First event task no reservation fits; later ones go unexamined.
    Infeasible { task: TaskId },
}

pub fn spoll_plan(ts: &TaskSet, rule: PeriodRule, cycle_cap: u64) -> SpollPlan {
    let mut cycle = base_cycle(ts);
    let mut polls = Vec::with_capacity(ts.et.len());
    for et in &ts.et {
        match spoll_derive(et, cycle, cycle_cap, rule) {
            Some(poll) => {
                cycle = extended_cycle(cycle, poll.period) as u64;
                polls.push(poll);
            }
            None => return SpollPlan::Infeasible { task: et.id.clone() },
        }
    }
    SpollPlan::Feasible { polls, cycle }
}

/// Periodic-resource abstraction: `wcet` slots guaranteed somewhere in
/// every `period`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerAbstraction {
    pub wcet: u64,
    pub period: u64,
}

impl ServerAbstraction {
    pub fn new(wcet: u64, period: u64) -> Self {
        assert!(period > 0 && wcet <= period, "server budget must fit its period");
        ServerAbstraction { wcet, period }
    }

    /// Long-run supply rate `a = C_p / T_p`.
    pub fn rate(&self) -> Rat {
        rtick(self.wcet) / rtick(self.period)
    }

    /// Worst-case initial gap `2 (T_p - C_p)`: one budget served first
    /// thing in its period, the next served last thing in the period after.
    pub fn latency(&self) -> u64 {
        2 * (self.period - self.wcet)
    }
}

/// Linear lower bound on server supply in any window of length `t`:
/// nothing until the worst-case gap has passed, the long-run rate after.
pub fn lslbf(t: u64, srv: &ServerAbstraction) -> Rat {
    let past = rtick(t) - rtick(srv.latency());
    if past.is_positive() {
        past * srv.rate()
    } else {
        Rat::zero()
    }
}

/// Worst-case demand at and above the priority of `ts.et[of]` in a window
/// of length `t`: synchronized releases, one more every period.
///
/// Valid for constrained deadlines only; an arbitrary-deadline task can
/// carry more than one live job per period, which this staircase misses.
pub fn level_i_load(ts: &TaskSet, of: usize, t: u64) -> Result<u64, PollError> {
    let level = ts.et[of].priority;
    let mut load = 0u64;
    for et in &ts.et {
        if et.deadline > et.period {
            return Err(PollError::ArbitraryDeadline(et.id.clone()));
        }
        if et.priority >= level {
            load += t.div_ceil(et.period) * et.wcet;
        }
    }
    Ok(load)
}

/// Response analysis outcome for one event task under a server.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Converged(Rat),
    /// The iteration left `D + T_p` behind without settling.
    Divergent,
}

/// Least positive fixpoint of `t = gap + demand(t) / rate` by monotone
/// iteration. Demand only steps on whole microticks, so each iterate reads
/// the staircase at `ceil(t)`; the seed is floored at the task's own cost,
/// which skips the empty fixpoint at zero of a gap-free server.
pub fn advpoll_response(
    ts: &TaskSet,
    of: usize,
    srv: &ServerAbstraction,
) -> Result<Response, PollError> {
    if srv.wcet == 0 {
        return Ok(Response::Divergent);
    }
    let rate = srv.rate();
    let gap = rtick(srv.latency());
    let bound = rtick(ts.et[of].deadline + srv.period);
    let seed = level_i_load(ts, of, srv.latency())?.max(ts.et[of].wcet);
    let mut t = gap.clone() + rtick(seed) / rate.clone();
    loop {
        if t > bound {
            return Ok(Response::Divergent);
        }
        let ticks = t.ceil().to_integer().to_u64().expect("iterate below the divergence bound");
        let next = gap.clone() + rtick(level_i_load(ts, of, ticks)?) / rate.clone();
        if next == t {
            return Ok(Response::Converged(t));
        }
        t = next;
    }
}

/// A server accepted by the response analysis, or proof that no candidate
/// period was.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerDesign {
    Feasible(ServerAbstraction),
    Infeasible,
}

/// Smallest server period whose densest non-overloading budget
/// (`floor((lambda - U^TT) * T_p)`) gets every event task's response inside
/// its deadline. Candidates stop at the shortest event deadline and must
/// keep the extended cycle within `cycle_cap`. Requires implicit TT and
/// constrained event deadlines; both are what the budget formula and the
/// demand staircase are valid for.
pub fn advpoll_design(ts: &TaskSet, cycle_cap: u64) -> Result<ServerDesign, PollError> {
    for t in &ts.tt {
        if t.deadline != t.period {
            return Err(PollError::ConstrainedTtDeadline(t.id.clone()));
        }
    }
    if let Some(t) = ts.et.iter().find(|t| t.deadline > t.period) {
        return Err(PollError::ArbitraryDeadline(t.id.clone()));
    }
    if ts.et.is_empty() {
        return Ok(ServerDesign::Feasible(ServerAbstraction::new(0, 1)));
    }
    let ag = Aggregates::of(ts);
    let spare = ag.lambda.clone() - ag.u_tt.clone();
    if ag.u_et > spare {
        return Ok(ServerDesign::Infeasible);
    }
    let base = base_cycle(ts);
    let d_min = ts.et.iter().map(|t| t.deadline).min().expect("nonempty event set");
    for period in 1..=d_min {
        if extended_cycle(base, period) > u128::from(cycle_cap) {
            continue;
        }
        let budget = (spare.clone() * rtick(period))
            .floor()
            .to_integer()
            .to_u64()
            .expect("budget fits the tick range");
        if budget == 0 {
            continue;
        }
        let srv = ServerAbstraction::new(budget.min(period), period);
        let mut all_inside = true;
        for i in 0..ts.et.len() {
            let inside = match advpoll_response(ts, i, &srv)? {
                Response::Converged(r) => r <= rtick(ts.et[i].deadline),
                Response::Divergent => false,
            };
            if !inside {
                all_inside = false;
                break;
            }
        }
        if all_inside {
            return Ok(ServerDesign::Feasible(srv));
        }
    }
    Ok(ServerDesign::Infeasible)
}

/// One row of table-generation input: a periodic load plus what its slots
/// show in the table. Reservation rows emit nothing (their slots stay idle
/// for the event dispatcher); real TT rows emit their TT index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlfTask {
    pub wcet: u64,
    pub period: u64,
    pub deadline: u64,
    pub emit: Option<u32>,
    /// Strictly periodic placement: one fixed offset in every period,
    /// claimed before laxity dispatch and never preempted.
    pub pinned: bool,
}

impl LlfTask {
    pub fn tt(index: usize, t: &Task) -> Self {
        LlfTask {
            wcet: t.wcet,
            period: t.period,
            deadline: t.deadline,
            emit: Some(index as u32),
            pinned: false,
        }
    }

    pub fn poll(p: &PollingTask) -> Self {
        LlfTask {
            wcet: p.wcet,
            period: p.period,
            deadline: p.period,
            emit: None,
            pinned: p.variant == PollVariant::Strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LlfOutcome {
    Feasible(ScheduleTable),
    /// Row `task` cannot finish the job due at absolute slot `at`.
    Miss { task: usize, at: u64 },
    /// No offset leaves the pinned row collision-free.
    PinBlocked { task: usize },
    /// The backlog kept growing without repeating or missing inside the
    /// settling horizon: an overload whose deadlines are long enough to
    /// absorb it for now. A feasible set settles after its first cycle.
    Unsettled,
}

impl LlfOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, LlfOutcome::Feasible(_))
    }
}

/// Plain least-laxity table over one cycle: no budget, no idle preference,
/// ties to the lowest row index. Jobs queue per row, so deadlines beyond
/// the period are fine; the simulation runs until the backlog entering a
/// cycle repeats, and emits that settled cycle.
pub fn llf_table(rows: &[LlfTask], cycle: u64) -> LlfOutcome {
    assert!(cycle > 0, "table cycle must be positive");
    for r in rows {
        assert!(r.period > 0 && cycle % r.period == 0, "row periods must divide the cycle");
    }

    // Pinned rows claim their slots up front, earliest collision-free
    // offset first.
    let mut pinned_slots: Vec<Option<usize>> = vec![None; cycle as usize];
    for (i, r) in rows.iter().enumerate() {
        if !r.pinned {
            continue;
        }
        debug_assert!(r.deadline == r.period, "pinned rows are implicit-deadline");
        if r.wcet > r.period {
            return LlfOutcome::PinBlocked { task: i };
        }
        let fits = |off: u64| {
            (0..cycle / r.period).all(|k| {
                (0..r.wcet).all(|c| pinned_slots[(k * r.period + off + c) as usize].is_none())
            })
        };
        match (0..=r.period - r.wcet).find(|&off| fits(off)) {
            Some(off) => {
                for k in 0..cycle / r.period {
                    for c in 0..r.wcet {
                        pinned_slots[(k * r.period + off + c) as usize] = Some(i);
                    }
                }
            }
            None => return LlfOutcome::PinBlocked { task: i },
        }
    }

    struct Job {
        row: usize,
        left: u64,
        deadline: u64,
    }

    let max_deadline = rows.iter().map(|r| r.deadline).max().unwrap_or(0);
    let settle_cap = max_deadline / cycle + 3;
    let mut jobs: Vec<Job> = Vec::new();
    // Backlog entering the previous cycle, deadlines relative to its start.
    let mut prev_entering: Vec<(usize, u64, u64)> = Vec::new();
    for pass in 0..settle_cap {
        let origin = pass * cycle;
        let mut slots: Vec<Option<usize>> = Vec::with_capacity(cycle as usize);
        for offset in 0..cycle {
            let t = origin + offset;
            for (i, r) in rows.iter().enumerate() {
                if r.wcet > 0 && t % r.period == 0 {
                    jobs.push(Job { row: i, left: r.wcet, deadline: t + r.deadline });
                }
            }
            // A live job past the point of catching up has already missed,
            // whether or not it would win this slot.
            if let Some(j) = jobs.iter().find(|j| j.left + t > j.deadline) {
                return LlfOutcome::Miss { task: j.row, at: t };
            }
            let chosen = match pinned_slots[offset as usize] {
                Some(i) => {
                    let job = jobs
                        .iter_mut()
                        .filter(|j| j.row == i && j.left > 0)
                        .min_by_key(|j| j.deadline)
                        .expect("pinned row has a live job across its period");
                    job.left -= 1;
                    Some(i)
                }
                None => {
                    let best = jobs
                        .iter_mut()
                        .filter(|j| j.left > 0 && !rows[j.row].pinned)
                        .min_by_key(|j| (j.deadline - j.left - t, j.row, j.deadline));
                    best.map(|job| {
                        job.left -= 1;
                        job.row
                    })
                }
            };
            slots.push(chosen);
            jobs.retain(|j| j.left > 0);
        }
        let boundary = origin + cycle;
        let mut entering: Vec<(usize, u64, u64)> =
            jobs.iter().map(|j| (j.row, j.left, j.deadline - boundary)).collect();
        entering.sort_unstable();
        if entering == prev_entering {
            let table = slots
                .iter()
                .map(|s| match s.and_then(|i| rows[i].emit) {
                    Some(idx) => Slot::Tt(idx),
                    None => Slot::Idle,
                })
                .collect();
            return LlfOutcome::Feasible(ScheduleTable::new(table));
        }
        prev_entering = entering;
    }
    LlfOutcome::Unsettled
}

/// A polling baseline ready for export: the table, the reservations behind
/// its idle slots, and the tightest affine envelope the table satisfies.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    Feasible { schedule: ScheduleTable, params: BudgetParams, polls: Vec<PollingTask> },
    Infeasible(BaselineReason),
}

impl Baseline {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Baseline::Feasible { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineReason {
    /// No polling period for `task` fits the cycle cap.
    PollPeriod { task: TaskId },
    /// No server passes the response analysis.
    ServerDesign,
    /// The combined TT and reservation load misses at slot `at`.
    TableMiss { task: TaskId, at: u64 },
    /// No collision-free offset for the strictly periodic reservation.
    PinBlocked { task: TaskId },
    /// The combined load never settled into a periodic table.
    TableUnsettled,
}

impl std::fmt::Display for BaselineReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BaselineReason::PollPeriod { task } => {
                write!(f, "no polling period for {task} fits the cycle cap")
            }
            BaselineReason::ServerDesign => {
                write!(f, "no server budget and period pass the response analysis")
            }
            BaselineReason::TableMiss { task, at } => {
                write!(f, "{task} misses its deadline at slot {at}")
            }
            BaselineReason::PinBlocked { task } => {
                write!(f, "no collision-free offset for the reservation of {task}")
            }
            BaselineReason::TableUnsettled => {
                write!(f, "the table never settled into a periodic pattern")
            }
        }
    }
}

/// Simple polling end to end: derive one reservation per event task, then
/// schedule TT tasks and reservations together.
pub fn spoll_table(ts: &TaskSet, rule: PeriodRule, cycle_cap: u64) -> Result<Baseline, PollError> {
    match spoll_plan(ts, rule, cycle_cap) {
        SpollPlan::Feasible { polls, cycle } => baseline_from(ts, polls, cycle),
        SpollPlan::Infeasible { task } => {
            Ok(Baseline::Infeasible(BaselineReason::PollPeriod { task }))
        }
    }
}

/// Advanced polling end to end: size one shared server, then schedule it
/// alongside the TT tasks.
pub fn advpoll_table(ts: &TaskSet, cycle_cap: u64) -> Result<Baseline, PollError> {
    let srv = match advpoll_design(ts, cycle_cap)? {
        ServerDesign::Feasible(s) => s,
        ServerDesign::Infeasible => {
            return Ok(Baseline::Infeasible(BaselineReason::ServerDesign))
        }
    };
    let poll = PollingTask {
        serves: ts.et.iter().map(|t| t.id.clone()).collect(),
        wcet: srv.wcet,
        period: srv.period,
        variant: PollVariant::Server,
    };
    let cycle = extended_cycle(base_cycle(ts), srv.period) as u64;
    baseline_from(ts, vec![poll], cycle)
}

fn baseline_from(ts: &TaskSet, polls: Vec<PollingTask>, cycle: u64) -> Result<Baseline, PollError> {
    let mut rows: Vec<LlfTask> =
        ts.tt.iter().enumerate().map(|(i, t)| LlfTask::tt(i, t)).collect();
    rows.extend(polls.iter().map(LlfTask::poll));
    let label = |row: usize| -> TaskId {
        if row < ts.tt.len() {
            ts.tt[row].id.clone()
        } else {
            polls[row - ts.tt.len()].serves.first().cloned().unwrap_or_else(|| "server".into())
        }
    };
    match llf_table(&rows, cycle) {
        LlfOutcome::Feasible(schedule) => {
            let ag = Aggregates::of(ts);
            let burst = tightest_burst(&schedule, &ag.u_tt);
            let params = BudgetParams::for_utilization(&ag.u_tt, &ag.lambda, burst)?;
            Ok(Baseline::Feasible { schedule, params, polls })
        }
        LlfOutcome::Miss { task, at } => {
            Ok(Baseline::Infeasible(BaselineReason::TableMiss { task: label(task), at }))
        }
        LlfOutcome::PinBlocked { task } => {
            Ok(Baseline::Infeasible(BaselineReason::PinBlocked { task: label(task) }))
        }
        LlfOutcome::Unsettled => Ok(Baseline::Infeasible(BaselineReason::TableUnsettled)),
    }
}
