//! Reproducible random task-set generation: fixed-sum utilization
//! partitions, periods drawn from a small candidate set, deadline placement
//! by mode, and deadline-monotonic ET priorities quantized to the seven
//! sporadic levels.
//!
//! Every emitted set passes `taskmodel::validate` and is schedulable by a
//! plain least-laxity table when its ET tasks are treated as periodic
//! releases; draws failing either screen are retried (bounded), so
//! generation failures surface as an explicit error instead of a skewed
//! sample.

use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::polling::{llf_table, LlfTask};
use crate::rational::{rat, Rat};
use crate::taskmodel::{hyperperiod, task, validate, Task, TaskKind, TaskSet};

/// How ET deadlines are placed relative to `[C, T]`. TT deadlines are
/// always implicit (`D = T`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeadlineMode {
    /// Uniform over the upper half of `[C, T]`.
    ConstrainedUpperHalf,
    /// Uniform over `[T, 5T]`; deadlines may exceed the inter-arrival time.
    ArbitraryMultiple,
    /// Uniform over the k-th fifth of `[C, T]` counted from the top:
    /// k = 1 is the most relaxed band, k = 5 the tightest.
    Quintile(u8),
    /// `D = T` for ET tasks too.
    Implicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub n_tt: usize,
    pub n_et: usize,
    pub u_tt: Rat,
    pub u_et: Rat,
    /// Candidate periods in microticks, drawn uniformly per task.
    pub period_set: Vec<u64>,
    pub deadline_mode: DeadlineMode,
    pub seed: u64,
    pub microtick_ns: u64,
}

pub const MAX_RETRIES: u32 = 100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("period set must list at least one nonzero period")]
    BadPeriodSet,
    #[error("quintile index {0} is outside 1..=5")]
    BadQuintile(u8),
    #[error("utilization targets must be nonnegative and sum to at most 9/10, got {0}")]
    BadTargets(Rat),
    #[error("cannot split a positive utilization target across zero tasks")]
    ZeroCount,
    #[error("no schedulable draw in {0} attempts")]
    RetriesExhausted(u32),
}

/// Draws task sets until one passes validation and the least-laxity screen,
/// up to [`MAX_RETRIES`] attempts. The generator runs a single RNG stream
/// seeded from `spec.seed`, so equal specs produce identical sets.
pub fn generate(spec: &GenSpec) -> Result<TaskSet, GenError> {
    if spec.period_set.is_empty() || spec.period_set.contains(&0) {
        return Err(GenError::BadPeriodSet);
    }
    if let DeadlineMode::Quintile(k) = spec.deadline_mode {
        if !(1..=5).contains(&k) {
            return Err(GenError::BadQuintile(k));
        }
    }
    let zero = Rat::from_integer(0.into());
    let total = spec.u_tt.clone() + spec.u_et.clone();
    if spec.u_tt < zero || spec.u_et < zero || total > rat(9, 10) {
        return Err(GenError::BadTargets(total));
    }
    if (spec.n_tt == 0 && spec.u_tt > zero) || (spec.n_et == 0 && spec.u_et > zero) {
        return Err(GenError::ZeroCount);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..MAX_RETRIES {
        let ts = draw(spec, &mut rng);
        if validate(&ts).is_empty() && llf_feasible(&ts) {
            return Ok(ts);
        }
    }
    Err(GenError::RetriesExhausted(MAX_RETRIES))
}

fn draw(spec: &GenSpec, rng: &mut ChaCha8Rng) -> TaskSet {
    let u_tt = spec.u_tt.to_f64().expect("target fits f64");
    let u_et = spec.u_et.to_f64().expect("target fits f64");
    let parts_tt = fixed_sum_partition(rng, spec.n_tt, u_tt);
    let parts_et = fixed_sum_partition(rng, spec.n_et, u_et);

    let mut tasks = Vec::with_capacity(spec.n_tt + spec.n_et);
    for (i, u) in parts_tt.iter().enumerate() {
        let t = spec.period_set[rng.gen_range(0..spec.period_set.len())];
        let c = cost(*u, t);
        tasks.push(task(&format!("tt{i}"), TaskKind::Tt, c, t, t, 7));
    }

    let mut et_dims = Vec::with_capacity(spec.n_et);
    for u in &parts_et {
        let t = spec.period_set[rng.gen_range(0..spec.period_set.len())];
        let c = cost(*u, t);
        let (lo, hi) = deadline_band(c, t, spec.deadline_mode);
        et_dims.push((c, t, rng.gen_range(lo..=hi)));
    }
    let prios = dm_priorities(&et_dims.iter().map(|d| d.2).collect::<Vec<_>>());
    for (i, ((c, t, d), p)) in et_dims.into_iter().zip(prios).enumerate() {
        tasks.push(task(&format!("et{i}"), TaskKind::Et, c, t, d, p));
    }
    TaskSet::new(spec.microtick_ns, Rat::from_integer(1.into()), tasks)
}

fn cost(u: f64, period: u64) -> u64 {
    ((u * period as f64).round() as u64).clamp(1, period)
}

/// Unbiased split of `total` into `n` nonnegative shares (the standard
/// uniform-simplex recursion). Shares land anywhere in `[0, total]`, so a
/// share can round to a cost of 0 downstream; the clamp there inflates it.
fn fixed_sum_partition(rng: &mut ChaCha8Rng, n: usize, total: f64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut parts = Vec::with_capacity(n);
    let mut rest = total;
    for left in (1..n).rev() {
        let next = rest * rng.gen::<f64>().powf(1.0 / left as f64);
        parts.push(rest - next);
        rest = next;
    }
    parts.push(rest);
    parts
}

/// Integer deadline band for one ET task. Bands are the integer points of
/// the real interval; a band too narrow to hold an integer widens to its
/// two enclosing points.
fn deadline_band(c: u64, t: u64, mode: DeadlineMode) -> (u64, u64) {
    let w = t - c;
    match mode {
        DeadlineMode::ConstrainedUpperHalf => (t - w / 2, t),
        DeadlineMode::ArbitraryMultiple => (t, 5 * t),
        DeadlineMode::Quintile(k) => {
            let k = u64::from(k);
            let lo = t - k * w / 5;
            let hi = t - ((k - 1) * w).div_ceil(5);
            if lo <= hi {
                (lo, hi)
            } else {
                (hi, lo)
            }
        }
        DeadlineMode::Implicit => (t, t),
    }
}

/// Deadline-monotonic priorities folded onto the seven ET levels: rank by
/// deadline (stable on input order), split ranks into seven near-equal
/// buckets, shortest deadlines on level 6.
fn dm_priorities(deadlines: &[u64]) -> Vec<u32> {
    let n = deadlines.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (deadlines[i], i));
    let mut prio = vec![0u32; n];
    for (rank, &i) in order.iter().enumerate() {
        prio[i] = 6 - (rank * 7 / n) as u32;
    }
    prio
}

/// The generation premise: the set must schedule under plain least-laxity
/// when ET tasks release periodically alongside the TT rows.
fn llf_feasible(ts: &TaskSet) -> bool {
    let all: Vec<Task> = ts.tt.iter().chain(&ts.et).cloned().collect();
    if all.is_empty() {
        return true;
    }
    let Ok(cycle) = hyperperiod(&all) else { return false };
    let rows: Vec<LlfTask> = all
        .iter()
        .map(|t| LlfTask {
            wcet: t.wcet,
            period: t.period,
            deadline: t.deadline,
            emit: None,
            pinned: false,
        })
        .collect();
    llf_table(&rows, cycle).is_feasible()
}
