//! From ET deadlines to an admissible TT burst.
//!
//! The TT slot stream, viewed as interfering demand, fits an affine envelope
//! whose rate is `U^TT` and whose burst `b` depends on how the table clusters
//! slots. Each ET priority level tolerates bursts only up to the point where
//! its worst-case response reaches its shortest deadline; the admissible TT
//! burst is the minimum over levels, additionally capped by the total TT
//! computation time (no single-cycle window can cluster more than that).

use crate::curves::{max_delay, residual_capacity, ArrivalCurve, Delay, Residual, ServiceCurve};
use crate::rational::{rtick, Rat};
use crate::taskmodel::{Aggregates, TaskSet};
use num_traits::{Signed, Zero};

/// Upper bound on TT demand in any window, for a table with burst `b`.
pub fn tt_envelope(ag: &Aggregates, burst: Rat) -> ArrivalCurve {
    ArrivalCurve::new(ag.u_tt.clone(), burst)
}

/// The universal TT demand bound: every deadline-valid table satisfies the
/// envelope with burst `C^TT`.
pub fn tt_demand_bound(ag: &Aggregates) -> ArrivalCurve {
    tt_envelope(ag, rtick(ag.c_tt))
}

/// Aggregate ET demand strictly above level `p`.
pub fn et_arrival_above(ag: &Aggregates, p: u32) -> ArrivalCurve {
    ArrivalCurve::new(ag.u_above(p) - ag.u_tt.clone(), rtick(ag.c_et_above(p)))
}

/// Aggregate ET demand at exactly level `p`.
pub fn et_arrival_at(ag: &Aggregates, p: u32) -> ArrivalCurve {
    ArrivalCurve::new(ag.u_et_at(p), rtick(ag.c_et_at(p)))
}

/// Service guaranteed to ET level `p` once TT demand (burst `b_tt`) and all
/// strictly higher ET demand are subtracted from the capacity.
pub fn level_service(ag: &Aggregates, p: u32, b_tt: &Rat) -> Residual {
    let interference = tt_envelope(ag, b_tt.clone()) + et_arrival_above(ag, p);
    residual_capacity(&ag.lambda, &interference)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResponseBound {
    Finite(Rat),
    /// No finite bound exists: load at or above this level saturates the
    /// capacity.
    Saturated,
}

/// Worst-case response time of ET level `p` under a TT table with burst
/// `b_tt`: the closed form is `(b_tt + C^ET_{>=p}) / (lambda - U_{>p})`,
/// valid while the level's own rate fits its residual service.
pub fn et_response_bound(ag: &Aggregates, p: u32, b_tt: &Rat) -> ResponseBound {
    let beta = match level_service(ag, p, b_tt) {
        Residual::Guaranteed(beta) => beta,
        Residual::Saturated => return ResponseBound::Saturated,
    };
    match max_delay(&et_arrival_at(ag, p), &beta) {
        Delay::Finite(v) => ResponseBound::Finite(v),
        // The level's own rate outpaces what remains after everything
        // above it: backlog grows without bound.
        Delay::Unbounded => ResponseBound::Saturated,
    }
}

/// Why the burst bound took its value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Binding {
    /// An ET level's shortest deadline is the limiting constraint.
    EtLevel(u32),
    /// The cap `b <= C^TT`: no envelope tighter than total TT computation.
    TtTotal,
}

/// Per-level diagnostic: the largest TT burst level `p` tolerates.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSlack {
    pub priority: u32,
    pub min_deadline: u64,
    pub admissible_burst: Rat,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BurstBound {
    Feasible { b_tt_max: Rat, binding: Binding, levels: Vec<LevelSlack> },
    /// Some ET level cannot meet its shortest deadline even with a burst-free
    /// TT stream (or is saturated outright by higher-preference load).
    Infeasible { blocking: Vec<LevelSlack>, saturated: Vec<u32> },
}

/// Largest TT burst every ET level tolerates:
/// `min_p ((lambda - U_{>p}) * min_{p(j)=p} D_j - C^ET_{>=p})`, capped at
/// `C^TT`. Negative admissible burst at any level means no table can work.
/// Levels with no ET task are skipped.
pub fn max_tt_burst(ts: &TaskSet) -> BurstBound {
    let ag = Aggregates::of(ts);
    let mut levels = Vec::new();
    let mut saturated = Vec::new();

    for p in ag.et_levels().collect::<Vec<_>>() {
        let free = ag.lambda.clone() - ag.u_above(p);
        if !free.is_positive() {
            saturated.push(p);
            continue;
        }
        let min_deadline = ts
            .et
            .iter()
            .filter(|t| t.priority == p)
            .map(|t| t.deadline)
            .min()
            .expect("level present implies at least one task");
        let admissible = free * rtick(min_deadline) - rtick(ag.c_et_at_or_above(p));
        levels.push(LevelSlack { priority: p, min_deadline, admissible_burst: admissible });
    }

    if !saturated.is_empty() {
        let blocking = levels.into_iter().filter(|l| l.admissible_burst < Rat::zero()).collect();
        return BurstBound::Infeasible { blocking, saturated };
    }

    let cap = rtick(ag.c_tt);
    let tightest = levels.iter().min_by(|a, b| a.admissible_burst.cmp(&b.admissible_burst));
    let (b_tt_max, binding) = match tightest {
        Some(l) if l.admissible_burst <= cap => {
            (l.admissible_burst.clone(), Binding::EtLevel(l.priority))
        }
        _ => (cap, Binding::TtTotal),
    };

    if b_tt_max < Rat::zero() {
        let blocking = levels.into_iter().filter(|l| l.admissible_burst < Rat::zero()).collect();
        return BurstBound::Infeasible { blocking, saturated };
    }
    BurstBound::Feasible { b_tt_max, binding, levels }
}

/// Service guarantee shape for a whole-capacity stream with no interference.
pub fn full_capacity(lambda: &Rat) -> ServiceCurve {
    ServiceCurve::rate_only(lambda.clone())
}
