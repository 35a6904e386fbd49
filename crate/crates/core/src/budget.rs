//! The burst budget automaton and schedule-table conformance checks.
//!
//! A table is conformant when a continuous budget, started at some initial
//! level, never goes negative at the end of a TT slot. The budget drains at
//! `tt_rate` through TT slots and refills at `idle_rate` through idle slots,
//! saturating at `ceiling`. Because refill during a slot is credited even
//! when the level is below the ceiling mid-slot, a conformant table's TT
//! slots obey the affine envelope `idle_rate * t + ceiling` in every window;
//! the classic token bucket (which pays a full slot up front) admits strictly
//! fewer tables.

use crate::curves::ArrivalCurve;
use crate::rational::Rat;
use num_traits::Signed;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One slot of a schedule table: idle (ET-available) or a TT task, referenced
/// by its index in the owning task set's TT list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Idle,
    Tt(u32),
}

impl Slot {
    pub fn is_tt(self) -> bool {
        matches!(self, Slot::Tt(_))
    }
}

/// A cyclic schedule: slot `i` covers ticks `[i, i+1)` and the table repeats
/// every `cycle()` ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleTable {
    pub slots: Vec<Slot>,
}

impl ScheduleTable {
    pub fn new(slots: Vec<Slot>) -> Self {
        ScheduleTable { slots }
    }

    pub fn all_idle(cycle: u64) -> Self {
        ScheduleTable { slots: vec![Slot::Idle; cycle as usize] }
    }

    pub fn cycle(&self) -> u64 {
        self.slots.len() as u64
    }

    pub fn tt_slots(&self) -> u64 {
        self.slots.iter().filter(|s| s.is_tt()).count() as u64
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("budget rates must be non-negative")]
    NegativeRate,
    #[error("budget ceiling must be non-negative")]
    NegativeCeiling,
    #[error("TT utilization exceeds the capacity")]
    Overloaded,
}

/// Parameters of the budget automaton. Serialized under the schedule-file
/// keys `i_tt` / `i_idle` / `l_m`.
///
/// `tt_rate + idle_rate` equals the slot capacity `lambda`. `tt_rate` may be
/// zero (a TT load that saturates the capacity), in which case the budget
/// never constrains the scheduler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetParams {
    #[serde(rename = "i_tt", with = "crate::rational::serde_pair")]
    pub tt_rate: Rat,
    #[serde(rename = "i_idle", with = "crate::rational::serde_pair")]
    pub idle_rate: Rat,
    #[serde(rename = "l_m", with = "crate::rational::serde_pair")]
    pub ceiling: Rat,
}

impl BudgetParams {
    pub fn new(tt_rate: Rat, idle_rate: Rat, ceiling: Rat) -> Result<Self, ParamError> {
        if tt_rate.is_negative() || idle_rate.is_negative() {
            return Err(ParamError::NegativeRate);
        }
        if ceiling.is_negative() {
            return Err(ParamError::NegativeCeiling);
        }
        Ok(BudgetParams { tt_rate, idle_rate, ceiling })
    }

    /// The canonical parameterization: refill at `U^TT`, drain at
    /// `lambda - U^TT`, ceiling = admitted burst.
    pub fn for_utilization(u_tt: &Rat, lambda: &Rat, ceiling: Rat) -> Result<Self, ParamError> {
        if u_tt > lambda {
            return Err(ParamError::Overloaded);
        }
        BudgetParams::new(lambda - u_tt, u_tt.clone(), ceiling)
    }

    pub fn lambda(&self) -> Rat {
        self.tt_rate.clone() + self.idle_rate.clone()
    }

    /// Upper bound on TT slots granted in any window of length `t`:
    /// `idle_rate * t + ceiling` (the budget automaton's service envelope).
    pub fn service_envelope(&self) -> ArrivalCurve {
        ArrivalCurve::new(self.idle_rate.clone(), self.ceiling.clone())
    }
}

/// Budget level after one slot: drained by a TT slot, refilled (saturating)
/// by an idle slot.
pub fn step_budget(budget: &Rat, slot_is_tt: bool, params: &BudgetParams) -> Rat {
    if slot_is_tt {
        budget - &params.tt_rate
    } else {
        let refilled = budget + &params.idle_rate;
        if refilled > params.ceiling {
            params.ceiling.clone()
        } else {
            refilled
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Conformance {
    Conformant,
    /// First offending slot index and the (negative) budget at its end.
    Violated { slot: u64, budget: Rat },
}

impl Conformance {
    pub fn is_conformant(&self) -> bool {
        matches!(self, Conformance::Conformant)
    }
}

/// Checks one pass of the table from `initial` budget; a violation is a
/// negative budget at the end of a TT slot.
pub fn conformance(table: &ScheduleTable, params: &BudgetParams, initial: &Rat) -> Conformance {
    let mut budget = initial.clone();
    for (i, slot) in table.slots.iter().enumerate() {
        budget = step_budget(&budget, slot.is_tt(), params);
        if slot.is_tt() && budget.is_negative() {
            return Conformance::Violated { slot: i as u64, budget };
        }
    }
    Conformance::Conformant
}

/// Budget level at every slot boundary: `trace[i]` is the level at tick `i`,
/// `trace[cycle]` the level after the full pass.
pub fn budget_trace(table: &ScheduleTable, params: &BudgetParams, initial: &Rat) -> Vec<Rat> {
    let mut trace = Vec::with_capacity(table.slots.len() + 1);
    trace.push(initial.clone());
    let mut budget = initial.clone();
    for slot in &table.slots {
        budget = step_budget(&budget, slot.is_tt(), params);
        trace.push(budget.clone());
    }
    trace
}

/// The token-bucket discipline the budget automaton improves on: a TT slot
/// pays a full slot (`lambda * 1`) at its start, the bucket refills at `rate`
/// through every slot and saturates at `burst`. Starts full.
pub fn token_bucket_conformance(table: &ScheduleTable, rate: &Rat, burst: &Rat) -> Conformance {
    let lambda = Rat::from_integer(1.into());
    let mut balance = burst.clone();
    for (i, slot) in table.slots.iter().enumerate() {
        if slot.is_tt() {
            balance -= &lambda;
            if balance.is_negative() {
                return Conformance::Violated { slot: i as u64, budget: balance };
            }
        }
        balance += rate;
        if balance > *burst {
            balance = burst.clone();
        }
    }
    Conformance::Conformant
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowCheck {
    Ok,
    /// A window holding more TT slots than the envelope grants.
    Violated { start: u64, len: u64, tt_slots: u64, bound: Rat },
}

impl WindowCheck {
    pub fn is_ok(&self) -> bool {
        matches!(self, WindowCheck::Ok)
    }
}

/// Verifies the affine envelope against every window of the repeating table:
/// all `[s, t)` over two concatenated cycles.
///
/// With denominators cleared, a window violates iff
/// `g(t) - g(s) > bn*rd` where `g(x) = P[x]*rd*bd - rn*bd*x` and `P` is the
/// TT prefix count. Tracking the running minimum of `g` makes the check
/// linear in the cycle length.
pub fn window_envelope_check(table: &ScheduleTable, envelope: &ArrivalCurve) -> WindowCheck {
    let n = table.slots.len() as u64;
    let to = |x: &num_bigint::BigInt| {
        i128::try_from(x.clone()).expect("envelope term fits the window grid")
    };
    let rn = to(envelope.rate.numer());
    let rd = to(envelope.rate.denom());
    let bn = to(envelope.burst.numer());
    let bd = to(envelope.burst.denom());
    let count_scale = rd.checked_mul(bd).expect("envelope term fits the window grid");
    let slope = rn.checked_mul(bd).expect("envelope term fits the window grid");
    let allowance = bn.checked_mul(rd).expect("envelope term fits the window grid");

    let mut count = 0u64;
    // Minimum of g over starts before the current end, with its position.
    let mut g_min = 0i128;
    let mut min_start = 0u64;
    let mut count_at_min = 0u64;
    for t in 1..=2 * n {
        count += u64::from(table.slots[((t - 1) % n) as usize].is_tt());
        let g = (count as i128) * count_scale - slope * t as i128;
        if g - g_min > allowance {
            let len = t - min_start;
            return WindowCheck::Violated {
                start: min_start,
                len,
                tt_slots: count - count_at_min,
                bound: envelope.value_at(&Rat::from_integer((len as i64).into())),
            };
        }
        if g < g_min {
            g_min = g;
            min_start = t;
            count_at_min = count;
        }
    }
    WindowCheck::Ok
}

/// The smallest burst under which the repeating table satisfies the affine
/// envelope `rate * t + burst`: the largest excess of TT slots over
/// `rate * len` across all windows, never negative. Tables produced without
/// a budget automaton carry this as their envelope intercept.
pub fn tightest_burst(table: &ScheduleTable, rate: &Rat) -> Rat {
    let n = table.slots.len() as u64;
    let to =
        |x: &num_bigint::BigInt| i128::try_from(x.clone()).expect("rate term fits the window grid");
    let rn = to(rate.numer());
    let rd = to(rate.denom());

    let mut count = 0u64;
    let mut g_min = 0i128;
    let mut worst = 0i128;
    for t in 1..=2 * n {
        count += u64::from(table.slots[((t - 1) % n) as usize].is_tt());
        let g = (count as i128).checked_mul(rd).expect("rate term fits the window grid")
            - rn.checked_mul(t as i128).expect("rate term fits the window grid");
        worst = worst.max(g - g_min);
        g_min = g_min.min(g);
    }
    Rat::new(num_bigint::BigInt::from(worst), num_bigint::BigInt::from(rd))
}
