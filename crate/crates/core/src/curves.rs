//! Min-plus curve algebra on the two families the toolkit needs: affine
//! arrival curves and rate-latency service curves.
//!
//! An [`ArrivalCurve`] `(r, b)` maps `t = 0` to `0` and `t > 0` to `r*t + b`;
//! it upper-bounds demand (or delivered service) in any half-open window.
//! A [`ServiceCurve`] `(R, L)` maps `t` to `R * max(0, t - L)` and
//! lower-bounds available service. Both are exact rationals.

use crate::rational::Rat;
use num_traits::{Signed, Zero};
use std::ops::Add;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalCurve {
    pub rate: Rat,
    pub burst: Rat,
}

impl ArrivalCurve {
    /// Invariant: rate and burst are non-negative.
    pub fn new(rate: Rat, burst: Rat) -> Self {
        assert!(!rate.is_negative() && !burst.is_negative(), "arrival curve needs r, b >= 0");
        ArrivalCurve { rate, burst }
    }

    pub fn zero() -> Self {
        ArrivalCurve { rate: Rat::zero(), burst: Rat::zero() }
    }

    pub fn value_at(&self, t: &Rat) -> Rat {
        if t.is_positive() {
            &self.rate * t + &self.burst
        } else {
            Rat::zero()
        }
    }
}

impl Add for ArrivalCurve {
    type Output = ArrivalCurve;
    fn add(self, rhs: ArrivalCurve) -> ArrivalCurve {
        ArrivalCurve { rate: self.rate + rhs.rate, burst: self.burst + rhs.burst }
    }
}

impl<'a> Add<&'a ArrivalCurve> for ArrivalCurve {
    type Output = ArrivalCurve;
    fn add(self, rhs: &ArrivalCurve) -> ArrivalCurve {
        ArrivalCurve { rate: self.rate + &rhs.rate, burst: self.burst + &rhs.burst }
    }
}

impl std::iter::Sum for ArrivalCurve {
    fn sum<I: Iterator<Item = ArrivalCurve>>(iter: I) -> ArrivalCurve {
        iter.fold(ArrivalCurve::zero(), Add::add)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceCurve {
    pub rate: Rat,
    pub latency: Rat,
}

impl ServiceCurve {
    /// Invariant: rate positive, latency non-negative.
    pub fn new(rate: Rat, latency: Rat) -> Self {
        assert!(rate.is_positive() && !latency.is_negative(), "service curve needs R > 0, L >= 0");
        ServiceCurve { rate, latency }
    }

    /// Pure-rate service `R * t`.
    pub fn rate_only(rate: Rat) -> Self {
        ServiceCurve::new(rate, Rat::zero())
    }

    pub fn value_at(&self, t: &Rat) -> Rat {
        let past_latency = t - &self.latency;
        if past_latency.is_positive() {
            &self.rate * past_latency
        } else {
            Rat::zero()
        }
    }
}

/// Worst-case delay: the maximal horizontal distance from an arrival curve to
/// a service curve.
#[derive(Debug, Clone, PartialEq)]
pub enum Delay {
    Finite(Rat),
    /// Arrival rate exceeds the service rate; backlog and delay diverge.
    Unbounded,
}

/// Horizontal deviation of `alpha` under `beta`: `L + b / R` when `r <= R`.
pub fn max_delay(alpha: &ArrivalCurve, beta: &ServiceCurve) -> Delay {
    if alpha.rate > beta.rate {
        return Delay::Unbounded;
    }
    Delay::Finite(&beta.latency + &alpha.burst / &beta.rate)
}

/// Service left over after higher-preference demand `alpha` is subtracted
/// from `beta`, as a guaranteed lower bound (non-decreasing closure of
/// `beta - alpha`).
#[derive(Debug, Clone, PartialEq)]
pub enum Residual {
    Guaranteed(ServiceCurve),
    /// The interfering demand rate meets or exceeds the service rate.
    Saturated,
}

pub fn residual(beta: &ServiceCurve, alpha: &ArrivalCurve) -> Residual {
    let rate = &beta.rate - &alpha.rate;
    if !rate.is_positive() {
        return Residual::Saturated;
    }
    let latency = (&beta.rate * &beta.latency + &alpha.burst) / &rate;
    Residual::Guaranteed(ServiceCurve { rate, latency })
}

/// Residual of a pure-capacity service `lambda * t`.
pub fn residual_capacity(lambda: &Rat, alpha: &ArrivalCurve) -> Residual {
    residual(&ServiceCurve::rate_only(lambda.clone()), alpha)
}

/// A curve sampled at the integer tick grid: `values[t]` is the curve value
/// at tick `t`. Values must be non-decreasing.
#[derive(Debug, Clone)]
pub struct SampledCurve {
    pub values: Vec<Rat>,
}

impl SampledCurve {
    pub fn from_arrival(alpha: &ArrivalCurve, horizon: u64) -> Self {
        let values = (0..=horizon).map(|t| alpha.value_at(&Rat::from_integer(t.into()))).collect();
        SampledCurve { values }
    }

    pub fn from_service(beta: &ServiceCurve, horizon: u64) -> Self {
        let values = (0..=horizon).map(|t| beta.value_at(&Rat::from_integer(t.into()))).collect();
        SampledCurve { values }
    }

    pub fn from_values(values: Vec<Rat>) -> Self {
        SampledCurve { values }
    }
}

/// Result of a grid measurement of the worst-case delay.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredDelay {
    pub value: Rat,
    /// True when the service samples never caught up with some demand sample,
    /// i.e. the horizon was too small to witness the maximum.
    pub truncated: bool,
}

/// Measures the maximal horizontal distance between two sampled curves:
/// demand sampled at integer ticks, service interpolated linearly between
/// ticks (exact for the convex service curves used here).
///
/// For an affine/rate-latency pair the result is within one grid step below
/// the analytic [`max_delay`], never above it.
pub fn measured_max_delay(demand: &SampledCurve, service: &SampledCurve) -> MeasuredDelay {
    let mut worst = Rat::zero();
    let mut truncated = false;
    let n = service.values.len();
    let mut j = 0usize; // smallest index with service[j] >= current target

    for (t, target) in demand.values.iter().enumerate() {
        if target.is_zero() {
            continue;
        }
        while j < n && &service.values[j] < target {
            j += 1;
        }
        if j >= n {
            truncated = true;
            break;
        }
        let crossing = if j == 0 {
            Rat::zero()
        } else {
            let lo = &service.values[j - 1];
            let hi = &service.values[j];
            // hi > lo because the walk just crossed the target.
            Rat::from_integer((j as i64 - 1).into()) + (target - lo) / (hi - lo)
        };
        let dist = crossing - Rat::from_integer((t as i64).into());
        if dist > worst {
            worst = dist;
        }
    }
    MeasuredDelay { value: worst, truncated }
}
