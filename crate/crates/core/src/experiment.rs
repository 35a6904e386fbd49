//! Experiment harness: sweeps an axis of generated task sets over the
//! synthesis methods, measures synthesis wall time, and gates every
//! feasible verdict behind the oracle before it counts.
//!
//! Instances are independent jobs keyed by (point, repetition); all methods
//! of one job share the generated set, so schedulability compares methods
//! on identical inputs. Job seeds derive from the run seed by a splitmix
//! step, and rows are emitted in (point, repetition, method) order whatever
//! the worker pool did, so a replay differs only in the wall-time columns.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::budget::{BudgetParams, ScheduleTable};
use crate::envelope::{max_tt_burst, BurstBound};
use crate::oracle::full_report;
use crate::polling::{advpoll_table, spoll_table, Baseline, PeriodRule};
use crate::rational::{percent_one_decimal, rat, Rat};
use crate::synth::{
    admit_event_tasks, min_burst_ceiling, synthesize, Admission, BudgetGrid, Design, Synthesis,
};
use crate::taskgen::{generate, DeadlineMode, GenSpec};
use crate::taskmodel::{hyperperiod, TaskSet};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    B3lf,
    BinaryB3lf,
    Spoll,
    Advpoll,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::B3lf, Method::BinaryB3lf, Method::Spoll, Method::Advpoll];

    pub fn name(self) -> &'static str {
        match self {
            Method::B3lf => "b3lf",
            Method::BinaryB3lf => "binary_b3lf",
            Method::Spoll => "spoll",
            Method::Advpoll => "advpoll",
        }
    }

    pub fn from_name(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// What varies across the sweep; everything else about a point is fixed by
/// the axis protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// The 34 (u_tt, u_et) tenth-tuples with sum <= 0.9; 30 TT + 20 ET
    /// tasks on the 20/30/40 ms grid.
    Utilization { arbitrary_deadlines: bool },
    /// Total task count doubling from 8, equal TT/ET split, 20%/20%
    /// utilization on the 50/100 ms grid (fixed hyperperiod).
    TaskCount,
    /// Table cycle growing over three decades at fixed task structure;
    /// one implicit-deadline set per point.
    Hyperperiod,
    /// ET deadline quintiles k = 1..5, tightest last, on the 50/100 ms
    /// grid with 8 TT + 8 ET tasks.
    LaxityQuintile,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Utilization { arbitrary_deadlines: false } => "utilization",
            Axis::Utilization { arbitrary_deadlines: true } => "utilization_arbitrary",
            Axis::TaskCount => "task_count",
            Axis::Hyperperiod => "hyperperiod",
            Axis::LaxityQuintile => "laxity_quintile",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub axis: Axis,
    pub methods: Vec<Method>,
    pub repetitions: u32,
    pub seed: u64,
    /// Instances whose synthesis exceeds this are recorded as timeouts.
    pub timeout: Duration,
    pub microtick_ns: u64,
    /// Extended-cycle cap for the polling baselines, as a multiple of the
    /// TT hyperperiod.
    pub cycle_cap_factor: u64,
    pub spoll_rule: PeriodRule,
    pub budget_grid: BudgetGrid,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 100 sets per point on a 100 us microtick, all
    /// four methods, 60 s per instance.
    pub fn desk(axis: Axis, seed: u64) -> Self {
        ExperimentConfig {
            axis,
            methods: Method::ALL.to_vec(),
            repetitions: 100,
            seed,
            timeout: Duration::from_secs(60),
            microtick_ns: 100_000,
            cycle_cap_factor: 4,
            spoll_rule: PeriodRule::default(),
            budget_grid: BudgetGrid::Pruned,
        }
    }

    pub fn quick(mut self) -> Self {
        self.repetitions = 25;
        self
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("microtick {0} ns does not divide the {1} ms period grid")]
    MicrotickGrain(u64, u64),
    #[error("no methods selected")]
    NoMethods,
    #[error("repetitions must be at least 1")]
    NoRepetitions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Feasible,
    Infeasible,
    Timeout,
    GenFailed,
    /// A feasible synthesis answer the oracle refused to confirm.
    OracleReject,
    /// An internal invariant broke; the run is suspect.
    InternalError,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Feasible => "feasible",
            Outcome::Infeasible => "infeasible",
            Outcome::Timeout => "timeout",
            Outcome::GenFailed => "gen_failed",
            Outcome::OracleReject => "oracle_reject",
            Outcome::InternalError => "internal_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceRow {
    pub axis: &'static str,
    pub point: String,
    pub u_tt: String,
    pub u_et: String,
    pub rep: u32,
    pub seed: u64,
    pub method: &'static str,
    pub outcome: Outcome,
    pub reason: String,
    /// Synthesis wall time only; oracle confirmation is not included.
    pub wall_us: u64,
    pub cycle_length: u64,
    pub iterations: u32,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateRow {
    pub axis: &'static str,
    pub point: String,
    pub u_tt: String,
    pub u_et: String,
    pub method: &'static str,
    pub instances: u32,
    pub feasible: u32,
    pub schedulability_pct: String,
    pub mean_wall_us: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub instances: Vec<InstanceRow>,
    pub aggregates: Vec<AggregateRow>,
    pub meta_json: String,
}

/// The 34 (u_tt, u_et) tuples: tenths 0.1..0.7 each, sum at most 0.9.
pub fn utilization_tuples() -> Vec<(Rat, Rat)> {
    let mut out = Vec::new();
    for i in 1..=7 {
        for j in 1..=7 {
            if i + j <= 9 {
                out.push((rat(i, 10), rat(j, 10)));
            }
        }
    }
    out
}

struct PointSpec {
    label: String,
    u_tt_label: String,
    u_et_label: String,
    gen: GenSpec,
}

fn ms_ticks(ms: u64, microtick_ns: u64) -> Result<u64, ConfigError> {
    let ns = ms * 1_000_000;
    if ns % microtick_ns != 0 {
        return Err(ConfigError::MicrotickGrain(microtick_ns, ms));
    }
    Ok(ns / microtick_ns)
}

fn points(cfg: &ExperimentConfig) -> Result<Vec<PointSpec>, ConfigError> {
    let grid_ms = |ms: &[u64]| -> Result<Vec<u64>, ConfigError> {
        ms.iter().map(|&m| ms_ticks(m, cfg.microtick_ns)).collect()
    };
    let base = |u_tt: Rat, u_et: Rat, n_tt: usize, n_et: usize, periods: Vec<u64>| GenSpec {
        n_tt,
        n_et,
        u_tt,
        u_et,
        period_set: periods,
        deadline_mode: DeadlineMode::ConstrainedUpperHalf,
        seed: 0,
        microtick_ns: cfg.microtick_ns,
    };

    Ok(match cfg.axis {
        Axis::Utilization { arbitrary_deadlines } => {
            let periods = grid_ms(&[20, 30, 40])?;
            let mut out = Vec::new();
            for i in 1i64..=7 {
                for j in 1i64..=7 {
                    if i + j > 9 {
                        continue;
                    }
                    let mut gen = base(rat(i, 10), rat(j, 10), 30, 20, periods.clone());
                    if arbitrary_deadlines {
                        gen.deadline_mode = DeadlineMode::ArbitraryMultiple;
                    }
                    out.push(PointSpec {
                        label: format!("0.{i}+0.{j}"),
                        u_tt_label: format!("0.{i}"),
                        u_et_label: format!("0.{j}"),
                        gen,
                    });
                }
            }
            out
        }
        Axis::TaskCount => {
            let periods = grid_ms(&[50, 100])?;
            [8usize, 16, 32, 64, 128, 256]
                .into_iter()
                .map(|n| PointSpec {
                    label: format!("n={n}"),
                    u_tt_label: "0.2".into(),
                    u_et_label: "0.2".into(),
                    gen: base(rat(1, 5), rat(1, 5), n / 2, n / 2, periods.clone()),
                })
                .collect()
        }
        Axis::Hyperperiod => {
            // Tick-valued periods: the cycle spans three decades while the
            // task structure stays put.
            [1u64, 3, 10, 30, 100, 300, 1000]
                .into_iter()
                .map(|scale| {
                    let periods = vec![20 * scale, 30 * scale, 40 * scale];
                    let mut gen = base(rat(1, 5), rat(1, 5), 8, 8, periods);
                    gen.deadline_mode = DeadlineMode::Implicit;
                    PointSpec {
                        label: format!("cycle={}", 120 * scale),
                        u_tt_label: "0.2".into(),
                        u_et_label: "0.2".into(),
                        gen,
                    }
                })
                .collect()
        }
        Axis::LaxityQuintile => {
            let periods = grid_ms(&[50, 100])?;
            (1..=5u8)
                .map(|k| {
                    let mut gen = base(rat(1, 5), rat(1, 5), 8, 8, periods.clone());
                    gen.deadline_mode = DeadlineMode::Quintile(k);
                    PointSpec {
                        label: format!("k={k}"),
                        u_tt_label: "0.2".into(),
                        u_et_label: "0.2".into(),
                        gen,
                    }
                })
                .collect()
        }
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Distinct per (point, rep) for a fixed run seed.
fn instance_seed(run_seed: u64, point: usize, rep: u32) -> u64 {
    splitmix64(run_seed.wrapping_add(((point as u64) << 32) | u64::from(rep)))
}

enum MethodResult {
    Table {
        schedule: ScheduleTable,
        params: BudgetParams,
        iterations: u32,
        detail: String,
    },
    Infeasible {
        reason: String,
        iterations: u32,
    },
    Internal(String),
}

fn execute(cfg: &ExperimentConfig, method: Method, ts: &TaskSet) -> MethodResult {
    let cycle = match hyperperiod(&ts.tt) {
        Ok(c) => c,
        Err(e) => return MethodResult::Internal(e.to_string()),
    };
    let cycle_cap = cfg.cycle_cap_factor.saturating_mul(cycle);

    match method {
        Method::B3lf => {
            let b_tt_max = match max_tt_burst(ts) {
                BurstBound::Feasible { b_tt_max, .. } => b_tt_max,
                BurstBound::Infeasible { .. } => {
                    return MethodResult::Infeasible {
                        reason: "no admissible TT burst".into(),
                        iterations: 0,
                    }
                }
            };
            match synthesize(&ts.tt, &ts.lambda, &b_tt_max, cycle, cfg.budget_grid) {
                Ok(Synthesis::Feasible(o)) => MethodResult::Table {
                    schedule: o.schedule,
                    params: o.params,
                    iterations: o.iterations,
                    detail: format!("b_tt_max={b_tt_max}"),
                },
                Ok(Synthesis::Infeasible { reason, iterations }) => {
                    MethodResult::Infeasible { reason: reason.to_string(), iterations }
                }
                Err(e) => MethodResult::Internal(e.to_string()),
            }
        }
        Method::BinaryB3lf => match min_burst_ceiling(&ts.tt, &ts.lambda, cycle) {
            Ok(Design::Feasible { l_m_min, outcome, probes }) => {
                match admit_event_tasks(ts, &l_m_min) {
                    Admission::Accepted { b_tt_max } => MethodResult::Table {
                        schedule: outcome.schedule,
                        params: outcome.params,
                        iterations: probes,
                        detail: format!("l_m_min={l_m_min} b_tt_max={b_tt_max}"),
                    },
                    Admission::BurstTooLow { b_tt_max, needed } => MethodResult::Infeasible {
                        reason: format!("burst {b_tt_max} below the frozen ceiling {needed}"),
                        iterations: probes,
                    },
                    Admission::EnvelopeInfeasible => MethodResult::Infeasible {
                        reason: "no admissible TT burst".into(),
                        iterations: probes,
                    },
                }
            }
            Ok(Design::Infeasible { probes }) => MethodResult::Infeasible {
                reason: "no ceiling schedules the TT set".into(),
                iterations: probes,
            },
            Err(e) => MethodResult::Internal(e.to_string()),
        },
        Method::Spoll => match spoll_table(ts, cfg.spoll_rule, cycle_cap) {
            Ok(Baseline::Feasible { schedule, params, polls }) => {
                let detail = polls
                    .iter()
                    .map(|p| format!("({},{})", p.wcet, p.period))
                    .collect::<Vec<_>>()
                    .join(" ");
                MethodResult::Table { schedule, params, iterations: 0, detail }
            }
            Ok(Baseline::Infeasible(reason)) => {
                MethodResult::Infeasible { reason: reason.to_string(), iterations: 0 }
            }
            Err(e) => MethodResult::Internal(e.to_string()),
        },
        Method::Advpoll => match advpoll_table(ts, cycle_cap) {
            Ok(Baseline::Feasible { schedule, params, polls }) => {
                let detail = polls
                    .iter()
                    .map(|p| format!("({},{})", p.wcet, p.period))
                    .collect::<Vec<_>>()
                    .join(" ");
                MethodResult::Table { schedule, params, iterations: 0, detail }
            }
            Ok(Baseline::Infeasible(reason)) => {
                MethodResult::Infeasible { reason: reason.to_string(), iterations: 0 }
            }
            // The single-server analysis refuses arbitrary event deadlines;
            // that is inapplicability, not an internal fault.
            Err(e) => MethodResult::Infeasible { reason: e.to_string(), iterations: 0 },
        },
    }
}

fn run_method(
    cfg: &ExperimentConfig,
    point: &PointSpec,
    rep: u32,
    seed: u64,
    method: Method,
    ts: &TaskSet,
) -> InstanceRow {
    let started = Instant::now();
    let result = execute(cfg, method, ts);
    let wall = started.elapsed();

    let mut row = InstanceRow {
        axis: cfg.axis.name(),
        point: point.label.clone(),
        u_tt: point.u_tt_label.clone(),
        u_et: point.u_et_label.clone(),
        rep,
        seed,
        method: method.name(),
        outcome: Outcome::Infeasible,
        reason: String::new(),
        wall_us: wall.as_micros().try_into().unwrap_or(u64::MAX),
        cycle_length: 0,
        iterations: 0,
        detail: String::new(),
    };

    match result {
        MethodResult::Internal(reason) => {
            row.outcome = Outcome::InternalError;
            row.reason = reason;
        }
        MethodResult::Infeasible { reason, iterations } => {
            row.reason = reason;
            row.iterations = iterations;
            if wall > cfg.timeout {
                row.outcome = Outcome::Timeout;
                row.reason = format!("exceeded {} ms", cfg.timeout.as_millis());
            }
        }
        MethodResult::Table { schedule, params, iterations, detail } => {
            row.cycle_length = schedule.cycle();
            row.iterations = iterations;
            row.detail = detail;
            if wall > cfg.timeout {
                row.outcome = Outcome::Timeout;
                row.reason = format!("exceeded {} ms", cfg.timeout.as_millis());
            } else {
                // The gate: no feasible verdict without oracle agreement.
                let report = full_report(&schedule, ts, &params);
                if report.all_green() {
                    row.outcome = Outcome::Feasible;
                } else {
                    row.outcome = Outcome::OracleReject;
                    row.reason = if let Some(v) = &report.tt_violation {
                        v.to_string()
                    } else if let Some(offset) = report.backlog_unbounded {
                        format!("backlog grows at offset {offset}")
                    } else if !report.envelope_ok {
                        "table breaks its own envelope".into()
                    } else {
                        let b = &report.bound_breaches[0];
                        format!("{} measured {} above bound {}", b.task, b.measured, b.bound)
                    };
                }
            }
        }
    }
    row
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ConfigError> {
    if cfg.methods.is_empty() {
        return Err(ConfigError::NoMethods);
    }
    if cfg.repetitions == 0 {
        return Err(ConfigError::NoRepetitions);
    }
    let points = points(cfg)?;

    let jobs: Vec<(usize, u32)> = (0..points.len())
        .flat_map(|p| (0..cfg.repetitions).map(move |r| (p, r)))
        .collect();

    let mut batches: Vec<((usize, u32), Vec<InstanceRow>)> = jobs
        .into_par_iter()
        .map(|(p, rep)| {
            let point = &points[p];
            let seed = instance_seed(cfg.seed, p, rep);
            let mut gen = point.gen.clone();
            gen.seed = seed;
            let rows = match generate(&gen) {
                Ok(ts) => cfg
                    .methods
                    .iter()
                    .map(|&m| run_method(cfg, point, rep, seed, m, &ts))
                    .collect(),
                Err(e) => cfg
                    .methods
                    .iter()
                    .map(|&m| InstanceRow {
                        axis: cfg.axis.name(),
                        point: point.label.clone(),
                        u_tt: point.u_tt_label.clone(),
                        u_et: point.u_et_label.clone(),
                        rep,
                        seed,
                        method: m.name(),
                        outcome: Outcome::GenFailed,
                        reason: e.to_string(),
                        wall_us: 0,
                        cycle_length: 0,
                        iterations: 0,
                        detail: String::new(),
                    })
                    .collect(),
            };
            ((p, rep), rows)
        })
        .collect();

    batches.sort_by_key(|(key, _)| *key);
    let instances: Vec<InstanceRow> = batches.into_iter().flat_map(|(_, rows)| rows).collect();
    let aggregates = aggregate(cfg, &points, &instances);
    let meta_json = meta_json(cfg);
    Ok(ExperimentOutput { instances, aggregates, meta_json })
}

fn aggregate(
    cfg: &ExperimentConfig,
    points: &[PointSpec],
    instances: &[InstanceRow],
) -> Vec<AggregateRow> {
    let mut out = Vec::with_capacity(points.len() * cfg.methods.len());
    for point in points {
        for &method in &cfg.methods {
            let rows: Vec<&InstanceRow> = instances
                .iter()
                .filter(|r| r.point == point.label && r.method == method.name())
                .collect();
            let feasible = rows.iter().filter(|r| r.outcome == Outcome::Feasible).count() as u32;
            let instances_n = rows.len() as u32;
            let wall_sum: u64 = rows.iter().map(|r| r.wall_us).sum();
            out.push(AggregateRow {
                axis: cfg.axis.name(),
                point: point.label.clone(),
                u_tt: point.u_tt_label.clone(),
                u_et: point.u_et_label.clone(),
                method: method.name(),
                instances: instances_n,
                feasible,
                schedulability_pct: percent_one_decimal(&rat(
                    i64::from(feasible),
                    i64::from(instances_n.max(1)),
                )),
                mean_wall_us: wall_sum / u64::from(instances_n.max(1)),
            });
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    // The schema stays delimiter-free instead of quoting.
    s.replace(',', ";").replace('\n', " ")
}

pub const INSTANCES_HEADER: &str =
    "axis,point,u_tt,u_et,rep,seed,method,outcome,reason,wall_us,cycle_length,iterations,detail";

pub fn instances_csv(rows: &[InstanceRow]) -> String {
    let mut out = String::from(INSTANCES_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.axis,
            csv_field(&r.point),
            r.u_tt,
            r.u_et,
            r.rep,
            r.seed,
            r.method,
            r.outcome.as_str(),
            csv_field(&r.reason),
            r.wall_us,
            r.cycle_length,
            r.iterations,
            csv_field(&r.detail),
        ));
    }
    out
}

pub const AGGREGATE_HEADER: &str =
    "axis,point,u_tt,u_et,method,instances,feasible,schedulability_pct,mean_wall_us";

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.axis,
            csv_field(&r.point),
            r.u_tt,
            r.u_et,
            r.method,
            r.instances,
            r.feasible,
            r.schedulability_pct,
            r.mean_wall_us,
        ));
    }
    out
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn meta_json(cfg: &ExperimentConfig) -> String {
    let methods: Vec<String> = cfg.methods.iter().map(|m| m.name().to_owned()).collect();
    let canonical = format!(
        "{}|{}|{}|{}|{}|{}|{}|{:?}|{:?}",
        cfg.axis.name(),
        methods.join("+"),
        cfg.repetitions,
        cfg.seed,
        cfg.timeout.as_millis(),
        cfg.microtick_ns,
        cfg.cycle_cap_factor,
        cfg.spoll_rule,
        cfg.budget_grid,
    );
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "axis": cfg.axis.name(),
        "methods": methods,
        "repetitions": cfg.repetitions,
        "seed": cfg.seed,
        "timeout_ms": cfg.timeout.as_millis() as u64,
        "microtick_ns": cfg.microtick_ns,
        "cycle_cap_factor": cfg.cycle_cap_factor,
        "spoll_rule": format!("{:?}", cfg.spoll_rule),
        "budget_grid": format!("{:?}", cfg.budget_grid),
        "config_hash": format!("{:016x}", fnv1a(canonical.as_bytes())),
    })
    .to_string()
}
