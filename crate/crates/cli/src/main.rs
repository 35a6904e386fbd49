//! Command-line front end: generation, envelope analysis, synthesis,
//! baselines, conformance checks, oracle validation, and batch sweeps.
//!
//! Exit codes: 0 ok, 2 infeasible, 3 invalid input, 4 internal invariant
//! breach. Every non-zero exit prints one JSON line to stderr with the
//! failure kind and reason.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use slotforge_core::budget::{
    budget_trace, conformance, token_bucket_conformance, window_envelope_check, Conformance,
    WindowCheck,
};
use slotforge_core::envelope::{max_tt_burst, Binding, BurstBound, LevelSlack};
use slotforge_core::experiment::{
    aggregate_csv, instances_csv, run_experiment, Axis, ExperimentConfig, Method, Outcome,
};
use slotforge_core::formats::{
    resolve_schedule, schedule_file, schedule_from_json, schedule_to_json, task_set_from_json,
    task_set_to_json, ScheduleFile, ServerRecord,
};
use slotforge_core::oracle::{et_responses_at, full_report, ValidationReport};
use slotforge_core::polling::{advpoll_table, spoll_table, Baseline, PeriodRule, PollError};
use slotforge_core::rational::{rat, Rat};
use slotforge_core::synth::{
    admit_event_tasks, min_burst_ceiling, synthesize, Admission, BudgetGrid, Design, Synthesis,
    SynthesisError,
};
use slotforge_core::taskgen::{generate, DeadlineMode, GenError, GenSpec};
use slotforge_core::taskmodel::{hyperperiod, validate, TaskSet};

#[derive(Parser)]
#[command(name = "slotforge", version, about = "Schedule-table synthesis under a burst-limiting budget")]
struct Cli {
    /// RNG seed for generation and sweeps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Microtick length in nanoseconds.
    #[arg(long, global = true, default_value_t = 100_000)]
    microtick: u64,
    /// Cycle cap for polling baselines, as a multiple of the TT hyperperiod.
    #[arg(long, global = true, default_value_t = 4)]
    cycle_cap: u64,
    /// Size polling periods by the conservative (D - C) / 2 rule.
    #[arg(long, global = true)]
    spoll_conservative: bool,
    /// Probe every initial budget instead of the pruned grid.
    #[arg(long, global = true)]
    exhaustive_budget: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random task set (or a batch of them).
    Gen(GenArgs),
    /// Print the admissible TT burst envelope of a task set.
    Envelope {
        #[arg(long)]
        task_set: PathBuf,
    },
    /// Synthesize a schedule table at the task set's envelope bound.
    Synth {
        #[arg(long)]
        task_set: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimize the burst ceiling and persist it, or admit new event load
    /// against a stored ceiling.
    Design(DesignArgs),
    /// Build a polling-server baseline table.
    Baseline(BaselineArgs),
    /// Check a schedule file against a budget or envelope discipline.
    Check(CheckArgs),
    /// Replay a schedule against the brute-force oracle.
    Validate(ValidateArgs),
    /// Run a sweep and write results CSVs.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output file, or output directory with --batch.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_tt: usize,
    #[arg(long)]
    n_et: usize,
    /// Target TT utilization as a decimal, e.g. 0.3.
    #[arg(long)]
    u_tt: String,
    /// Target ET utilization as a decimal.
    #[arg(long)]
    u_et: String,
    /// Period grid in milliseconds, comma-separated.
    #[arg(long, value_delimiter = ',')]
    periods_ms: Vec<u64>,
    /// Period grid in microticks, comma-separated (alternative to --periods-ms).
    #[arg(long, value_delimiter = ',')]
    periods: Vec<u64>,
    /// ET deadline placement: constrained | arbitrary | implicit | q1..q5.
    #[arg(long, default_value = "constrained")]
    deadline_mode: String,
    /// Write this many sets (seeds seed, seed+1, ...) into OUT as a directory.
    #[arg(long)]
    batch: Option<u32>,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    task_set: PathBuf,
    /// Write the designed schedule, with its minimized ceiling, here.
    #[arg(long, conflicts_with = "admit")]
    out: Option<PathBuf>,
    /// Admit the task set's event load against the ceiling stored in this
    /// schedule file; no re-synthesis.
    #[arg(long)]
    admit: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum BaselineMethod {
    Spoll,
    Advpoll,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    method: BaselineMethod,
    #[arg(long)]
    task_set: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Semantics {
    /// Budget automaton: TT slots drain, idle slots refill up to the ceiling.
    Blc,
    /// Token bucket at the same (rate, burst), full at slot zero.
    Tb,
    /// Window sums against the exported affine envelope.
    Arrival,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    task_set: PathBuf,
    #[arg(long, value_enum, default_value_t = Semantics::Blc)]
    semantics: Semantics,
    /// Write the budget trace CSV here instead of stdout.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    task_set: PathBuf,
    /// Write per-offset worst responses here (CSV).
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum AxisArg {
    Utilization,
    UtilizationArbitrary,
    TaskCount,
    Hyperperiod,
    Laxity,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Directory for instances.csv, aggregate.csv, and meta.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// 25 repetitions per point instead of 100.
    #[arg(long)]
    quick: bool,
    /// Subset of b3lf,binary_b3lf,spoll,advpoll (default: all).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Override the repetition count.
    #[arg(long)]
    reps: Option<u32>,
    /// Per-instance synthesis timeout in seconds.
    #[arg(long, default_value_t = 60)]
    timeout_s: u64,
}

enum Failure {
    Infeasible(String),
    Invalid(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Infeasible(_) => 2,
            Failure::Invalid(_) => 3,
            Failure::Internal(_) => 4,
        }
    }

    fn to_json(&self) -> String {
        let (kind, reason) = match self {
            Failure::Infeasible(r) => ("infeasible", r),
            Failure::Invalid(r) => ("invalid", r),
            Failure::Internal(r) => ("internal", r),
        };
        serde_json::json!({ "error": kind, "reason": reason }).to_string()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let grid = if cli.exhaustive_budget { BudgetGrid::Exhaustive } else { BudgetGrid::Pruned };
    let rule =
        if cli.spoll_conservative { PeriodRule::Conservative } else { PeriodRule::Midpoint };
    match &cli.command {
        Command::Gen(args) => cmd_gen(&cli, args),
        Command::Envelope { task_set } => cmd_envelope(task_set),
        Command::Synth { task_set, out } => cmd_synth(task_set, out, grid),
        Command::Design(args) => cmd_design(args),
        Command::Baseline(args) => cmd_baseline(&cli, args, rule),
        Command::Check(args) => cmd_check(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Experiment(args) => cmd_experiment(&cli, args, grid, rule),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .map_err(|e| Failure::Invalid(format!("cannot write {}: {e}", path.display())))
}

fn load_task_set(path: &Path) -> Result<TaskSet, Failure> {
    let ts = task_set_from_json(&read_text(path)?)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    let violations = validate(&ts);
    if violations.is_empty() {
        Ok(ts)
    } else {
        let joined =
            violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        Err(Failure::Invalid(format!("{}: {joined}", path.display())))
    }
}

fn load_schedule(path: &Path) -> Result<ScheduleFile, Failure> {
    schedule_from_json(&read_text(path)?)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

/// "0.3" or "1" as an exact rational.
fn parse_decimal(s: &str) -> Result<Rat, Failure> {
    let bad = || Failure::Invalid(format!("not a decimal fraction: {s}"));
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if (whole.is_empty() && frac.is_empty()) || frac.len() > 9 {
        return Err(bad());
    }
    let w: u64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
    let f: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    let denom = 10u64.pow(frac.len() as u32);
    let numer = w
        .checked_mul(denom)
        .and_then(|x| x.checked_add(f))
        .and_then(|x| i64::try_from(x).ok())
        .ok_or_else(bad)?;
    Ok(rat(numer, denom as i64))
}

fn ms_to_ticks(ms: u64, microtick_ns: u64) -> Result<u64, Failure> {
    let ns = ms.checked_mul(1_000_000).ok_or_else(|| {
        Failure::Invalid(format!("period {ms} ms overflows the tick range"))
    })?;
    if ns % microtick_ns != 0 {
        return Err(Failure::Invalid(format!(
            "microtick {microtick_ns} ns does not divide the {ms} ms period"
        )));
    }
    Ok(ns / microtick_ns)
}

fn parse_deadline_mode(s: &str) -> Result<DeadlineMode, Failure> {
    Ok(match s {
        "constrained" => DeadlineMode::ConstrainedUpperHalf,
        "arbitrary" => DeadlineMode::ArbitraryMultiple,
        "implicit" => DeadlineMode::Implicit,
        _ => match s.strip_prefix('q').and_then(|k| k.parse::<u8>().ok()) {
            Some(k @ 1..=5) => DeadlineMode::Quintile(k),
            _ => {
                return Err(Failure::Invalid(format!(
                    "unknown deadline mode {s} (constrained, arbitrary, implicit, or q1..q5)"
                )))
            }
        },
    })
}

fn tt_cycle(ts: &TaskSet) -> Result<u64, Failure> {
    hyperperiod(&ts.tt).map_err(|e| Failure::Invalid(e.to_string()))
}

fn synth_failure(e: SynthesisError) -> Failure {
    match e {
        SynthesisError::BrokenDescent { .. } => Failure::Internal(e.to_string()),
        other => Failure::Invalid(other.to_string()),
    }
}

fn cmd_gen(cli: &Cli, args: &GenArgs) -> Result<(), Failure> {
    let period_set = match (args.periods.is_empty(), args.periods_ms.is_empty()) {
        (false, true) => args.periods.clone(),
        (true, false) => args
            .periods_ms
            .iter()
            .map(|&ms| ms_to_ticks(ms, cli.microtick))
            .collect::<Result<_, _>>()?,
        _ => {
            return Err(Failure::Invalid(
                "exactly one of --periods and --periods-ms is required".into(),
            ))
        }
    };
    let mut spec = GenSpec {
        n_tt: args.n_tt,
        n_et: args.n_et,
        u_tt: parse_decimal(&args.u_tt)?,
        u_et: parse_decimal(&args.u_et)?,
        period_set,
        deadline_mode: parse_deadline_mode(&args.deadline_mode)?,
        seed: cli.seed,
        microtick_ns: cli.microtick,
    };

    let gen_one = |spec: &GenSpec| -> Result<TaskSet, Failure> {
        generate(spec).map_err(|e| match e {
            GenError::RetriesExhausted(_) => Failure::Infeasible(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        })
    };

    match args.batch {
        None => {
            let ts = gen_one(&spec)?;
            write_text(&args.out, &task_set_to_json(&ts))?;
            println!(
                "wrote {} ({} TT + {} ET, hyperperiod {})",
                args.out.display(),
                ts.tt.len(),
                ts.et.len(),
                tt_cycle(&ts)?,
            );
        }
        Some(n) => {
            fs::create_dir_all(&args.out).map_err(|e| {
                Failure::Invalid(format!("cannot create {}: {e}", args.out.display()))
            })?;
            for i in 0..n {
                spec.seed = cli.seed.wrapping_add(u64::from(i));
                let ts = gen_one(&spec)?;
                let path = args.out.join(format!("ts_{i:03}.json"));
                write_text(&path, &task_set_to_json(&ts))?;
            }
            println!("wrote {n} task sets under {}", args.out.display());
        }
    }
    Ok(())
}

fn binding_text(binding: &Binding) -> String {
    match binding {
        Binding::EtLevel(p) => format!("ET level {p}"),
        Binding::TtTotal => "total TT cost".into(),
    }
}

fn print_levels(levels: &[LevelSlack]) {
    for l in levels {
        println!(
            "  priority {}: min deadline {}, admissible burst {}",
            l.priority, l.min_deadline, l.admissible_burst
        );
    }
}

fn cmd_envelope(task_set: &Path) -> Result<(), Failure> {
    let ts = load_task_set(task_set)?;
    match max_tt_burst(&ts) {
        BurstBound::Feasible { b_tt_max, binding, levels } => {
            println!("b_tt_max = {b_tt_max}");
            println!("binding: {}", binding_text(&binding));
            print_levels(&levels);
            Ok(())
        }
        BurstBound::Infeasible { blocking, saturated } => {
            print_levels(&blocking);
            for p in &saturated {
                println!("  priority {p}: saturated by higher-priority load");
            }
            Err(Failure::Infeasible("no admissible TT burst".into()))
        }
    }
}

fn cmd_synth(task_set: &Path, out: &Path, grid: BudgetGrid) -> Result<(), Failure> {
    let ts = load_task_set(task_set)?;
    let cycle = tt_cycle(&ts)?;
    let b_tt_max = match max_tt_burst(&ts) {
        BurstBound::Feasible { b_tt_max, .. } => b_tt_max,
        BurstBound::Infeasible { .. } => {
            return Err(Failure::Infeasible("no admissible TT burst".into()))
        }
    };
    match synthesize(&ts.tt, &ts.lambda, &b_tt_max, cycle, grid).map_err(synth_failure)? {
        Synthesis::Feasible(o) => {
            let mut file = schedule_file(&o.schedule, &o.params, &ts.tt)
                .map_err(|e| Failure::Internal(e.to_string()))?;
            file.method = Some("b3lf".into());
            file.initial_budget = Some(o.initial_budget.clone());
            write_text(out, &schedule_to_json(&file))?;
            println!(
                "wrote {} (cycle {}, {} TT slots, initial budget {}, {} iterations, b_tt_max {})",
                out.display(),
                o.schedule.cycle(),
                o.schedule.tt_slots(),
                o.initial_budget,
                o.iterations,
                b_tt_max,
            );
            Ok(())
        }
        Synthesis::Infeasible { reason, iterations } => {
            Err(Failure::Infeasible(format!("{reason} ({iterations} iterations)")))
        }
    }
}

fn cmd_design(args: &DesignArgs) -> Result<(), Failure> {
    let ts = load_task_set(&args.task_set)?;

    if let Some(sched_path) = &args.admit {
        let file = load_schedule(sched_path)?;
        let l_m_min = file.l_m_min.ok_or_else(|| {
            Failure::Invalid(format!("{} carries no stored ceiling", sched_path.display()))
        })?;
        return match admit_event_tasks(&ts, &l_m_min) {
            Admission::Accepted { b_tt_max } => {
                println!("accepted: admissible burst {b_tt_max} covers stored ceiling {l_m_min}");
                Ok(())
            }
            Admission::BurstTooLow { b_tt_max, needed } => Err(Failure::Infeasible(format!(
                "admissible burst {b_tt_max} is below the stored ceiling {needed}"
            ))),
            Admission::EnvelopeInfeasible => {
                Err(Failure::Infeasible("no admissible TT burst".into()))
            }
        };
    }

    let out = args
        .out
        .as_ref()
        .ok_or_else(|| Failure::Invalid("one of --out and --admit is required".into()))?;
    let cycle = tt_cycle(&ts)?;
    match min_burst_ceiling(&ts.tt, &ts.lambda, cycle).map_err(synth_failure)? {
        Design::Feasible { l_m_min, outcome, probes } => {
            let mut file = schedule_file(&outcome.schedule, &outcome.params, &ts.tt)
                .map_err(|e| Failure::Internal(e.to_string()))?;
            file.method = Some("binary_b3lf".into());
            file.initial_budget = Some(outcome.initial_budget.clone());
            file.l_m_min = Some(l_m_min.clone());
            write_text(out, &schedule_to_json(&file))?;
            println!(
                "wrote {} (minimal ceiling {}, cycle {}, {} probes)",
                out.display(),
                l_m_min,
                outcome.schedule.cycle(),
                probes,
            );
            if ts.et.is_empty() {
                return Ok(());
            }
            match admit_event_tasks(&ts, &l_m_min) {
                Admission::Accepted { b_tt_max } => {
                    println!("event load accepted: admissible burst {b_tt_max}");
                    Ok(())
                }
                Admission::BurstTooLow { b_tt_max, needed } => Err(Failure::Infeasible(format!(
                    "admissible burst {b_tt_max} is below the minimal ceiling {needed}"
                ))),
                Admission::EnvelopeInfeasible => {
                    Err(Failure::Infeasible("no admissible TT burst".into()))
                }
            }
        }
        Design::Infeasible { probes } => Err(Failure::Infeasible(format!(
            "no ceiling admits a repeatable table ({probes} probes)"
        ))),
    }
}

fn cmd_baseline(cli: &Cli, args: &BaselineArgs, rule: PeriodRule) -> Result<(), Failure> {
    let ts = load_task_set(&args.task_set)?;
    let base = if ts.tt.is_empty() { 1 } else { tt_cycle(&ts)? };
    let cap = cli.cycle_cap.saturating_mul(base);
    let (outcome, method) = match args.method {
        BaselineMethod::Spoll => (spoll_table(&ts, rule, cap), "spoll"),
        BaselineMethod::Advpoll => (advpoll_table(&ts, cap), "advpoll"),
    };
    match outcome {
        Ok(Baseline::Feasible { schedule, params, polls }) => {
            let mut file = schedule_file(&schedule, &params, &ts.tt)
                .map_err(|e| Failure::Internal(e.to_string()))?;
            file.method = Some(method.into());
            file.servers = polls.iter().map(ServerRecord::from).collect();
            write_text(&args.out, &schedule_to_json(&file))?;
            let servers = polls
                .iter()
                .map(|p| format!("(C_p={}, T_p={})", p.wcet, p.period))
                .collect::<Vec<_>>()
                .join(" ");
            println!(
                "wrote {} (cycle {}, servers: {servers})",
                args.out.display(),
                schedule.cycle(),
            );
            Ok(())
        }
        Ok(Baseline::Infeasible(reason)) => Err(Failure::Infeasible(reason.to_string())),
        Err(PollError::Params(e)) => Err(Failure::Internal(e.to_string())),
        Err(e) => Err(Failure::Infeasible(e.to_string())),
    }
}

fn cmd_check(args: &CheckArgs) -> Result<(), Failure> {
    let ts = load_task_set(&args.task_set)?;
    let file = load_schedule(&args.schedule)?;
    let (table, params) =
        resolve_schedule(&file, &ts).map_err(|e| Failure::Invalid(e.to_string()))?;
    let initial = file.initial_budget.clone().unwrap_or_else(|| params.ceiling.clone());

    // The trace is always the budget automaton's; --semantics picks the
    // verdict discipline.
    let trace = budget_trace(&table, &params, &initial);
    let mut csv = String::from("t,bdg\n");
    for (t, b) in trace.iter().enumerate() {
        csv.push_str(&format!("{t},{b}\n"));
    }

    let verdict: Result<(), String> = match args.semantics {
        Semantics::Blc => match conformance(&table, &params, &initial) {
            Conformance::Conformant => {
                println!("BLC conformant from initial budget {initial}");
                Ok(())
            }
            Conformance::Violated { slot, budget } => {
                println!("BLC violated at slot {slot} (budget {budget})");
                Err(format!("BLC violation at slot {slot}, budget {budget}"))
            }
        },
        Semantics::Tb => {
            match token_bucket_conformance(&table, &params.idle_rate, &params.ceiling) {
                Conformance::Conformant => {
                    println!(
                        "TB conformant at rate {} burst {}",
                        params.idle_rate, params.ceiling
                    );
                    Ok(())
                }
                Conformance::Violated { slot, budget } => {
                    println!("TB violated at slot {slot} (balance {budget})");
                    Err(format!("TB violation at slot {slot}, balance {budget}"))
                }
            }
        }
        Semantics::Arrival => match window_envelope_check(&table, &params.service_envelope()) {
            WindowCheck::Ok => {
                println!("window sums stay within the exported envelope");
                Ok(())
            }
            WindowCheck::Violated { start, len, tt_slots, bound } => {
                println!(
                    "window [{start}, {}) holds {tt_slots} TT slots, envelope grants {bound}",
                    start + len
                );
                Err(format!(
                    "envelope violation in window [{start}, {}): {tt_slots} TT slots > {bound}",
                    start + len
                ))
            }
        },
    };

    match &args.trace_out {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    verdict.map_err(Failure::Infeasible)
}

fn first_red(report: &ValidationReport) -> String {
    if let Some(v) = &report.tt_violation {
        return v.to_string();
    }
    if let Some(offset) = report.backlog_unbounded {
        return format!("backlog grows at offset {offset}");
    }
    if !report.envelope_ok {
        return "table breaks its exported envelope".into();
    }
    match report.bound_breaches.first() {
        Some(b) => format!("task {} measured {} above bound {}", b.task, b.measured, b.bound),
        None => "unknown".into(),
    }
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let ts = load_task_set(&args.task_set)?;
    let file = load_schedule(&args.schedule)?;
    let (table, params) =
        resolve_schedule(&file, &ts).map_err(|e| Failure::Invalid(e.to_string()))?;

    let report = full_report(&table, &ts, &params);
    match &report.tt_violation {
        None => println!("tt: ok"),
        Some(v) => println!("tt: {v}"),
    }
    match report.backlog_unbounded {
        None => println!("backlog: bounded"),
        Some(offset) => println!("backlog: grows at offset {offset}"),
    }
    println!("envelope: {}", if report.envelope_ok { "ok" } else { "violated" });
    if report.bound_breaches.is_empty() {
        println!("bounds: ok");
    } else {
        for b in &report.bound_breaches {
            println!("bounds: task {} measured {} above {}", b.task, b.measured, b.bound);
        }
    }
    if !report.et_worst.is_empty() {
        println!("worst responses:");
        for (id, m) in &report.et_worst {
            println!("  {id}: {} at offset {}", m.worst_response, m.witness_offset);
        }
    }

    if let Some(path) = &args.csv_out {
        let rows: Vec<String> = (0..table.cycle())
            .into_par_iter()
            .map(|offset| match et_responses_at(&table, &ts.et, offset) {
                Ok(responses) => ts
                    .et
                    .iter()
                    .zip(&responses)
                    .map(|(t, r)| format!("{offset},{},{r}\n", t.id))
                    .collect::<String>(),
                Err(_) => ts
                    .et
                    .iter()
                    .map(|t| format!("{offset},{},unbounded\n", t.id))
                    .collect::<String>(),
            })
            .collect();
        let mut csv = String::from("offset,task,response\n");
        csv.extend(rows);
        write_text(path, &csv)?;
    }

    if report.all_green() {
        Ok(())
    } else {
        Err(Failure::Infeasible(first_red(&report)))
    }
}

fn cmd_experiment(
    cli: &Cli,
    args: &ExperimentArgs,
    grid: BudgetGrid,
    rule: PeriodRule,
) -> Result<(), Failure> {
    let axis = match args.axis {
        AxisArg::Utilization => Axis::Utilization { arbitrary_deadlines: false },
        AxisArg::UtilizationArbitrary => Axis::Utilization { arbitrary_deadlines: true },
        AxisArg::TaskCount => Axis::TaskCount,
        AxisArg::Hyperperiod => Axis::Hyperperiod,
        AxisArg::Laxity => Axis::LaxityQuintile,
    };
    let mut cfg = ExperimentConfig::desk(axis, cli.seed);
    cfg.microtick_ns = cli.microtick;
    cfg.cycle_cap_factor = cli.cycle_cap;
    cfg.spoll_rule = rule;
    cfg.budget_grid = grid;
    cfg.timeout = Duration::from_secs(args.timeout_s);
    if args.quick {
        cfg = cfg.quick();
    }
    if let Some(reps) = args.reps {
        cfg.repetitions = reps;
    }
    if !args.methods.is_empty() {
        let mut methods = Vec::new();
        for name in &args.methods {
            let m = Method::from_name(name)
                .ok_or_else(|| Failure::Invalid(format!("unknown method: {name}")))?;
            if !methods.contains(&m) {
                methods.push(m);
            }
        }
        cfg.methods = methods;
    }

    let out = run_experiment(&cfg).map_err(|e| Failure::Invalid(e.to_string()))?;
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| Failure::Invalid(format!("cannot create {}: {e}", args.out_dir.display())))?;
    write_text(&args.out_dir.join("instances.csv"), &instances_csv(&out.instances))?;
    write_text(&args.out_dir.join("aggregate.csv"), &aggregate_csv(&out.aggregates))?;
    write_text(&args.out_dir.join("meta.json"), &out.meta_json)?;

    let count = |o: Outcome| out.instances.iter().filter(|r| r.outcome == o).count();
    println!(
        "{} instances: {} feasible, {} infeasible, {} timeout, {} gen_failed, {} oracle_reject",
        out.instances.len(),
        count(Outcome::Feasible),
        count(Outcome::Infeasible),
        count(Outcome::Timeout),
        count(Outcome::GenFailed),
        count(Outcome::OracleReject),
    );
    println!("results under {}", args.out_dir.display());

    let internal = count(Outcome::InternalError);
    if internal > 0 {
        return Err(Failure::Internal(format!(
            "{internal} instances hit internal errors; see instances.csv"
        )));
    }
    Ok(())
}
