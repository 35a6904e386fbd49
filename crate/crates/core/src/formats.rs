//! On-disk formats: the task-set file and the schedule file, both JSON.
//!
//! Schedule slots name tasks by id (`"IDLE"` for free slots) so a file
//! reads without the task set next to it; resolving a file back to a table
//! checks every name against the set's TT tasks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::{BudgetParams, ScheduleTable, Slot};
use crate::polling::PollingTask;
use crate::rational::Rat;
use crate::taskmodel::{Task, TaskKind, TaskSet};

pub const IDLE_SLOT: &str = "IDLE";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("slot {at} names {id:?}, which is not a TT task of the set")]
    UnknownSlotTask { id: String, at: usize },
    #[error("declared cycle_length {declared} does not match the {actual} slots given")]
    CycleMismatch { declared: u64, actual: usize },
    #[error("schedule references TT index {index} beyond the task list")]
    IndexOutOfRange { index: u32 },
}

#[derive(Serialize, Deserialize)]
struct TaskRecord {
    id: String,
    kind: TaskKind,
    #[serde(rename = "C")]
    wcet: u64,
    #[serde(rename = "T")]
    period: u64,
    #[serde(rename = "D")]
    deadline: u64,
    priority: u32,
}

#[derive(Serialize, Deserialize)]
struct TaskSetFile {
    microtick_ns: u64,
    #[serde(with = "crate::rational::serde_pair")]
    lambda: Rat,
    tasks: Vec<TaskRecord>,
}

pub fn task_set_to_json(ts: &TaskSet) -> String {
    let record = |t: &Task| TaskRecord {
        id: t.id.0.clone(),
        kind: t.kind,
        wcet: t.wcet,
        period: t.period,
        deadline: t.deadline,
        priority: t.priority,
    };
    let file = TaskSetFile {
        microtick_ns: ts.microtick_ns,
        lambda: ts.lambda.clone(),
        tasks: ts.tt.iter().chain(&ts.et).map(record).collect(),
    };
    serde_json::to_string_pretty(&file).expect("task sets always serialize")
}

pub fn task_set_from_json(text: &str) -> Result<TaskSet, FormatError> {
    let file: TaskSetFile = serde_json::from_str(text)?;
    let tasks = file
        .tasks
        .into_iter()
        .map(|r| Task {
            id: r.id.as_str().into(),
            kind: r.kind,
            wcet: r.wcet,
            period: r.period,
            deadline: r.deadline,
            priority: r.priority,
        })
        .collect();
    Ok(TaskSet::new(file.microtick_ns, file.lambda, tasks))
}

/// A reservation exported next to the table it shaped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerRecord {
    pub serves: Vec<String>,
    #[serde(rename = "C_p")]
    pub wcet: u64,
    #[serde(rename = "T_p")]
    pub period: u64,
}

impl From<&PollingTask> for ServerRecord {
    fn from(p: &PollingTask) -> Self {
        ServerRecord {
            serves: p.serves.iter().map(|id| id.0.clone()).collect(),
            wcet: p.wcet,
            period: p.period,
        }
    }
}

/// The schedule file: one repeating cycle of named slots plus the affine
/// envelope parameters the table honors. Synthesis provenance (`method`,
/// `initial_budget`, `l_m_min`, `servers`) travels in optional fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub cycle_length: u64,
    pub params: BudgetParams,
    pub slots: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "crate::rational::serde_pair_opt"
    )]
    pub initial_budget: Option<Rat>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "crate::rational::serde_pair_opt"
    )]
    pub l_m_min: Option<Rat>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub servers: Vec<ServerRecord>,
}

/// Names the table's slots after the TT list and attaches the envelope
/// parameters; provenance fields start empty.
pub fn schedule_file(
    sched: &ScheduleTable,
    params: &BudgetParams,
    tt: &[Task],
) -> Result<ScheduleFile, FormatError> {
    let mut slots = Vec::with_capacity(sched.slots.len());
    for slot in &sched.slots {
        slots.push(match *slot {
            Slot::Idle => IDLE_SLOT.to_owned(),
            Slot::Tt(index) => tt
                .get(index as usize)
                .map(|t| t.id.0.clone())
                .ok_or(FormatError::IndexOutOfRange { index })?,
        });
    }
    Ok(ScheduleFile {
        cycle_length: sched.cycle(),
        params: params.clone(),
        slots,
        method: None,
        initial_budget: None,
        l_m_min: None,
        servers: Vec::new(),
    })
}

pub fn schedule_to_json(file: &ScheduleFile) -> String {
    serde_json::to_string_pretty(file).expect("schedule files always serialize")
}

pub fn schedule_from_json(text: &str) -> Result<ScheduleFile, FormatError> {
    Ok(serde_json::from_str(text)?)
}

/// Resolves slot names back to TT indices of `ts`. Every non-idle name must
/// be a TT task id; the declared cycle must match the slot count.
pub fn resolve_schedule(
    file: &ScheduleFile,
    ts: &TaskSet,
) -> Result<(ScheduleTable, BudgetParams), FormatError> {
    if file.cycle_length != file.slots.len() as u64 {
        return Err(FormatError::CycleMismatch {
            declared: file.cycle_length,
            actual: file.slots.len(),
        });
    }
    let mut slots = Vec::with_capacity(file.slots.len());
    for (at, name) in file.slots.iter().enumerate() {
        if name == IDLE_SLOT {
            slots.push(Slot::Idle);
            continue;
        }
        let index = ts
            .tt
            .iter()
            .position(|t| t.id.0 == *name)
            .ok_or_else(|| FormatError::UnknownSlotTask { id: name.clone(), at })?;
        slots.push(Slot::Tt(index as u32));
    }
    Ok((ScheduleTable::new(slots), file.params.clone()))
}
