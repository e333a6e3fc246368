use thiserror::Error;

use crate::model::{TaskId, Violation};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("duration matrix has {found} entries, expected {expected}")]
    DurationShape { expected: usize, found: usize },
    #[error("task {task} out of range (problem has {num_tasks} tasks)")]
    TaskOutOfRange { task: TaskId, num_tasks: usize },
    #[error("agent {agent} out of range (problem has {num_agents} agents)")]
    AgentOutOfRange { agent: usize, num_agents: usize },
    #[error("task {0} appears more than once in the schedule")]
    DuplicateTask(TaskId),
    #[error("realized duration matrix is {found:?}, expected {expected:?}")]
    MatrixShape {
        expected: (usize, usize),
        found: (usize, usize),
    },
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid problem: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidProblem(Vec<Violation>),
    #[error("environment stepped before reset")]
    NotReset,
    #[error("environment finished after {0} rounds; call reset first")]
    Finished(usize),
    #[error("human curve table covers {found} humans × {tasks} tasks, problem needs {expected} humans")]
    CurveShape {
        expected: usize,
        found: usize,
        tasks: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("{method} requires a deterministic environment")]
    RequiresDeterministic { method: String },
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}
