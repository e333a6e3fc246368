//! Human-robot team scheduling under deadline and wait constraints.
//!
//! - [`model`]: problems, schedules, traces and validation
//! - [`temporal`]: STN construction, consistency checks and dispatch
//! - [`workers`]: robot durations, human learning curves, the estimator
//! - [`env`]: the multi-round environment and its reward
//! - [`probgen`]: random problems and dataset files
//! - [`baselines`]: EDF and the genetic post-processor
//! - [`scheduler`]: the interface every method implements

pub mod baselines;
pub mod env;
mod error;
pub mod model;
pub mod probgen;
pub mod scheduler;
pub mod temporal;
pub mod workers;

pub use env::{EnvConfig, MultiRoundEnv, Observation, RewardKind, StepOutcome};
pub use error::{DatasetError, EnvError, ModelError, SchedulerError};
pub use model::{
    validate_problem, AgentId, AgentKind, DurationMatrix, ExecutionTrace, ProblemInstance,
    Schedule, ScheduleDecision, SchedulingProblem, TaskId, Violation, WaitConstraint,
};
pub use scheduler::{estimated_score, ScheduleScore, Scheduler};
