//! Common interface for every scheduling method.

use std::cmp::Ordering;

use rand_chacha::ChaCha8Rng;

use crate::env::Observation;
use crate::error::SchedulerError;
use crate::model::Schedule;

/// A method that turns one round's observation into a complete schedule.
pub trait Scheduler: Send + Sync {
    fn name(&self) -> &str;

    fn schedule(&self, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<Schedule, SchedulerError>;
}

/// Estimated quality of a schedule: more feasible tasks first, then shorter
/// makespan over the executed tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleScore {
    pub feasible: usize,
    pub makespan: f64,
}

impl ScheduleScore {
    /// `Less` means `self` is better.
    pub fn rank(&self, other: &Self) -> Ordering {
        other
            .feasible
            .cmp(&self.feasible)
            .then(self.makespan.total_cmp(&other.makespan))
    }
}

/// Scores `s` by dispatching it against the observation's estimated durations.
pub fn estimated_score(obs: &Observation, s: &Schedule) -> Result<ScheduleScore, SchedulerError> {
    let trace = obs.estimate_trace(s)?;
    Ok(ScheduleScore {
        feasible: trace.feasible_set.len(),
        makespan: trace.executed_makespan(),
    })
}
