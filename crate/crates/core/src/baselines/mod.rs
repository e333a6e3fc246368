//! Non-learning schedulers.

mod edf;
mod ga;

pub use edf::edf_schedule;
pub use ga::{ga_schedule, GaConfig};

use rand_chacha::ChaCha8Rng;

use crate::env::Observation;
use crate::error::SchedulerError;
use crate::model::Schedule;
use crate::scheduler::Scheduler;

#[derive(Debug, Clone, Copy, Default)]
pub struct EdfScheduler;

impl Scheduler for EdfScheduler {
    fn name(&self) -> &str {
        "edf"
    }

    fn schedule(&self, obs: &Observation, _rng: &mut ChaCha8Rng) -> Result<Schedule, SchedulerError> {
        Ok(edf_schedule(obs))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GaScheduler {
    pub config: GaConfig,
}

impl Scheduler for GaScheduler {
    fn name(&self) -> &str {
        "ga"
    }

    fn schedule(&self, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<Schedule, SchedulerError> {
        Ok(ga_schedule(obs, &self.config, rng))
    }
}
