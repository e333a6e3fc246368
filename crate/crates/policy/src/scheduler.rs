use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use teamsched_core::{Observation, Schedule, Scheduler, SchedulerError};

use crate::error::PolicyError;
use crate::net::HybridNet;
use crate::rollout::{generate_schedule, interactive_schedule, sample_best, DecodeMode};

fn to_scheduler_error(method: &str, e: PolicyError) -> SchedulerError {
    match e {
        PolicyError::RequiresDeterministic => SchedulerError::RequiresDeterministic { method: method.into() },
        PolicyError::Model(m) => SchedulerError::Model(m),
        other => SchedulerError::Failed(other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoding {
    Greedy,
    /// Best of this many sampled schedules.
    BestOf(usize),
}

/// The LSTM-propagated policy: one encode per schedule.
#[derive(Debug, Clone)]
pub struct HybridNetScheduler {
    pub net: Arc<HybridNet>,
    pub decoding: Decoding,
}

impl Scheduler for HybridNetScheduler {
    fn name(&self) -> &str {
        "hybridnet"
    }

    fn schedule(&self, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<Schedule, SchedulerError> {
        let out = match self.decoding {
            Decoding::Greedy => generate_schedule(&self.net, obs, DecodeMode::Greedy, rng).map(|r| r.schedule),
            Decoding::BestOf(b) => sample_best(&self.net, obs, b, rng),
        };
        out.map_err(|e| to_scheduler_error(self.name(), e))
    }
}

/// Re-encodes after every decision; deterministic environments only.
#[derive(Debug, Clone)]
pub struct InteractiveScheduler {
    pub net: Arc<HybridNet>,
    pub mode: DecodeMode,
}

impl Scheduler for InteractiveScheduler {
    fn name(&self) -> &str {
        "hetgat-interactive"
    }

    fn schedule(&self, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<Schedule, SchedulerError> {
        interactive_schedule(&self.net, obs, self.mode, rng)
            .map(|r| r.schedule)
            .map_err(|e| to_scheduler_error(self.name(), e))
    }
}
