//! Schedulers looked up by name.

use std::collections::BTreeMap;
use std::sync::Arc;

use teamsched_core::baselines::{EdfScheduler, GaScheduler};
use teamsched_core::Scheduler;
use teamsched_policy::{DecodeMode, Decoding, HybridNet, HybridNetScheduler, InteractiveScheduler};

use crate::error::BenchError;

/// Every method the harness knows, in presentation order.
pub const METHODS: [&str; 4] = ["edf", "ga", "hybridnet", "hetgat-interactive"];

pub fn needs_checkpoint(method: &str) -> bool {
    matches!(method, "hybridnet" | "hetgat-interactive")
}

pub fn supports_stochastic(method: &str) -> bool {
    method != "hetgat-interactive"
}

#[derive(Default)]
pub struct Registry {
    schedulers: BTreeMap<String, Box<dyn Scheduler>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The heuristic baselines, plus both learned methods when a policy is
    /// given. `batch` is the number of samples hybridnet keeps the best of.
    pub fn standard(policy: Option<Arc<HybridNet>>, batch: usize) -> Self {
        let mut r = Self::new();
        r.register(Box::new(EdfScheduler));
        r.register(Box::new(GaScheduler::default()));
        if let Some(net) = policy {
            r.register(Box::new(HybridNetScheduler {
                net: net.clone(),
                decoding: Decoding::BestOf(batch),
            }));
            r.register(Box::new(InteractiveScheduler {
                net,
                mode: DecodeMode::Greedy,
            }));
        }
        r
    }

    /// Adds `s` under its own name, returning any scheduler it replaces.
    pub fn register(&mut self, s: Box<dyn Scheduler>) -> Option<Box<dyn Scheduler>> {
        self.schedulers.insert(s.name().to_string(), s)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.schedulers.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<&dyn Scheduler, BenchError> {
        if let Some(s) = self.schedulers.get(name) {
            return Ok(s.as_ref());
        }
        if needs_checkpoint(name) {
            return Err(BenchError::MissingCheckpoint { method: name.into() });
        }
        Err(BenchError::UnknownMethod {
            name: name.into(),
            known: self.names().collect::<Vec<_>>().join(", "),
        })
    }
}
