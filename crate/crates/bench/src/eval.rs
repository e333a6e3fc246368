//! Multi-round evaluation of one scheduler over a problem set.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use teamsched_core::{
    DurationMatrix, EnvConfig, ExecutionTrace, MultiRoundEnv, ProblemInstance, Scheduler, SchedulerError,
};

use crate::error::BenchError;
use crate::registry::supports_stochastic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub env: EnvConfig,
    /// Drives environment seeds and scheduler randomness. Every method sees
    /// the same environment seeds for the same value.
    pub seed: u64,
}

impl EvalConfig {
    pub fn new(stochastic: bool, seed: u64) -> Self {
        let env = if stochastic {
            EnvConfig::stochastic()
        } else {
            EnvConfig::deterministic()
        };
        Self { env, seed }
    }
}

/// Serialized worst case: every task on its slowest agent, one after another.
pub fn worst_case_makespan(realized: &DurationMatrix) -> f64 {
    (0..realized.num_tasks()).map(|t| realized.row_max(t)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub problem: usize,
    pub round: usize,
    /// Dispatch against the realized durations.
    pub trace: ExecutionTrace,
    pub worst_case: f64,
}

impl RoundRecord {
    pub fn feasible(&self) -> bool {
        self.trace.is_feasible()
    }

    /// Realized makespan when feasible, the serialized worst case otherwise.
    pub fn adjusted_makespan(&self) -> f64 {
        match self.trace.makespan {
            Some(m) if self.feasible() => m,
            _ => self.worst_case,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub method: String,
    pub config: EvalConfig,
    pub rounds: Vec<RoundRecord>,
    /// Scheduling wall-clock seconds per problem, summed over its rounds.
    pub runtimes: Vec<f64>,
}

impl EvalResult {
    /// Fraction of round schedules that were fully feasible.
    pub fn feasibility(&self) -> f64 {
        if self.rounds.is_empty() {
            return 0.0;
        }
        self.rounds.iter().filter(|r| r.feasible()).count() as f64 / self.rounds.len() as f64
    }

    /// Mean adjusted makespan over every round of every problem.
    pub fn adjusted_makespan(&self) -> f64 {
        if self.rounds.is_empty() {
            return 0.0;
        }
        self.rounds.iter().map(RoundRecord::adjusted_makespan).sum::<f64>() / self.rounds.len() as f64
    }

    pub fn mean_runtime(&self) -> f64 {
        if self.runtimes.is_empty() {
            return 0.0;
        }
        self.runtimes.iter().sum::<f64>() / self.runtimes.len() as f64
    }

    /// Everything except wall-clock timings, for reproducibility checks.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.method == other.method && self.config == other.config && self.rounds == other.rounds
    }
}

/// Runs every problem for `cfg.env.rounds` rounds with `scheduler`.
pub fn evaluate(
    scheduler: &dyn Scheduler,
    problems: &[ProblemInstance],
    cfg: &EvalConfig,
) -> Result<EvalResult, BenchError> {
    let method = scheduler.name().to_string();
    if cfg.env.stochastic && !supports_stochastic(&method) {
        return Err(BenchError::IncompatibleMode { method });
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rounds = Vec::with_capacity(problems.len() * cfg.env.rounds);
    let mut runtimes = Vec::with_capacity(problems.len());
    for (problem, instance) in problems.iter().enumerate() {
        let env_seed: u64 = master.random();
        let mut rng = ChaCha8Rng::from_rng(&mut master);
        let mut env = MultiRoundEnv::new(cfg.env);
        let env_err = |source| BenchError::Env { problem, source };
        let mut obs = env.reset(instance, env_seed).map_err(env_err)?;
        let mut elapsed = 0.0;
        while !env.is_done() {
            let round = obs.round;
            let start = Instant::now();
            let schedule = scheduler.schedule(&obs, &mut rng).map_err(|source| match source {
                SchedulerError::RequiresDeterministic { method } => BenchError::IncompatibleMode { method },
                source => BenchError::Scheduler { problem, round, source },
            })?;
            elapsed += start.elapsed().as_secs_f64();
            let out = env.step(&schedule).map_err(env_err)?;
            rounds.push(RoundRecord {
                problem,
                round,
                worst_case: worst_case_makespan(&out.realized),
                trace: out.info,
            });
            obs = out.observation;
        }
        runtimes.push(elapsed);
    }
    Ok(EvalResult {
        method,
        config: *cfg,
        rounds,
        runtimes,
    })
}
