//! Multi-round scheduling environment.
//!
//! Each `step` executes one complete round schedule: durations are realized,
//! the schedule is dispatched, the round reward is computed and human
//! experience advances. Observations expose exact robot durations and
//! estimator output for humans.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::EnvError;
use crate::model::{
    validate_problem, AgentId, AgentKind, DurationMatrix, ExecutionTrace, ProblemInstance,
    Schedule, SchedulingProblem, TaskId, WaitConstraint,
};
use crate::temporal::simulate_dispatch;
use crate::workers::{
    estimate_duration, record_execution, CurveSampling, EstimatorConfig, EstimatorState,
    HumanCurve, Team,
};

/// How the executed part of a round is scored. The infeasible-task penalty
/// is the same for both.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Sum of `-duration` over feasible tasks.
    #[default]
    TotalDuration,
    /// Negative latest finish time over executed tasks, which rewards
    /// running tasks in parallel.
    Makespan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub rounds: usize,
    /// Multiplier on the worst-case penalty of infeasible tasks.
    pub infeasible_coeff: f64,
    /// Stochastic human execution and noisy estimates; otherwise both exact.
    pub stochastic: bool,
    pub estimator: EstimatorConfig,
    /// Used only when an instance carries no curves.
    pub curve_sampling: CurveSampling,
    pub reward: RewardKind,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            rounds: 4,
            infeasible_coeff: 2.0,
            stochastic: false,
            estimator: EstimatorConfig::default(),
            curve_sampling: CurveSampling::default(),
            reward: RewardKind::default(),
        }
    }
}

impl EnvConfig {
    pub fn deterministic() -> Self {
        Self::default()
    }

    pub fn stochastic() -> Self {
        Self {
            stochastic: true,
            ..Self::default()
        }
    }

    fn effective_estimator(&self) -> EstimatorConfig {
        if self.stochastic {
            self.estimator
        } else {
            EstimatorConfig::exact()
        }
    }
}

/// What a scheduler sees at the start of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub round: usize,
    pub num_robots: usize,
    pub num_humans: usize,
    pub estimated_durations: DurationMatrix,
    pub deadlines: BTreeMap<TaskId, f64>,
    pub waits: Vec<WaitConstraint>,
    pub agent_kinds: Vec<AgentKind>,
    pub stochastic: bool,
}

impl Observation {
    pub fn num_tasks(&self) -> usize {
        self.estimated_durations.num_tasks()
    }

    pub fn num_agents(&self) -> usize {
        self.agent_kinds.len()
    }

    /// The problem as the scheduler believes it, with estimated durations.
    pub fn estimated_problem(&self) -> SchedulingProblem {
        SchedulingProblem {
            num_tasks: self.num_tasks(),
            num_robots: self.num_robots,
            num_humans: self.num_humans,
            durations: self.estimated_durations.clone(),
            deadlines: self.deadlines.clone(),
            waits: self.waits.clone(),
        }
    }

    /// Dispatches `s` against the estimated durations.
    pub fn estimate_trace(&self, s: &Schedule) -> Result<ExecutionTrace, crate::ModelError> {
        let p = self.estimated_problem();
        simulate_dispatch(&p, s, &p.durations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub feasible_term: f64,
    pub infeasible_term: f64,
    pub total: f64,
}

/// Per-task reward `R(task, agent) = -duration`.
pub fn negative_duration(_task: TaskId, _agent: AgentId, duration: f64) -> f64 {
    -duration
}

/// Round reward with the default per-task reward `-duration`.
pub fn round_reward(trace: &ExecutionTrace, realized: &DurationMatrix, coeff: f64) -> f64 {
    round_reward_with(trace, realized, coeff, negative_duration).total
}

/// Round reward under `kind`.
pub fn reward_for(kind: RewardKind, trace: &ExecutionTrace, realized: &DurationMatrix, coeff: f64) -> f64 {
    let r = round_reward_with(trace, realized, coeff, negative_duration);
    match kind {
        RewardKind::TotalDuration => r.total,
        RewardKind::Makespan => r.infeasible_term - trace.executed_makespan(),
    }
}

/// Sum of per-task rewards over executed tasks, plus `coeff` times the
/// worst single-agent sum of per-task rewards over the infeasible tasks.
pub fn round_reward_with<F>(
    trace: &ExecutionTrace,
    realized: &DurationMatrix,
    coeff: f64,
    per_task: F,
) -> RewardBreakdown
where
    F: Fn(TaskId, AgentId, f64) -> f64,
{
    let feasible_term: f64 = trace
        .feasible_set
        .iter()
        .map(|&t| {
            let a = trace.assignment[&t];
            per_task(t, a, realized.get(t, a))
        })
        .sum();
    let infeasible_term = if trace.infeasible_set.is_empty() {
        0.0
    } else {
        let worst = (0..realized.num_agents())
            .map(|a| {
                trace
                    .infeasible_set
                    .iter()
                    .map(|&t| per_task(t, a, realized.get(t, a)))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        coeff * worst
    };
    RewardBreakdown {
        feasible_term,
        infeasible_term,
        total: feasible_term + infeasible_term,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: ExecutionTrace,
    pub realized: DurationMatrix,
}

const CURVE_STREAM: u64 = 0;
const OBSERVATION_STREAM: u64 = 1;
const REALIZATION_STREAM: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Live state of one episode.
#[derive(Debug, Clone)]
pub struct EnvState {
    pub problem: SchedulingProblem,
    pub team: Team,
    pub estimator: EstimatorState,
    pub round: usize,
    obs_rng: ChaCha8Rng,
    real_rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct MultiRoundEnv {
    config: EnvConfig,
    state: Option<EnvState>,
}

impl MultiRoundEnv {
    pub fn new(config: EnvConfig) -> Self {
        Self { config, state: None }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    pub fn reset(&mut self, instance: &ProblemInstance, seed: u64) -> Result<Observation, EnvError> {
        let problem = &instance.problem;
        let violations = validate_problem(problem);
        if !violations.is_empty() {
            return Err(EnvError::InvalidProblem(violations));
        }
        let team = match &instance.human_curves {
            Some(curves) => {
                if curves.len() != problem.num_humans
                    || curves.iter().any(|c| c.len() != problem.num_tasks)
                {
                    return Err(EnvError::CurveShape {
                        expected: problem.num_humans,
                        found: curves.len(),
                        tasks: problem.num_tasks,
                    });
                }
                Team::new(
                    problem,
                    curves.iter().cloned().map(HumanCurve::new).collect(),
                )
            }
            None => Team::sample(
                problem,
                &self.config.curve_sampling,
                &mut stream_rng(seed, CURVE_STREAM),
            ),
        };
        self.state = Some(EnvState {
            problem: problem.clone(),
            team,
            estimator: EstimatorState::default(),
            round: 0,
            obs_rng: stream_rng(seed, OBSERVATION_STREAM),
            real_rng: stream_rng(seed, REALIZATION_STREAM),
        });
        Ok(self.observe())
    }

    fn observe(&mut self) -> Observation {
        let stochastic = self.config.stochastic;
        let est_cfg = self.config.effective_estimator();
        let st = self.state.as_mut().expect("observe after reset");
        let p = &st.problem;
        let mut est = DurationMatrix::filled(p.num_tasks, p.num_agents(), 0.0);
        for t in 0..p.num_tasks {
            for r in 0..p.num_robots {
                est.set(t, r, st.team.robots.duration(r, t));
            }
            for (h, curve) in st.team.humans.iter().enumerate() {
                let e = estimate_duration(&st.estimator, &est_cfg, curve, h, t, &mut st.obs_rng);
                est.set(t, p.num_robots + h, e);
            }
        }
        Observation {
            round: st.round,
            num_robots: p.num_robots,
            num_humans: p.num_humans,
            estimated_durations: est,
            deadlines: p.deadlines.clone(),
            waits: p.waits.clone(),
            agent_kinds: p.agent_kinds(),
            stochastic,
        }
    }

    pub fn is_done(&self) -> bool {
        self.state
            .as_ref()
            .is_some_and(|s| s.round >= self.config.rounds)
    }

    pub fn step(&mut self, schedule: &Schedule) -> Result<StepOutcome, EnvError> {
        let rounds = self.config.rounds;
        let coeff = self.config.infeasible_coeff;
        let stochastic = self.config.stochastic;
        let st = self.state.as_mut().ok_or(EnvError::NotReset)?;
        if st.round >= rounds {
            return Err(EnvError::Finished(rounds));
        }
        let realized = st.team.realize(st.problem.num_tasks, stochastic, &mut st.real_rng);
        let info = simulate_dispatch(&st.problem, schedule, &realized)?;
        let reward = reward_for(self.config.reward, &info, &realized, coeff);
        for (h, t, d) in st.team.advance(&info, &realized) {
            record_execution(&mut st.estimator, h, t, d);
        }
        st.round += 1;
        let done = st.round == rounds;
        let observation = self.observe();
        Ok(StepOutcome {
            observation,
            reward,
            done,
            info,
            realized,
        })
    }
}
