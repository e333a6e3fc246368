//! Robot and human duration models plus the learning-curve estimator.
//!
//! Robots have fixed durations. A human's mean duration on a task follows
//! `c + k·exp(-beta·i)` where `i` counts previous feasible executions of that
//! task; stochastic sampling perturbs `c`, `k` and `beta` with normal noise.
//! Every emitted duration is clamped to `[MIN_DURATION, MAX_DURATION]`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{
    clamp_duration, AgentId, DurationMatrix, ExecutionTrace, SchedulingProblem, TaskId,
};

/// Learning-curve parameters of one human on one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    /// Asymptotic duration.
    pub c: f64,
    /// Learnable component.
    pub k: f64,
    /// Learning rate per iteration.
    pub beta: f64,
    pub sd_c: f64,
    pub sd_k: f64,
    pub sd_beta: f64,
}

impl CurveParams {
    pub fn mean_at(&self, iteration: u32) -> f64 {
        self.c + self.k * (-self.beta * iteration as f64).exp()
    }
}

/// Ranges used to build a curve from a round-0 duration `d0`:
/// `c = rho·d0`, `k = (1 - rho)·d0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSampling {
    pub rho: (f64, f64),
    pub beta: (f64, f64),
    /// Noise standard deviations as fractions of the parameter values.
    pub relative_sd: f64,
}

impl Default for CurveSampling {
    fn default() -> Self {
        Self {
            rho: (0.3, 0.7),
            beta: (0.2, 0.8),
            relative_sd: 0.1,
        }
    }
}

impl CurveSampling {
    pub fn derive<R: Rng + ?Sized>(&self, d0: f64, rng: &mut R) -> CurveParams {
        let rho = rng.random_range(self.rho.0..=self.rho.1);
        let beta = rng.random_range(self.beta.0..=self.beta.1);
        let c = rho * d0;
        let k = (1.0 - rho) * d0;
        CurveParams {
            c,
            k,
            beta,
            sd_c: self.relative_sd * c,
            sd_k: self.relative_sd * k,
            sd_beta: self.relative_sd * beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanCurve {
    pub tasks: Vec<CurveParams>,
    /// Completed feasible executions per task.
    pub experience: Vec<u32>,
}

impl HumanCurve {
    pub fn new(tasks: Vec<CurveParams>) -> Self {
        let experience = vec![0; tasks.len()];
        Self { tasks, experience }
    }

    /// Expected duration of the curve's next execution, clamped.
    pub fn current_mean(&self, task: TaskId) -> f64 {
        clamp_duration(human_mean_duration(self, task, self.experience[task]))
    }
}

/// Unclamped mean duration at the given iteration count.
pub fn human_mean_duration(h: &HumanCurve, task: TaskId, iteration: u32) -> f64 {
    h.tasks[task].mean_at(iteration)
}

/// Draws one realized duration at the curve's current experience. With
/// `stochastic == false` the noise is zero and this equals the clamped mean.
pub fn sample_human_duration<R: Rng + ?Sized>(
    h: &HumanCurve,
    task: TaskId,
    stochastic: bool,
    rng: &mut R,
) -> f64 {
    let p = &h.tasks[task];
    if !stochastic {
        return h.current_mean(task);
    }
    let c = gaussian(p.c, p.sd_c, rng);
    let k = gaussian(p.k, p.sd_k, rng).max(0.0);
    let beta = gaussian(p.beta, p.sd_beta, rng).max(0.0);
    let perturbed = CurveParams { c, k, beta, ..*p };
    clamp_duration(perturbed.mean_at(h.experience[task]))
}

fn gaussian<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    Normal::new(mean, sd.max(0.0))
        .expect("finite normal parameters")
        .sample(rng)
}

/// Fixed per-task durations of each robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    /// `durations[robot][task]`
    pub durations: Vec<Vec<f64>>,
}

impl RobotModel {
    pub fn from_problem(p: &SchedulingProblem) -> Self {
        Self {
            durations: (0..p.num_robots)
                .map(|r| (0..p.num_tasks).map(|t| p.durations.get(t, r)).collect())
                .collect(),
        }
    }

    pub fn duration(&self, robot: usize, task: TaskId) -> f64 {
        self.durations[robot][task]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Noise standard deviation before any repetition.
    pub sigma0: f64,
    /// Exponential decay of the noise per repetition.
    pub lambda: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            sigma0: 10.0,
            lambda: 0.5,
        }
    }
}

impl EstimatorConfig {
    pub fn exact() -> Self {
        Self {
            sigma0: 0.0,
            lambda: 0.5,
        }
    }

    pub fn noise_sd(&self, repetitions: u32) -> f64 {
        self.sigma0 * (-self.lambda * repetitions as f64).exp()
    }
}

/// Observed durations per (human, task) pair from earlier rounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorState {
    observations: BTreeMap<(usize, TaskId), Vec<f64>>,
}

impl EstimatorState {
    pub fn repetitions(&self, human: usize, task: TaskId) -> u32 {
        self.observations
            .get(&(human, task))
            .map_or(0, |v| v.len() as u32)
    }

    pub fn observations(&self, human: usize, task: TaskId) -> &[f64] {
        self.observations
            .get(&(human, task))
            .map_or(&[], Vec::as_slice)
    }
}

/// Noisy estimate of a human's next duration: the true clamped mean plus
/// `N(0, sigma0·exp(-lambda·r))`, clamped.
pub fn estimate_duration<R: Rng + ?Sized>(
    e: &EstimatorState,
    cfg: &EstimatorConfig,
    truth: &HumanCurve,
    human: usize,
    task: TaskId,
    rng: &mut R,
) -> f64 {
    let mean = truth.current_mean(task);
    let sd = cfg.noise_sd(e.repetitions(human, task));
    if sd == 0.0 {
        return mean;
    }
    clamp_duration(gaussian(mean, sd, rng))
}

pub fn record_execution(e: &mut EstimatorState, human: usize, task: TaskId, observed: f64) {
    e.observations.entry((human, task)).or_default().push(observed);
}

/// The full team: robots from the problem matrix, humans from curves.
#[derive(Debug, Clone, PartialEq)]
pub struct Team {
    pub robots: RobotModel,
    pub humans: Vec<HumanCurve>,
}

impl Team {
    pub fn new(p: &SchedulingProblem, humans: Vec<HumanCurve>) -> Self {
        Self {
            robots: RobotModel::from_problem(p),
            humans,
        }
    }

    /// Builds curves from the problem's round-0 human durations.
    pub fn sample<R: Rng + ?Sized>(p: &SchedulingProblem, cfg: &CurveSampling, rng: &mut R) -> Self {
        let humans = (0..p.num_humans)
            .map(|h| {
                let agent = p.num_robots + h;
                HumanCurve::new(
                    (0..p.num_tasks)
                        .map(|t| cfg.derive(p.durations.get(t, agent), rng))
                        .collect(),
                )
            })
            .collect();
        Self::new(p, humans)
    }

    pub fn num_robots(&self) -> usize {
        self.robots.durations.len()
    }

    /// Draws realized durations for every (task, agent) pair, row-major.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        num_tasks: usize,
        stochastic: bool,
        rng: &mut R,
    ) -> DurationMatrix {
        let nr = self.num_robots();
        let mut m = DurationMatrix::filled(num_tasks, nr + self.humans.len(), 0.0);
        for t in 0..num_tasks {
            for r in 0..nr {
                m.set(t, r, self.robots.duration(r, t));
            }
            for (h, curve) in self.humans.iter().enumerate() {
                m.set(t, nr + h, sample_human_duration(curve, t, stochastic, rng));
            }
        }
        m
    }

    /// Clamped expected durations at the current experience.
    pub fn true_means(&self, num_tasks: usize) -> DurationMatrix {
        let nr = self.num_robots();
        let mut m = DurationMatrix::filled(num_tasks, nr + self.humans.len(), 0.0);
        for t in 0..num_tasks {
            for r in 0..nr {
                m.set(t, r, self.robots.duration(r, t));
            }
            for (h, curve) in self.humans.iter().enumerate() {
                m.set(t, nr + h, curve.current_mean(t));
            }
        }
        m
    }

    /// Advances experience for human-executed feasible tasks and returns the
    /// (human, task, realized duration) records.
    pub fn advance(
        &mut self,
        trace: &ExecutionTrace,
        realized: &DurationMatrix,
    ) -> Vec<(usize, TaskId, f64)> {
        let nr = self.num_robots();
        let mut out = Vec::new();
        for &task in &trace.feasible_set {
            let agent: AgentId = trace.assignment[&task];
            if let Some(h) = agent.checked_sub(nr) {
                self.humans[h].experience[task] += 1;
                out.push((h, task, realized.get(task, agent)));
            }
        }
        out
    }
}
