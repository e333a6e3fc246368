//! Schedule generation: one encode followed by LSTM-propagated decisions,
//! best-of-batch sampling, and the re-encoding interactive variant.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use teamsched_autodiff::{Graph, Tensor, Var};
use teamsched_core::{estimated_score, Observation, Schedule};

use crate::error::PolicyError;
use crate::hetgraph::{build_het_graph, build_with_commitments, Commitments};
use crate::net::{lstm_step, Encoded, HybridNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Sample,
    Greedy,
}

/// How each decision is taken.
#[derive(Debug, Clone, Copy)]
pub enum Decisions<'s> {
    Policy(DecodeMode),
    /// Replays a given complete schedule (teacher forcing).
    Forced(&'s Schedule),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub agent: usize,
    pub task: usize,
    pub agent_log_prob: f64,
    pub task_log_prob: f64,
    pub agent_probs: Vec<f64>,
    /// Indexed by task id; scheduled tasks carry exactly zero.
    pub task_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub schedule: Schedule,
    pub log_prob: f64,
    pub steps: Vec<StepRecord>,
}

/// A rollout whose log-probability is still on the tape.
#[derive(Debug, Clone)]
pub struct TapedRollout {
    pub schedule: Schedule,
    pub log_prob: Var,
    pub steps: Vec<StepRecord>,
}

impl TapedRollout {
    fn detach(self, g: &Graph<'_>) -> Rollout {
        Rollout {
            schedule: self.schedule,
            log_prob: g.value(self.log_prob).item(),
            steps: self.steps,
        }
    }
}

enum Choice {
    Mode(DecodeMode),
    Index(usize),
}

fn choose(log_probs: &Tensor, choice: Choice, rng: &mut ChaCha8Rng) -> usize {
    let row = log_probs.row(0);
    match choice {
        Choice::Index(i) => i,
        Choice::Mode(DecodeMode::Greedy) => {
            let mut best = 0;
            for (i, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = i;
                }
            }
            best
        }
        Choice::Mode(DecodeMode::Sample) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &x) in row.iter().enumerate() {
                acc += x.exp();
                if u < acc {
                    return i;
                }
            }
            row.len() - 1
        }
    }
}

/// A selector decision: chosen index, its log-probability on the tape and
/// the full distribution.
#[derive(Debug, Clone)]
pub struct Selection {
    pub index: usize,
    pub log_prob: Var,
    pub probs: Vec<f64>,
}

fn select(g: &mut Graph<'_>, logits: Var, choice: Choice, rng: &mut ChaCha8Rng) -> Result<Selection, PolicyError> {
    let lsm = g.log_softmax_rows(logits);
    let index = choose(g.value(lsm), choice, rng);
    let log_prob = g.pick(lsm, 0, index)?;
    let probs = g.value(lsm).data().iter().map(|x| x.exp()).collect();
    Ok(Selection { index, log_prob, probs })
}

/// Chooses an agent from `agents` (`agents × lstm` rows).
pub fn select_agent(
    net: &HybridNet,
    g: &mut Graph<'_>,
    agents: Var,
    state_h: Var,
    mode: DecodeMode,
    rng: &mut ChaCha8Rng,
) -> Result<Selection, PolicyError> {
    let logits = net.agent_logits(g, agents, state_h)?;
    select(g, logits, Choice::Mode(mode), rng)
}

/// Chooses among the unscheduled tasks `pool`; `index` is a position in `pool`.
pub fn select_task(
    net: &HybridNet,
    g: &mut Graph<'_>,
    task_scores: Var,
    pool: &[usize],
    agent_h: Var,
    state_h: Var,
    mode: DecodeMode,
    rng: &mut ChaCha8Rng,
) -> Result<Selection, PolicyError> {
    if pool.is_empty() {
        return Err(PolicyError::EmptyPool);
    }
    let logits = net.task_logits(g, task_scores, pool, agent_h, state_h)?;
    select(g, logits, Choice::Mode(mode), rng)
}

fn full_task_probs(n: usize, pool: &[usize], probs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (&t, &p) in pool.iter().zip(probs) {
        out[t] = p;
    }
    out
}

/// Builds a complete schedule from encoder outputs without re-encoding.
pub fn decode(
    net: &HybridNet,
    g: &mut Graph<'_>,
    enc: &Encoded,
    obs: &Observation,
    decisions: Decisions<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<TapedRollout, PolicyError> {
    let n = obs.num_tasks();
    let num_agents = obs.num_agents();
    if let Decisions::Forced(s) = decisions {
        s.check(n, num_agents)?;
        if !s.is_complete(n) {
            return Err(PolicyError::InvalidForcedSchedule(format!("{} of {n} tasks", s.len())));
        }
    }
    let mut pool: Vec<usize> = (0..n).collect();
    let mut agent_h = enc.agent_h.clone();
    let mut agent_c = enc.agent_c.clone();
    let (mut state_h, mut state_c) = (enc.state_h, enc.state_c);
    let mut terms = Vec::with_capacity(2 * n);
    let mut schedule = Schedule::default();
    let mut steps = Vec::with_capacity(n);

    for step in 0..n {
        let (agent_choice, forced_task) = match decisions {
            Decisions::Policy(m) => (Choice::Mode(m), None),
            Decisions::Forced(s) => {
                let d = s.decisions[step];
                (Choice::Index(d.agent), Some(d.task))
            }
        };
        let agents = g.concat_rows(&agent_h)?;
        let logits = net.agent_logits(g, agents, state_h)?;
        let a = select(g, logits, agent_choice, rng)?;

        let task_choice = match (decisions, forced_task) {
            (Decisions::Policy(m), _) => Choice::Mode(m),
            (_, Some(t)) => Choice::Index(pool.iter().position(|&x| x == t).expect("checked complete")),
            (_, None) => unreachable!(),
        };
        let logits = net.task_logits(g, enc.task_scores, &pool, agent_h[a.index], state_h)?;
        let t = select(g, logits, task_choice, rng)?;
        let task = pool[t.index];

        steps.push(StepRecord {
            agent: a.index,
            task,
            agent_log_prob: g.value(a.log_prob).item(),
            task_log_prob: g.value(t.log_prob).item(),
            agent_probs: a.probs,
            task_probs: full_task_probs(n, &pool, &t.probs),
        });
        pool.remove(t.index);
        schedule.push(task, a.index);
        terms.push(a.log_prob);
        terms.push(t.log_prob);

        if !pool.is_empty() {
            let te = g.gather_rows(enc.task, &[task])?;
            let ae = g.gather_rows(enc.agent, &[a.index])?;
            let x = g.concat_cols(&[te, ae])?;
            let (h, c) = lstm_step(g, &net.agent_lstm, agent_h[a.index], agent_c[a.index], x)?;
            agent_h[a.index] = h;
            agent_c[a.index] = c;
            let (h, c) = lstm_step(g, &net.state_lstm, state_h, state_c, x)?;
            state_h = h;
            state_c = c;
        }
    }
    let log_prob = if terms.is_empty() { g.scalar(0.0) } else { g.add_all(&terms)? };
    Ok(TapedRollout {
        schedule,
        log_prob,
        steps,
    })
}

/// Encodes once and decodes one complete schedule.
pub fn generate_schedule(
    net: &HybridNet,
    obs: &Observation,
    mode: DecodeMode,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout, PolicyError> {
    let mut g = Graph::with_params(&net.params);
    let enc = net.encode(&mut g, &build_het_graph(obs))?;
    Ok(decode(net, &mut g, &enc, obs, Decisions::Policy(mode), rng)?.detach(&g))
}

/// Log-probability of producing exactly `schedule`.
pub fn schedule_log_prob(net: &HybridNet, obs: &Observation, schedule: &Schedule) -> Result<Rollout, PolicyError> {
    let mut g = Graph::with_params(&net.params);
    let enc = net.encode(&mut g, &build_het_graph(obs))?;
    let mut unused = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    Ok(decode(net, &mut g, &enc, obs, Decisions::Forced(schedule), &mut unused)?.detach(&g))
}

/// Samples `batch` schedules from one encode and keeps the best by estimated
/// feasible count, then estimated makespan. Ties keep the earliest sample.
pub fn sample_best(
    net: &HybridNet,
    obs: &Observation,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Schedule, PolicyError> {
    let mut g = Graph::with_params(&net.params);
    let enc = net.encode(&mut g, &build_het_graph(obs))?;
    let mark = g.len();
    let mut best: Option<(Schedule, teamsched_core::ScheduleScore)> = None;
    for _ in 0..batch.max(1) {
        let r = decode(net, &mut g, &enc, obs, Decisions::Policy(DecodeMode::Sample), rng)?;
        g.truncate(mark);
        let score = estimated_score(obs, &r.schedule).map_err(|e| match e {
            teamsched_core::SchedulerError::Model(m) => PolicyError::Model(m),
            other => PolicyError::InvalidForcedSchedule(other.to_string()),
        })?;
        if best.as_ref().is_none_or(|(_, b)| score.rank(b).is_lt()) {
            best = Some((r.schedule, score));
        }
    }
    Ok(best.expect("at least one sample").0)
}

/// Re-encodes a graph reflecting the committed prefix before every decision.
/// Only meaningful when estimated durations are exact.
pub fn interactive_schedule(
    net: &HybridNet,
    obs: &Observation,
    mode: DecodeMode,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout, PolicyError> {
    if obs.stochastic {
        return Err(PolicyError::RequiresDeterministic);
    }
    let n = obs.num_tasks();
    let mut committed = Commitments {
        schedule: Schedule::default(),
        agent_ready: vec![0.0; obs.num_agents()],
    };
    let mut pool: Vec<usize> = (0..n).collect();
    let mut steps = Vec::with_capacity(n);
    let mut log_prob = 0.0;
    for _ in 0..n {
        let hg = build_with_commitments(obs, &committed);
        let mut g = Graph::with_params(&net.params);
        let enc = net.encode(&mut g, &hg)?;
        let agents = g.concat_rows(&enc.agent_h)?;
        let a = select_agent(net, &mut g, agents, enc.state_h, mode, rng)?;
        let t = select_task(net, &mut g, enc.task_scores, &pool, enc.agent_h[a.index], enc.state_h, mode, rng)?;
        let task = pool[t.index];
        let (la, lt) = (g.value(a.log_prob).item(), g.value(t.log_prob).item());
        log_prob += la + lt;
        steps.push(StepRecord {
            agent: a.index,
            task,
            agent_log_prob: la,
            task_log_prob: lt,
            agent_probs: a.probs,
            task_probs: full_task_probs(n, &pool, &t.probs),
        });
        pool.remove(t.index);
        committed.schedule.push(task, a.index);

        let trace = obs.estimate_trace(&committed.schedule)?;
        for (j, ready) in committed.agent_ready.iter_mut().enumerate() {
            *ready = trace
                .finish_times
                .iter()
                .filter(|(t, _)| trace.assignment.get(t) == Some(&j))
                .map(|(_, &f)| f)
                .fold(0.0, f64::max);
        }
    }
    Ok(Rollout {
        schedule: committed.schedule,
        log_prob,
        steps,
    })
}
