// Independent reference implementations used by the integration and
// acceptance tests. Nothing here calls the dispatcher under test.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use teamsched_core::{
    AgentKind, DurationMatrix, ExecutionTrace, Observation, Schedule, SchedulingProblem,
    WaitConstraint,
};

/// Random problem with integer durations, a few deadlines and acyclic waits
/// (edges only from lower to higher index).
pub fn random_problem<R: Rng>(rng: &mut R, num_tasks: usize, num_agents: usize) -> SchedulingProblem {
    let mut values = Vec::with_capacity(num_tasks * num_agents);
    for _ in 0..num_tasks * num_agents {
        values.push(rng.random_range(10..=40) as f64);
    }
    let mut deadlines = BTreeMap::new();
    for t in 0..num_tasks {
        if rng.random_bool(0.4) {
            deadlines.insert(t, rng.random_range(10..=(25 * num_tasks as u32).max(10)) as f64);
        }
    }
    let mut waits = Vec::new();
    for j in 1..num_tasks {
        for i in 0..j {
            if rng.random_bool(0.2) {
                waits.push(WaitConstraint { from: i, to: j, gap: rng.random_range(1..=10) as f64 });
            }
        }
    }
    SchedulingProblem {
        num_tasks,
        num_robots: num_agents,
        num_humans: 0,
        durations: DurationMatrix::from_row_major(num_tasks, num_agents, values).unwrap(),
        deadlines,
        waits,
    }
}

pub fn random_schedule<R: Rng>(rng: &mut R, num_tasks: usize, num_agents: usize) -> Schedule {
    let mut tasks: Vec<usize> = (0..num_tasks).collect();
    for i in (1..tasks.len()).rev() {
        tasks.swap(i, rng.random_range(0..=i));
    }
    Schedule::from_pairs(tasks.into_iter().map(|t| (t, rng.random_range(0..num_agents))))
}

pub fn observation_of(p: &SchedulingProblem) -> Observation {
    Observation {
        round: 0,
        num_robots: p.num_robots,
        num_humans: p.num_humans,
        estimated_durations: p.durations.clone(),
        deadlines: p.deadlines.clone(),
        waits: p.waits.clone(),
        agent_kinds: vec![AgentKind::Robot; p.num_agents()],
        stochastic: false,
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

/// Event-ordering oracle for a complete schedule. Enumerates every ordering
/// of the start events; an ordering is admissible when it respects each
/// agent's queue and every wait, and the start times it produces (each task
/// at the latest of its agent's release and its wait bounds) never go
/// backwards along the ordering. Returns the (start, finish) of every task
/// when an admissible ordering meets all deadlines and the schedule lists
/// every wait source before its target; `None` otherwise.
pub fn brute_force_dispatch(
    p: &SchedulingProblem,
    s: &Schedule,
    realized: &DurationMatrix,
) -> Option<BTreeMap<usize, (f64, f64)>> {
    let n = p.num_tasks;
    if s.len() != n {
        return None;
    }
    let mut position = vec![usize::MAX; n];
    let mut agent_of = vec![0; n];
    for (i, d) in s.iter().enumerate() {
        position[d.task] = i;
        agent_of[d.task] = d.agent;
    }
    if p.waits.iter().any(|w| position[w.from] > position[w.to]) {
        return None;
    }
    for order in permutations(n) {
        let mut started = vec![false; n];
        let mut times: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        let mut last_start = f64::NEG_INFINITY;
        let mut admissible = true;
        for &t in &order {
            let a = agent_of[t];
            // agent queue: all earlier tasks of this agent already started
            let queue_ok = s
                .iter()
                .filter(|d| d.agent == a && position[d.task] < position[t])
                .all(|d| started[d.task]);
            let waits_ok = p.waits.iter().filter(|w| w.to == t).all(|w| started[w.from]);
            if !queue_ok || !waits_ok {
                admissible = false;
                break;
            }
            let release = s
                .iter()
                .filter(|d| d.agent == a && position[d.task] < position[t])
                .map(|d| times[&d.task].1)
                .fold(0.0, f64::max);
            let bound = p
                .waits
                .iter()
                .filter(|w| w.to == t)
                .map(|w| times[&w.from].1 + w.gap)
                .fold(release, f64::max);
            if bound < last_start {
                admissible = false;
                break;
            }
            last_start = bound;
            started[t] = true;
            times.insert(t, (bound, bound + realized.get(t, a)));
        }
        if !admissible {
            continue;
        }
        let on_time = p.deadlines.iter().all(|(t, &d)| times[t].1 <= d);
        return on_time.then_some(times);
    }
    None
}

/// Lowest makespan over every complete schedule (all orders × all
/// assignments) that the brute-force oracle accepts.
pub fn exhaustive_best_makespan(p: &SchedulingProblem) -> Option<f64> {
    let n = p.num_tasks;
    let a = p.num_agents();
    let mut best: Option<f64> = None;
    for order in permutations(n) {
        for code in 0..a.pow(n as u32) {
            let mut c = code;
            let s = Schedule::from_pairs(order.iter().map(|&t| {
                let agent = c % a;
                c /= a;
                (t, agent)
            }));
            if let Some(times) = brute_force_dispatch(p, &s, &p.durations) {
                let m = times.values().map(|&(_, f)| f).fold(0.0, f64::max);
                best = Some(best.map_or(m, |b: f64| b.min(m)));
            }
        }
    }
    best
}

/// Round reward recomputed from the trace: executed tasks contribute minus
/// their duration; the infeasible tasks contribute `coeff` times the largest
/// single-agent total of their durations, negated.
pub fn recompute_reward(trace: &ExecutionTrace, realized: &DurationMatrix, coeff: f64) -> f64 {
    let mut executed = 0.0;
    for (&t, &a) in &trace.assignment {
        if trace.feasible_set.contains(&t) {
            executed -= realized.get(t, a);
        }
    }
    let mut worst_total = 0.0f64;
    for a in 0..realized.num_agents() {
        let total: f64 = trace.infeasible_set.iter().map(|&t| realized.get(t, a)).sum();
        worst_total = worst_total.max(total);
    }
    executed - coeff * worst_total
}
