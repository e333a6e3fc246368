//! Simple temporal networks and the earliest-start dispatcher.
//!
//! Encoding: an upper bound `X - Y <= c` is the arc `Y -> X` with weight `c`;
//! a lower bound `X - Y >= c` is the arc `X -> Y` with weight `-c`. A network
//! is consistent iff its distance graph has no negative cycle.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::ModelError;
use crate::model::{AgentId, DurationMatrix, ExecutionTrace, Schedule, SchedulingProblem, TaskId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StnNode {
    Origin,
    Start(TaskId),
    Finish(TaskId),
}

impl StnNode {
    pub fn index(self) -> usize {
        match self {
            StnNode::Origin => 0,
            StnNode::Start(t) => 1 + 2 * t,
            StnNode::Finish(t) => 2 + 2 * t,
        }
    }

    pub fn from_index(i: usize) -> Self {
        match i {
            0 => StnNode::Origin,
            i if i % 2 == 1 => StnNode::Start((i - 1) / 2),
            i => StnNode::Finish((i - 2) / 2),
        }
    }
}

impl fmt::Display for StnNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StnNode::Origin => write!(f, "z"),
            StnNode::Start(t) => write!(f, "s{t}"),
            StnNode::Finish(t) => write!(f, "f{t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub from: StnNode,
    pub to: StnNode,
    pub weight: f64,
}

/// Distance graph over the origin and every task's start/finish events.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DistanceGraph {
    num_tasks: usize,
    arcs: Vec<Arc>,
}

impl DistanceGraph {
    pub fn new(num_tasks: usize) -> Self {
        Self {
            num_tasks,
            arcs: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        1 + 2 * self.num_tasks
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn contains_arc(&self, from: StnNode, to: StnNode, weight: f64) -> bool {
        self.arcs
            .iter()
            .any(|a| a.from == from && a.to == to && a.weight == weight)
    }

    /// `x - y <= c`
    pub fn add_upper_bound(&mut self, x: StnNode, y: StnNode, c: f64) {
        self.arcs.push(Arc { from: y, to: x, weight: c });
    }

    /// `x - y >= c`
    pub fn add_lower_bound(&mut self, x: StnNode, y: StnNode, c: f64) {
        self.arcs.push(Arc { from: x, to: y, weight: -c });
    }
}

/// Builds the STN of a problem. When `schedule` is given, each scheduled task
/// gets duration arcs from its assigned agent's realized duration and
/// consecutive tasks on the same agent are sequenced; otherwise duration arcs
/// are omitted.
pub fn build_stn(
    p: &SchedulingProblem,
    realized: &DurationMatrix,
    schedule: Option<&Schedule>,
) -> DistanceGraph {
    use StnNode::*;
    let mut g = DistanceGraph::new(p.num_tasks);
    for t in 0..p.num_tasks {
        g.add_lower_bound(Start(t), Origin, 0.0);
    }
    for (&t, &d) in &p.deadlines {
        g.add_upper_bound(Finish(t), Origin, d);
    }
    for w in &p.waits {
        g.add_lower_bound(Start(w.to), Finish(w.from), w.gap);
    }
    if let Some(s) = schedule {
        let mut last_on_agent: BTreeMap<AgentId, TaskId> = BTreeMap::new();
        for d in s.iter() {
            let dur = realized.get(d.task, d.agent);
            g.add_upper_bound(Finish(d.task), Start(d.task), dur);
            g.add_lower_bound(Finish(d.task), Start(d.task), dur);
            if let Some(prev) = last_on_agent.insert(d.agent, d.task) {
                g.add_lower_bound(Start(d.task), Finish(prev), 0.0);
            }
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub enum Consistency {
    /// Shortest distances from a virtual source connected to every node.
    Consistent { potentials: Vec<f64> },
    /// A negative cycle, listed in arc order, with its total weight.
    Inconsistent { cycle: Vec<StnNode>, weight: f64 },
}

impl Consistency {
    pub fn is_consistent(&self) -> bool {
        matches!(self, Consistency::Consistent { .. })
    }
}

/// Label-correcting negative-cycle detection, O(V·E).
pub fn check_consistency(g: &DistanceGraph) -> Consistency {
    let n = g.num_nodes();
    let mut dist = vec![0.0f64; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let arcs: Vec<(usize, usize, f64)> = g
        .arcs
        .iter()
        .map(|a| (a.from.index(), a.to.index(), a.weight))
        .collect();
    let mut last_relaxed = None;
    for _ in 0..n {
        last_relaxed = None;
        for &(u, v, w) in &arcs {
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                pred[v] = Some(u);
                last_relaxed = Some(v);
            }
        }
        if last_relaxed.is_none() {
            return Consistency::Consistent { potentials: dist };
        }
    }
    let Some(mut v) = last_relaxed else {
        return Consistency::Consistent { potentials: dist };
    };
    // Walk back n steps to land on the cycle itself.
    for _ in 0..n {
        v = pred[v].expect("relaxed node has a predecessor");
    }
    let mut cycle = vec![v];
    let mut cur = pred[v].expect("cycle node has a predecessor");
    while cur != v {
        cycle.push(cur);
        cur = pred[cur].expect("cycle node has a predecessor");
    }
    cycle.reverse();
    let weight = cycle_weight(&arcs, &cycle);
    Consistency::Inconsistent {
        cycle: cycle.into_iter().map(StnNode::from_index).collect(),
        weight,
    }
}

fn cycle_weight(arcs: &[(usize, usize, f64)], cycle: &[usize]) -> f64 {
    (0..cycle.len())
        .map(|i| {
            let (u, v) = (cycle[i], cycle[(i + 1) % cycle.len()]);
            arcs.iter()
                .filter(|a| a.0 == u && a.1 == v)
                .map(|a| a.2)
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Earliest-start dispatch of a schedule.
///
/// Each agent runs its tasks in schedule order. A task starts at the later of
/// its agent's free time and every `finish(pred) + gap` bound. A task is
/// infeasible, and consumes no agent time, when a wait predecessor is not
/// already executed at its position in the sequence, or when its finish would
/// exceed its deadline. Tasks missing from the schedule are infeasible.
pub fn simulate_dispatch(
    p: &SchedulingProblem,
    s: &Schedule,
    realized: &DurationMatrix,
) -> Result<ExecutionTrace, ModelError> {
    let n = p.num_tasks;
    let num_agents = p.num_agents();
    if (realized.num_tasks(), realized.num_agents()) != (n, num_agents) {
        return Err(ModelError::MatrixShape {
            expected: (n, num_agents),
            found: (realized.num_tasks(), realized.num_agents()),
        });
    }
    s.check(n, num_agents)?;

    let mut preds: Vec<Vec<(TaskId, f64)>> = vec![Vec::new(); n];
    for w in &p.waits {
        preds[w.to].push((w.from, w.gap));
    }

    let mut finish: Vec<Option<f64>> = vec![None; n];
    let mut agent_free = vec![0.0f64; num_agents];
    let mut trace = ExecutionTrace {
        start_times: BTreeMap::new(),
        finish_times: BTreeMap::new(),
        assignment: BTreeMap::new(),
        feasible_set: BTreeSet::new(),
        infeasible_set: BTreeSet::new(),
        makespan: None,
    };

    for d in s.iter() {
        let mut start = Some(agent_free[d.agent]);
        for &(pred, gap) in &preds[d.task] {
            start = match (start, finish[pred]) {
                (Some(st), Some(f)) => Some(st.max(f + gap)),
                _ => None,
            };
        }
        let end = start.map(|st| (st, st + realized.get(d.task, d.agent)));
        match end {
            Some((st, fin)) if p.deadline(d.task).is_none_or(|dl| fin <= dl) => {
                finish[d.task] = Some(fin);
                agent_free[d.agent] = fin;
                trace.start_times.insert(d.task, st);
                trace.finish_times.insert(d.task, fin);
                trace.assignment.insert(d.task, d.agent);
                trace.feasible_set.insert(d.task);
            }
            _ => {
                trace.infeasible_set.insert(d.task);
            }
        }
    }
    for t in 0..n {
        if !trace.feasible_set.contains(&t) {
            trace.infeasible_set.insert(t);
        }
    }
    if trace.infeasible_set.is_empty() {
        trace.makespan = Some(trace.executed_makespan());
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WaitConstraint;
    use StnNode::*;

    fn problem(durs: &[&[f64]], deadlines: &[(usize, f64)], waits: &[(usize, usize, f64)]) -> SchedulingProblem {
        let n = durs.len();
        let a = durs.first().map_or(1, |r| r.len());
        SchedulingProblem {
            num_tasks: n,
            num_robots: a,
            num_humans: 0,
            durations: DurationMatrix::from_row_major(n, a, durs.concat()).unwrap(),
            deadlines: deadlines.iter().copied().collect(),
            waits: waits.iter().map(|&w| WaitConstraint::from(w)).collect(),
        }
    }

    #[test]
    fn empty_problem_has_only_origin() {
        let p = problem(&[], &[], &[]);
        let g = build_stn(&p, &p.durations, None);
        assert_eq!(g.num_nodes(), 1);
        assert!(g.arcs().is_empty());
        assert!(check_consistency(&g).is_consistent());
    }

    #[test]
    fn deadline_becomes_origin_to_finish_arc() {
        let p = problem(&[&[30.0]], &[(0, 50.0)], &[]);
        let g = build_stn(&p, &p.durations, None);
        assert!(g.contains_arc(Origin, Finish(0), 50.0));
    }

    #[test]
    fn wait_becomes_negative_start_to_finish_arc() {
        let p = problem(&[&[10.0], &[10.0]], &[], &[(0, 1, 5.0)]);
        let g = build_stn(&p, &p.durations, None);
        assert!(g.contains_arc(Start(1), Finish(0), -5.0));
    }

    #[test]
    fn deadline_shorter_than_duration_is_inconsistent() {
        let p = problem(&[&[30.0]], &[(0, 20.0)], &[]);
        let s = Schedule::from_pairs([(0, 0)]);
        let g = build_stn(&p, &p.durations, Some(&s));
        match check_consistency(&g) {
            Consistency::Inconsistent { cycle, weight } => {
                assert!(cycle.contains(&Start(0)) && cycle.contains(&Finish(0)));
                assert_eq!(weight, -10.0);
            }
            c => panic!("expected inconsistency, got {c:?}"),
        }
    }

    #[test]
    fn unconstrained_problem_is_consistent() {
        let p = problem(&[&[10.0, 20.0], &[30.0, 15.0], &[12.0, 40.0]], &[], &[]);
        let s = Schedule::from_pairs([(0, 0), (1, 1), (2, 0)]);
        assert!(check_consistency(&build_stn(&p, &p.durations, None)).is_consistent());
        assert!(check_consistency(&build_stn(&p, &p.durations, Some(&s))).is_consistent());
    }

    #[test]
    fn wait_chain_past_deadline_is_inconsistent() {
        // earliest: f0 = 10, s1 = 20, f1 = 30 > 25
        let p = problem(&[&[10.0, 10.0], &[10.0, 10.0]], &[(1, 25.0)], &[(0, 1, 10.0)]);
        let s = Schedule::from_pairs([(0, 0), (1, 1)]);
        match check_consistency(&build_stn(&p, &p.durations, Some(&s))) {
            Consistency::Inconsistent { weight, .. } => assert_eq!(weight, -5.0),
            c => panic!("expected inconsistency, got {c:?}"),
        }
        let relaxed = problem(&[&[10.0, 10.0], &[10.0, 10.0]], &[(1, 30.0)], &[(0, 1, 10.0)]);
        assert!(check_consistency(&build_stn(&relaxed, &relaxed.durations, Some(&s))).is_consistent());
    }

    #[test]
    fn serial_execution_on_one_agent() {
        let p = problem(&[&[10.0, 10.0], &[20.0, 20.0]], &[], &[]);
        let t = simulate_dispatch(&p, &Schedule::from_pairs([(0, 0), (1, 0)]), &p.durations).unwrap();
        assert_eq!(t.start_times, BTreeMap::from([(0, 0.0), (1, 10.0)]));
        assert_eq!(t.finish_times, BTreeMap::from([(0, 10.0), (1, 30.0)]));
        assert_eq!(t.makespan, Some(30.0));
    }

    #[test]
    fn parallel_execution_on_two_agents() {
        let p = problem(&[&[10.0, 10.0], &[20.0, 20.0]], &[], &[]);
        let t = simulate_dispatch(&p, &Schedule::from_pairs([(0, 0), (1, 1)]), &p.durations).unwrap();
        assert_eq!(t.makespan, Some(20.0));
    }

    #[test]
    fn predecessor_later_in_sequence_is_infeasible() {
        let p = problem(&[&[10.0, 10.0], &[10.0, 10.0]], &[], &[(0, 1, 3.0)]);
        let t = simulate_dispatch(&p, &Schedule::from_pairs([(1, 0), (0, 1)]), &p.durations).unwrap();
        assert_eq!(t.infeasible_set, BTreeSet::from([1]));
        assert_eq!(t.feasible_set, BTreeSet::from([0]));
        assert_eq!(t.start_times[&0], 0.0);
        assert_eq!(t.makespan, None);
    }

    #[test]
    fn missed_deadline_consumes_no_agent_time() {
        let p = problem(&[&[30.0], &[10.0], &[10.0]], &[(1, 40.0)], &[]);
        let t = simulate_dispatch(&p, &Schedule::from_pairs([(0, 0), (1, 0), (2, 0)]), &p.durations).unwrap();
        assert_eq!(t.finish_times[&1], 40.0);
        let tight = problem(&[&[30.0], &[10.0], &[10.0]], &[(1, 39.0)], &[]);
        let t = simulate_dispatch(&tight, &Schedule::from_pairs([(0, 0), (1, 0), (2, 0)]), &tight.durations).unwrap();
        assert!(t.infeasible_set.contains(&1));
        assert_eq!(t.start_times[&2], 30.0);
    }

    #[test]
    fn wait_delays_start_across_agents() {
        let p = problem(&[&[10.0, 10.0], &[5.0, 5.0]], &[], &[(0, 1, 7.0)]);
        let t = simulate_dispatch(&p, &Schedule::from_pairs([(0, 0), (1, 1)]), &p.durations).unwrap();
        assert_eq!(t.start_times[&1], 17.0);
        assert_eq!(t.makespan, Some(22.0));
    }

    #[test]
    fn unscheduled_tasks_are_infeasible_and_duplicates_rejected() {
        let p = problem(&[&[10.0], &[10.0]], &[], &[]);
        let t = simulate_dispatch(&p, &Schedule::from_pairs([(1, 0)]), &p.durations).unwrap();
        assert_eq!(t.infeasible_set, BTreeSet::from([0]));
        assert!(simulate_dispatch(&p, &Schedule::from_pairs([(1, 0), (1, 0)]), &p.durations).is_err());
    }

    #[test]
    fn node_index_round_trips() {
        for i in 0..21 {
            assert_eq!(StnNode::from_index(i).index(), i);
        }
    }
}
