//! Problem and schedule vocabulary shared by every other module.
//!
//! A [`SchedulingProblem`] is one round's input: tasks, a team of robots and
//! humans, a task×agent duration matrix, absolute deadlines on task finish
//! times and minimum waits between task pairs. Agents are indexed robots
//! first, then humans.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::workers::CurveParams;

pub type TaskId = usize;
pub type AgentId = usize;

/// Lower clamp bound on any task duration.
pub const MIN_DURATION: f64 = 10.0;
/// Upper clamp bound on any task duration.
pub const MAX_DURATION: f64 = 100.0;
/// Wait gaps are drawn from this closed range.
pub const MIN_WAIT: f64 = 1.0;
pub const MAX_WAIT: f64 = 10.0;

pub fn clamp_duration(value: f64) -> f64 {
    value.clamp(MIN_DURATION, MAX_DURATION)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Robot,
    Human,
}

/// Dense task×agent matrix of time values, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationMatrix {
    num_tasks: usize,
    num_agents: usize,
    values: Vec<f64>,
}

impl DurationMatrix {
    pub fn filled(num_tasks: usize, num_agents: usize, value: f64) -> Self {
        Self {
            num_tasks,
            num_agents,
            values: vec![value; num_tasks * num_agents],
        }
    }

    pub fn from_row_major(
        num_tasks: usize,
        num_agents: usize,
        values: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if values.len() != num_tasks * num_agents {
            return Err(ModelError::DurationShape {
                expected: num_tasks * num_agents,
                found: values.len(),
            });
        }
        Ok(Self {
            num_tasks,
            num_agents,
            values,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    #[inline]
    pub fn get(&self, task: TaskId, agent: AgentId) -> f64 {
        self.values[task * self.num_agents + agent]
    }

    #[inline]
    pub fn set(&mut self, task: TaskId, agent: AgentId, value: f64) {
        self.values[task * self.num_agents + agent] = value;
    }

    pub fn row(&self, task: TaskId) -> &[f64] {
        &self.values[task * self.num_agents..(task + 1) * self.num_agents]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Largest value in a task's row (the worst-case agent for that task).
    pub fn row_max(&self, task: TaskId) -> f64 {
        self.row(task).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn row_min(&self, task: TaskId) -> f64 {
        self.row(task).iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Minimum separation `start(to) >= finish(from) + gap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(TaskId, TaskId, f64)", into = "(TaskId, TaskId, f64)")]
pub struct WaitConstraint {
    pub from: TaskId,
    pub to: TaskId,
    pub gap: f64,
}

impl From<(TaskId, TaskId, f64)> for WaitConstraint {
    fn from((from, to, gap): (TaskId, TaskId, f64)) -> Self {
        Self { from, to, gap }
    }
}

impl From<WaitConstraint> for (TaskId, TaskId, f64) {
    fn from(w: WaitConstraint) -> Self {
        (w.from, w.to, w.gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRepr", into = "ProblemRepr")]
pub struct SchedulingProblem {
    pub num_tasks: usize,
    pub num_robots: usize,
    pub num_humans: usize,
    /// For human columns this is the round-0 mean duration.
    pub durations: DurationMatrix,
    /// Absolute bound on task finish time, measured from round start.
    pub deadlines: BTreeMap<TaskId, f64>,
    pub waits: Vec<WaitConstraint>,
}

/// On-disk layout: durations flattened row-major.
#[derive(Serialize, Deserialize)]
struct ProblemRepr {
    num_tasks: usize,
    num_robots: usize,
    num_humans: usize,
    durations: Vec<f64>,
    #[serde(default)]
    deadlines: BTreeMap<TaskId, f64>,
    #[serde(default)]
    waits: Vec<WaitConstraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    human_curves: Option<Vec<Vec<CurveParams>>>,
}

impl TryFrom<ProblemRepr> for SchedulingProblem {
    type Error = ModelError;

    fn try_from(r: ProblemRepr) -> Result<Self, Self::Error> {
        let durations =
            DurationMatrix::from_row_major(r.num_tasks, r.num_robots + r.num_humans, r.durations)?;
        Ok(Self {
            num_tasks: r.num_tasks,
            num_robots: r.num_robots,
            num_humans: r.num_humans,
            durations,
            deadlines: r.deadlines,
            waits: r.waits,
        })
    }
}

impl From<SchedulingProblem> for ProblemRepr {
    fn from(p: SchedulingProblem) -> Self {
        Self {
            num_tasks: p.num_tasks,
            num_robots: p.num_robots,
            num_humans: p.num_humans,
            durations: p.durations.into_vec(),
            deadlines: p.deadlines,
            waits: p.waits,
            human_curves: None,
        }
    }
}

/// A problem plus, optionally, the true learning curves of its humans
/// (`human_curves[human][task]`). This is the dataset file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRepr", into = "ProblemRepr")]
pub struct ProblemInstance {
    pub problem: SchedulingProblem,
    pub human_curves: Option<Vec<Vec<CurveParams>>>,
}

impl From<SchedulingProblem> for ProblemInstance {
    fn from(problem: SchedulingProblem) -> Self {
        Self {
            problem,
            human_curves: None,
        }
    }
}

impl TryFrom<ProblemRepr> for ProblemInstance {
    type Error = ModelError;

    fn try_from(mut r: ProblemRepr) -> Result<Self, Self::Error> {
        let human_curves = r.human_curves.take();
        Ok(Self {
            problem: SchedulingProblem::try_from(r)?,
            human_curves,
        })
    }
}

impl From<ProblemInstance> for ProblemRepr {
    fn from(i: ProblemInstance) -> Self {
        let mut r = ProblemRepr::from(i.problem);
        r.human_curves = i.human_curves;
        r
    }
}

impl ProblemInstance {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

impl SchedulingProblem {
    pub fn num_agents(&self) -> usize {
        self.num_robots + self.num_humans
    }

    pub fn agent_kind(&self, agent: AgentId) -> AgentKind {
        if agent < self.num_robots {
            AgentKind::Robot
        } else {
            AgentKind::Human
        }
    }

    pub fn agent_kinds(&self) -> Vec<AgentKind> {
        (0..self.num_agents()).map(|a| self.agent_kind(a)).collect()
    }

    /// Index of a human agent among humans, if `agent` is a human.
    pub fn human_index(&self, agent: AgentId) -> Option<usize> {
        agent.checked_sub(self.num_robots).filter(|h| *h < self.num_humans)
    }

    pub fn deadline(&self, task: TaskId) -> Option<f64> {
        self.deadlines.get(&task).copied()
    }

    /// Wait constraints whose successor is `task`.
    pub fn predecessors(&self, task: TaskId) -> impl Iterator<Item = &WaitConstraint> {
        self.waits.iter().filter(move |w| w.to == task)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("problem serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(TaskId, AgentId)", into = "(TaskId, AgentId)")]
pub struct ScheduleDecision {
    pub task: TaskId,
    pub agent: AgentId,
}

impl From<(TaskId, AgentId)> for ScheduleDecision {
    fn from((task, agent): (TaskId, AgentId)) -> Self {
        Self { task, agent }
    }
}

impl From<ScheduleDecision> for (TaskId, AgentId) {
    fn from(d: ScheduleDecision) -> Self {
        (d.task, d.agent)
    }
}

/// Ordered task-agent pairs, executed in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule {
    pub decisions: Vec<ScheduleDecision>,
}

impl Schedule {
    pub fn new(decisions: Vec<ScheduleDecision>) -> Self {
        Self { decisions }
    }

    pub fn from_pairs<I: IntoIterator<Item = (TaskId, AgentId)>>(pairs: I) -> Self {
        Self {
            decisions: pairs.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn push(&mut self, task: TaskId, agent: AgentId) {
        self.decisions.push(ScheduleDecision { task, agent });
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScheduleDecision> {
        self.decisions.iter()
    }

    /// Checks that ids are in range and no task repeats.
    pub fn check(&self, num_tasks: usize, num_agents: usize) -> Result<(), ModelError> {
        let mut seen = vec![false; num_tasks];
        for d in &self.decisions {
            if d.task >= num_tasks {
                return Err(ModelError::TaskOutOfRange { task: d.task, num_tasks });
            }
            if d.agent >= num_agents {
                return Err(ModelError::AgentOutOfRange { agent: d.agent, num_agents });
            }
            if std::mem::replace(&mut seen[d.task], true) {
                return Err(ModelError::DuplicateTask(d.task));
            }
        }
        Ok(())
    }

    pub fn is_complete(&self, num_tasks: usize) -> bool {
        self.decisions.len() == num_tasks
            && self.decisions.iter().map(|d| d.task).collect::<BTreeSet<_>>().len() == num_tasks
    }
}

/// Outcome of dispatching one schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub start_times: BTreeMap<TaskId, f64>,
    pub finish_times: BTreeMap<TaskId, f64>,
    /// Agent each executed task ran on.
    pub assignment: BTreeMap<TaskId, AgentId>,
    pub feasible_set: BTreeSet<TaskId>,
    pub infeasible_set: BTreeSet<TaskId>,
    /// Defined only when every task executed.
    pub makespan: Option<f64>,
}

impl ExecutionTrace {
    pub fn is_feasible(&self) -> bool {
        self.infeasible_set.is_empty()
    }

    /// Latest finish over executed tasks; 0 when nothing ran.
    pub fn executed_makespan(&self) -> f64 {
        self.finish_times.values().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DurationOutOfRange { task: TaskId, agent: AgentId, value: f64 },
    NoAgents,
    DeadlineUnknownTask { task: TaskId },
    DeadlineOutOfRange { task: TaskId, value: f64, max: f64 },
    WaitUnknownTask { from: TaskId, to: TaskId },
    SelfWait { task: TaskId },
    WaitOutOfRange { from: TaskId, to: TaskId, gap: f64 },
    DuplicateWait { from: TaskId, to: TaskId },
    WaitCycle { tasks: Vec<TaskId> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DurationOutOfRange { task, agent, value } => write!(
                f,
                "duration out of [{MIN_DURATION},{MAX_DURATION}] at task {task}, agent {agent}: {value}"
            ),
            Violation::NoAgents => write!(f, "problem has tasks but no agents"),
            Violation::DeadlineUnknownTask { task } => write!(f, "deadline on unknown task {task}"),
            Violation::DeadlineOutOfRange { task, value, max } => {
                write!(f, "deadline of task {task} out of [1,{max}]: {value}")
            }
            Violation::WaitUnknownTask { from, to } => {
                write!(f, "wait ({from},{to}) references an unknown task")
            }
            Violation::SelfWait { task } => write!(f, "self-wait on task {task}"),
            Violation::WaitOutOfRange { from, to, gap } => write!(
                f,
                "wait ({from},{to}) out of [{MIN_WAIT},{MAX_WAIT}]: {gap}"
            ),
            Violation::DuplicateWait { from, to } => write!(f, "duplicate wait ({from},{to})"),
            Violation::WaitCycle { tasks } => write!(f, "wait cycle through tasks {tasks:?}"),
        }
    }
}

/// Collects every invariant violation; an empty list means the problem is valid.
pub fn validate_problem(p: &SchedulingProblem) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = p.num_tasks;
    if n > 0 && p.num_agents() == 0 {
        out.push(Violation::NoAgents);
    }
    for task in 0..n {
        for agent in 0..p.num_agents() {
            let value = p.durations.get(task, agent);
            if !(MIN_DURATION..=MAX_DURATION).contains(&value) {
                out.push(Violation::DurationOutOfRange { task, agent, value });
            }
        }
    }
    let max_deadline = 5.0 * n as f64;
    for (&task, &value) in &p.deadlines {
        if task >= n {
            out.push(Violation::DeadlineUnknownTask { task });
        } else if !(1.0..=max_deadline).contains(&value) {
            out.push(Violation::DeadlineOutOfRange { task, value, max: max_deadline });
        }
    }
    let mut seen = BTreeSet::new();
    for w in &p.waits {
        if w.from >= n || w.to >= n {
            out.push(Violation::WaitUnknownTask { from: w.from, to: w.to });
            continue;
        }
        if w.from == w.to {
            out.push(Violation::SelfWait { task: w.from });
        }
        if !(MIN_WAIT..=MAX_WAIT).contains(&w.gap) {
            out.push(Violation::WaitOutOfRange { from: w.from, to: w.to, gap: w.gap });
        }
        if !seen.insert((w.from, w.to)) {
            out.push(Violation::DuplicateWait { from: w.from, to: w.to });
        }
    }
    if let Some(tasks) = find_wait_cycle(n, &p.waits) {
        out.push(Violation::WaitCycle { tasks });
    }
    out
}

/// Finds a directed cycle of length ≥ 2 in the wait relation (self-waits are
/// reported separately).
fn find_wait_cycle(n: usize, waits: &[WaitConstraint]) -> Option<Vec<TaskId>> {
    let mut adj = vec![Vec::new(); n];
    for w in waits {
        if w.from < n && w.to < n && w.from != w.to {
            adj[w.from].push(w.to);
        }
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut color = vec![0u8; n];
    let mut parent = vec![usize::MAX; n];
    for root in 0..n {
        if color[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        color[root] = 1;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if let Some(&succ) = adj[node].get(*next) {
                *next += 1;
                match color[succ] {
                    0 => {
                        color[succ] = 1;
                        parent[succ] = node;
                        stack.push((succ, 0));
                    }
                    1 => {
                        let mut cycle = vec![node];
                        let mut cur = node;
                        while cur != succ {
                            cur = parent[cur];
                            cycle.push(cur);
                        }
                        cycle.reverse();
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                color[node] = 2;
                stack.pop();
            }
        }
    }
    None
}
