//! Heterogeneous graph view of an observation.
//!
//! Three node types (tasks, agents, one state node) and eleven typed
//! relations. Temporal relations mirror the wait arcs of the temporal network
//! in both directions; every task and agent feeds the state node and the
//! state node broadcasts back.

use std::sync::Arc;

use teamsched_autodiff::{EdgeIndex, Tensor};
use teamsched_core::{AgentKind, Observation, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeType {
    Task,
    Agent,
    State,
}

impl NodeType {
    pub const ALL: [NodeType; 3] = [NodeType::Task, NodeType::Agent, NodeType::State];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn feature_dim(self) -> usize {
        match self {
            NodeType::Task => TASK_FEATURES,
            NodeType::Agent => AGENT_FEATURES,
            NodeType::State => STATE_FEATURES,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeType::Task => "task",
            NodeType::Agent => "agent",
            NodeType::State => "state",
        }
    }
}

pub const TASK_FEATURES: usize = 9;
pub const AGENT_FEATURES: usize = 6;
pub const STATE_FEATURES: usize = 6;

/// Scale applied to durations, deadlines and gaps.
const TIME_SCALE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeType {
    /// `i → j` for each wait `(i, j, gap)`; feature `gap`.
    Precedes,
    /// `j → i` for each wait `(i, j, gap)`; feature `gap`.
    Follows,
    TaskSelf,
    /// Every agent to every task; features `[estimated duration, assigned]`.
    Capable,
    CapableRev,
    AgentSelf,
    TaskToState,
    AgentToState,
    StateSelf,
    StateToTask,
    StateToAgent,
}

impl EdgeType {
    pub const ALL: [EdgeType; 11] = [
        EdgeType::Precedes,
        EdgeType::Follows,
        EdgeType::TaskSelf,
        EdgeType::Capable,
        EdgeType::CapableRev,
        EdgeType::AgentSelf,
        EdgeType::TaskToState,
        EdgeType::AgentToState,
        EdgeType::StateSelf,
        EdgeType::StateToTask,
        EdgeType::StateToAgent,
    ];

    pub fn endpoints(self) -> (NodeType, NodeType) {
        use NodeType::*;
        match self {
            EdgeType::Precedes | EdgeType::Follows | EdgeType::TaskSelf => (Task, Task),
            EdgeType::Capable => (Agent, Task),
            EdgeType::CapableRev => (Task, Agent),
            EdgeType::AgentSelf => (Agent, Agent),
            EdgeType::TaskToState => (Task, State),
            EdgeType::AgentToState => (Agent, State),
            EdgeType::StateSelf => (State, State),
            EdgeType::StateToTask => (State, Task),
            EdgeType::StateToAgent => (State, Agent),
        }
    }

    pub fn feature_dim(self) -> usize {
        match self {
            EdgeType::Precedes | EdgeType::Follows => 1,
            EdgeType::Capable | EdgeType::CapableRev => 2,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::Precedes => "precedes",
            EdgeType::Follows => "follows",
            EdgeType::TaskSelf => "task_self",
            EdgeType::Capable => "capable",
            EdgeType::CapableRev => "capable_rev",
            EdgeType::AgentSelf => "agent_self",
            EdgeType::TaskToState => "task_state",
            EdgeType::AgentToState => "agent_state",
            EdgeType::StateSelf => "state_self",
            EdgeType::StateToTask => "state_task",
            EdgeType::StateToAgent => "state_agent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub kind: EdgeType,
    pub edges: Arc<EdgeIndex>,
    /// `edges × feature_dim`, present for featured relations.
    pub features: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HetGraph {
    /// Indexed by [`NodeType::index`].
    pub node_features: [Tensor; 3],
    /// Indexed like [`EdgeType::ALL`].
    pub relations: Vec<Relation>,
}

/// Decisions already committed, for the interactive variant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Commitments {
    pub schedule: Schedule,
    /// Time at which each agent becomes free under the committed prefix.
    pub agent_ready: Vec<f64>,
}

impl HetGraph {
    pub fn num_nodes(&self, t: NodeType) -> usize {
        self.node_features[t.index()].rows()
    }

    pub fn relation(&self, kind: EdgeType) -> &Relation {
        &self.relations[kind as usize]
    }

    pub fn num_edges(&self) -> usize {
        self.relations.iter().map(|r| r.edges.len()).sum()
    }
}

pub fn build_het_graph(obs: &Observation) -> HetGraph {
    build_with_commitments(obs, &Commitments::default())
}

pub fn build_with_commitments(obs: &Observation, done: &Commitments) -> HetGraph {
    let n = obs.num_tasks();
    let a = obs.num_agents();
    let d = &obs.estimated_durations;
    let mut assigned_to = vec![None; n];
    for dec in done.schedule.iter() {
        assigned_to[dec.task] = Some(dec.agent);
    }
    let mut in_deg = vec![0.0; n];
    let mut out_deg = vec![0.0; n];
    for w in &obs.waits {
        out_deg[w.from] += 1.0;
        in_deg[w.to] += 1.0;
    }

    // Deadlines grow with the task count, so they are measured against the
    // makespan of a perfectly balanced fastest-agent assignment.
    let ideal = ((0..n).map(|t| d.row_min(t)).sum::<f64>() / a.max(1) as f64).max(1.0);
    let tasks = Tensor::from_fn(n, TASK_FEATURES, |t, f| {
        let row = d.row(t);
        let min = d.row_min(t);
        let deadline = obs.deadlines.get(&t).copied();
        match f {
            0 => row.iter().sum::<f64>() / a as f64 / TIME_SCALE,
            1 => min / TIME_SCALE,
            2 => d.row_max(t) / TIME_SCALE,
            3 => f64::from(u8::from(deadline.is_some())),
            4 => deadline.map_or(0.0, |dl| dl / ideal),
            5 => deadline.map_or(0.0, |dl| (dl - min) / ideal),
            6 => in_deg[t],
            7 => out_deg[t],
            _ => f64::from(u8::from(assigned_to[t].is_some())),
        }
    });
    let agents = Tensor::from_fn(a, AGENT_FEATURES, |j, f| {
        let col = (0..n).map(|t| d.get(t, j));
        match f {
            0 => f64::from(u8::from(obs.agent_kinds[j] == AgentKind::Robot)),
            1 => f64::from(u8::from(obs.agent_kinds[j] == AgentKind::Human)),
            2 => col.sum::<f64>() / n.max(1) as f64 / TIME_SCALE,
            3 => col.fold(f64::INFINITY, f64::min).min(1e9) / TIME_SCALE,
            4 => done.agent_ready.get(j).copied().unwrap_or(0.0) / TIME_SCALE,
            _ => {
                let count = assigned_to.iter().filter(|x| **x == Some(j)).count();
                count as f64 / n.max(1) as f64
            }
        }
    });
    let nf = n.max(1) as f64;
    let mean_duration = (0..n).map(|t| d.row(t).iter().sum::<f64>()).sum::<f64>() / (n * a).max(1) as f64;
    let state = Tensor::row_vector(vec![
        mean_duration / TIME_SCALE,
        ideal / (n as f64 * TIME_SCALE).max(1.0),
        obs.round as f64 / 4.0,
        obs.deadlines.len() as f64 / nf,
        obs.waits.len() as f64 / nf,
        (n - done.schedule.len()) as f64 / nf,
    ]);

    let relations = EdgeType::ALL
        .iter()
        .map(|&kind| {
            let (pairs, features): (Vec<(usize, usize)>, Option<Vec<f64>>) = match kind {
                EdgeType::Precedes => (
                    obs.waits.iter().map(|w| (w.from, w.to)).collect(),
                    Some(obs.waits.iter().map(|w| w.gap / TIME_SCALE).collect()),
                ),
                EdgeType::Follows => (
                    obs.waits.iter().map(|w| (w.to, w.from)).collect(),
                    Some(obs.waits.iter().map(|w| w.gap / TIME_SCALE).collect()),
                ),
                EdgeType::TaskSelf => ((0..n).map(|t| (t, t)).collect(), None),
                EdgeType::Capable | EdgeType::CapableRev => {
                    let mut pairs = Vec::with_capacity(n * a);
                    let mut feats = Vec::with_capacity(2 * n * a);
                    for j in 0..a {
                        for t in 0..n {
                            pairs.push(if kind == EdgeType::Capable { (j, t) } else { (t, j) });
                            feats.push(d.get(t, j) / TIME_SCALE);
                            feats.push(f64::from(u8::from(assigned_to[t] == Some(j))));
                        }
                    }
                    (pairs, Some(feats))
                }
                EdgeType::AgentSelf => ((0..a).map(|j| (j, j)).collect(), None),
                EdgeType::TaskToState => ((0..n).map(|t| (t, 0)).collect(), None),
                EdgeType::AgentToState => ((0..a).map(|j| (j, 0)).collect(), None),
                EdgeType::StateSelf => (vec![(0, 0)], None),
                EdgeType::StateToTask => ((0..n).map(|t| (0, t)).collect(), None),
                EdgeType::StateToAgent => ((0..a).map(|j| (0, j)).collect(), None),
            };
            let (src, dst) = kind.endpoints();
            let count = |t: NodeType| match t {
                NodeType::Task => n,
                NodeType::Agent => a,
                NodeType::State => 1,
            };
            let edges = EdgeIndex::new(count(src), count(dst), &pairs).expect("edge endpoints in range");
            let features = features.map(|f| {
                Tensor::new(pairs.len(), kind.feature_dim(), f).expect("one feature row per edge")
            });
            Relation {
                kind,
                edges: Arc::new(edges),
                features,
            }
        })
        .collect();

    HetGraph {
        node_features: [tasks, agents, state],
        relations,
    }
}
