//! Parameters and building blocks of the scheduling network: the
//! heterogeneous attention encoder, the two LSTM propagators and the agent
//! and task selectors.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use teamsched_autodiff::{Checkpoint, Graph, ParamId, ParamStore, ShapeError, Tensor, Var};

use crate::error::PolicyError;
use crate::hetgraph::{EdgeType, HetGraph, NodeType};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Width of every encoder output.
    pub hidden: usize,
    pub heads: usize,
    /// Cell size of both LSTMs.
    pub lstm: usize,
    pub selector_hidden: usize,
    pub attention_slope: f64,
    pub init_seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            heads: 8,
            lstm: 32,
            selector_hidden: 32,
            attention_slope: 0.2,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RelationParams {
    msg: ParamId,
    edge: Option<ParamId>,
    attn: ParamId,
    dst: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerParams {
    relations: Vec<RelationParams>,
    bias: [ParamId; 3],
    head_dim: usize,
    /// Heads are concatenated (and followed by ELU) or averaged.
    concat: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: store.add_uniform(format!("{name}.weight"), input, output, input, rng),
            bias: store.add_uniform(format!("{name}.bias"), 1, output, input, rng),
        }
    }

    pub fn apply(&self, g: &mut Graph<'_>, x: Var) -> Result<Var, ShapeError> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

/// Gate layout `[input, forget, candidate, output]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmCell {
    pub input_weight: ParamId,
    pub hidden_weight: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    /// Uniform fan-in initialization with the forget-gate bias set to one.
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = input + hidden;
        let input_weight = store.add_uniform(format!("{name}.input_weight"), input, 4 * hidden, fan_in, rng);
        let hidden_weight = store.add_uniform(format!("{name}.hidden_weight"), hidden, 4 * hidden, fan_in, rng);
        let bias = store.add_uniform(format!("{name}.bias"), 1, 4 * hidden, fan_in, rng);
        let b = store.get_mut(bias);
        for k in hidden..2 * hidden {
            b.data_mut()[k] = 1.0;
        }
        Self {
            input_weight,
            hidden_weight,
            bias,
            hidden,
        }
    }
}

/// One LSTM step on `1×hidden` state rows.
pub fn lstm_step(g: &mut Graph<'_>, cell: &LstmCell, h: Var, c: Var, x: Var) -> Result<(Var, Var), ShapeError> {
    let wx = g.param(cell.input_weight);
    let wh = g.param(cell.hidden_weight);
    let b = g.param(cell.bias);
    let gx = g.matmul(x, wx)?;
    let gh = g.matmul(h, wh)?;
    let sum = g.add(gx, gh)?;
    let gates = g.add_row(sum, b)?;
    let k = cell.hidden;
    let i = g.slice_cols(gates, 0, k)?;
    let i = g.sigmoid(i);
    let f = g.slice_cols(gates, k, k)?;
    let f = g.sigmoid(f);
    let cand = g.slice_cols(gates, 2 * k, k)?;
    let cand = g.tanh(cand);
    let o = g.slice_cols(gates, 3 * k, k)?;
    let o = g.sigmoid(o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AgentSelector {
    agent: ParamId,
    state: ParamId,
    bias: ParamId,
    out: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TaskSelector {
    task: ParamId,
    agent: ParamId,
    state: ParamId,
    bias: ParamId,
    out: ParamId,
}

/// Encoder outputs plus everything the decoder precomputes from them.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// `tasks × hidden`.
    pub task: Var,
    /// `agents × hidden`.
    pub agent: Var,
    /// `1 × hidden`.
    pub state: Var,
    /// Task block of the task selector's first layer, `tasks × selector_hidden`.
    pub task_scores: Var,
    pub agent_h: Vec<Var>,
    pub agent_c: Vec<Var>,
    pub state_h: Var,
    pub state_c: Var,
    /// Attention output of every layer and relation, `None` for relations
    /// without edges.
    pub attention: Vec<Vec<Option<Var>>>,
}

/// The scheduling network and its parameters.
#[derive(Debug)]
pub struct HybridNet {
    pub config: PolicyConfig,
    pub params: ParamStore,
    layers: Vec<LayerParams>,
    pub agent_lstm: LstmCell,
    pub state_lstm: LstmCell,
    agent_h0: Linear,
    agent_c0: Linear,
    state_h0: Linear,
    state_c0: Linear,
    agent_selector: AgentSelector,
    task_selector: TaskSelector,
    encodes: AtomicUsize,
}

impl Clone for HybridNet {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            params: self.params.clone(),
            layers: self.layers.clone(),
            agent_lstm: self.agent_lstm,
            state_lstm: self.state_lstm,
            agent_h0: self.agent_h0,
            agent_c0: self.agent_c0,
            state_h0: self.state_h0,
            state_c0: self.state_c0,
            agent_selector: self.agent_selector,
            task_selector: self.task_selector,
            encodes: AtomicUsize::new(0),
        }
    }
}

const CHECKPOINT_KIND: &str = "hybridnet";

impl HybridNet {
    pub fn new(config: PolicyConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let h = config.hidden;
        let heads = config.heads;
        assert!(heads > 0 && h.is_multiple_of(heads), "heads must divide the hidden width");

        let mut layers = Vec::new();
        for (l, concat) in [true, true, false].into_iter().enumerate() {
            let head_dim = if concat { h / heads } else { h };
            let width = heads * head_dim;
            let in_dim = |t: NodeType| if l == 0 { t.feature_dim() } else { h };
            let relations = EdgeType::ALL
                .iter()
                .map(|&kind| {
                    let (src, dst) = kind.endpoints();
                    let name = format!("encoder.{l}.{}", kind.name());
                    let msg = store.add_uniform(format!("{name}.msg"), in_dim(src), width, in_dim(src), &mut rng);
                    let edge = (kind.feature_dim() > 0).then(|| {
                        let f = kind.feature_dim();
                        store.add_uniform(format!("{name}.edge"), f, width, f, &mut rng)
                    });
                    let attn = store.add_uniform(format!("{name}.attn"), 1, width, head_dim, &mut rng);
                    let dst = store.add_uniform(format!("{name}.dst"), in_dim(dst), heads, in_dim(dst), &mut rng);
                    RelationParams { msg, edge, attn, dst }
                })
                .collect();
            let bias = NodeType::ALL.map(|t| {
                let out = if concat { width } else { h };
                store.add(format!("encoder.{l}.{}.bias", t.name()), Tensor::zeros(1, out))
            });
            layers.push(LayerParams {
                relations,
                bias,
                head_dim,
                concat,
            });
        }

        let lstm_in = 2 * h;
        let agent_lstm = LstmCell::new(&mut store, "agent_lstm", lstm_in, config.lstm, &mut rng);
        let state_lstm = LstmCell::new(&mut store, "state_lstm", lstm_in, config.lstm, &mut rng);
        let agent_h0 = Linear::new(&mut store, "agent_init.h", h, config.lstm, &mut rng);
        let agent_c0 = Linear::new(&mut store, "agent_init.c", h, config.lstm, &mut rng);
        let state_h0 = Linear::new(&mut store, "state_init.h", h, config.lstm, &mut rng);
        let state_c0 = Linear::new(&mut store, "state_init.c", h, config.lstm, &mut rng);

        let s = config.selector_hidden;
        let l = config.lstm;
        let agent_selector = AgentSelector {
            agent: store.add_uniform("agent_selector.agent", l, s, 2 * l, &mut rng),
            state: store.add_uniform("agent_selector.state", l, s, 2 * l, &mut rng),
            bias: store.add_uniform("agent_selector.bias", 1, s, 2 * l, &mut rng),
            out: store.add_uniform("agent_selector.out", s, 1, s, &mut rng),
        };
        let task_fan = h + 2 * l;
        let task_selector = TaskSelector {
            task: store.add_uniform("task_selector.task", h, s, task_fan, &mut rng),
            agent: store.add_uniform("task_selector.agent", l, s, task_fan, &mut rng),
            state: store.add_uniform("task_selector.state", l, s, task_fan, &mut rng),
            bias: store.add_uniform("task_selector.bias", 1, s, task_fan, &mut rng),
            out: store.add_uniform("task_selector.out", s, 1, s, &mut rng),
        };

        Self {
            config,
            params: store,
            layers,
            agent_lstm,
            state_lstm,
            agent_h0,
            agent_c0,
            state_h0,
            state_c0,
            agent_selector,
            task_selector,
            encodes: AtomicUsize::new(0),
        }
    }

    /// Number of [`HybridNet::encode`] calls so far.
    pub fn encode_count(&self) -> usize {
        self.encodes.load(Ordering::Relaxed)
    }

    pub fn reset_encode_count(&self) {
        self.encodes.store(0, Ordering::Relaxed);
    }

    /// Runs the three attention layers. `g` must read `params` (or a store
    /// with the same layout).
    pub fn encode(&self, g: &mut Graph<'_>, graph: &HetGraph) -> Result<Encoded, ShapeError> {
        self.encodes.fetch_add(1, Ordering::Relaxed);
        let mut x: [Var; 3] = [
            g.constant(graph.node_features[0].clone()),
            g.constant(graph.node_features[1].clone()),
            g.constant(graph.node_features[2].clone()),
        ];
        let heads = self.config.heads;
        let mut attention = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut sums: [Vec<Var>; 3] = Default::default();
            let mut outputs = vec![None; graph.relations.len()];
            for (k, (rel, p)) in graph.relations.iter().zip(&layer.relations).enumerate() {
                if rel.edges.is_empty() {
                    continue;
                }
                let (src, dst) = rel.kind.endpoints();
                let wm = g.param(p.msg);
                let msg = g.matmul(x[src.index()], wm)?;
                let terms = match (&rel.features, p.edge) {
                    (Some(f), Some(we)) => {
                        let fv = g.constant(f.clone());
                        let we = g.param(we);
                        Some(g.matmul(fv, we)?)
                    }
                    _ => None,
                };
                let wd = g.param(p.dst);
                let q = g.matmul(x[dst.index()], wd)?;
                let attn = g.param(p.attn);
                let out = g.edge_attention(
                    msg,
                    terms,
                    attn,
                    q,
                    rel.edges.clone(),
                    heads,
                    self.config.attention_slope,
                )?;
                sums[dst.index()].push(out);
                outputs[k] = Some(out);
            }
            attention.push(outputs);
            let mut next = x;
            for t in NodeType::ALL {
                let total = g.add_all(&sums[t.index()])?;
                let bias = g.param(layer.bias[t.index()]);
                next[t.index()] = if layer.concat {
                    let y = g.add_row(total, bias)?;
                    g.elu(y)
                } else {
                    let y = g.mean_heads(total, heads)?;
                    g.add_row(y, bias)?
                };
            }
            x = next;
        }
        let [task, agent, state] = x;

        let agent_h = self.agent_h0.apply(g, agent)?;
        let agent_c = self.agent_c0.apply(g, agent)?;
        let n_agents = g.shape(agent).0;
        let mut hs = Vec::with_capacity(n_agents);
        let mut cs = Vec::with_capacity(n_agents);
        for j in 0..n_agents {
            hs.push(g.slice_rows(agent_h, j, 1)?);
            cs.push(g.slice_rows(agent_c, j, 1)?);
        }
        let state_h = self.state_h0.apply(g, state)?;
        let state_c = self.state_c0.apply(g, state)?;
        let wt = g.param(self.task_selector.task);
        let task_scores = g.matmul(task, wt)?;
        Ok(Encoded {
            task,
            agent,
            state,
            task_scores,
            agent_h: hs,
            agent_c: cs,
            state_h,
            state_c,
            attention,
        })
    }

    /// Agent-selector logits, `1 × agents`.
    pub fn agent_logits(&self, g: &mut Graph<'_>, agents: Var, state_h: Var) -> Result<Var, ShapeError> {
        let p = &self.agent_selector;
        let wa = g.param(p.agent);
        let ws = g.param(p.state);
        let b = g.param(p.bias);
        let out = g.param(p.out);
        let a = g.matmul(agents, wa)?;
        let s = g.matmul(state_h, ws)?;
        let s = g.add(s, b)?;
        let pre = g.add_row(a, s)?;
        let hid = g.tanh(pre);
        let scores = g.matmul(hid, out)?;
        Ok(g.transpose(scores))
    }

    /// Task-selector logits over the rows `pool` of `task_scores`, `1 × pool`.
    /// Each logit depends only on its own task row.
    pub fn task_logits(
        &self,
        g: &mut Graph<'_>,
        task_scores: Var,
        pool: &[usize],
        agent_h: Var,
        state_h: Var,
    ) -> Result<Var, ShapeError> {
        let p = &self.task_selector;
        let wa = g.param(p.agent);
        let ws = g.param(p.state);
        let b = g.param(p.bias);
        let out = g.param(p.out);
        let rows = g.gather_rows(task_scores, pool)?;
        let a = g.matmul(agent_h, wa)?;
        let s = g.matmul(state_h, ws)?;
        let ctx = g.add(a, s)?;
        let ctx = g.add(ctx, b)?;
        let pre = g.add_row(rows, ctx)?;
        let hid = g.tanh(pre);
        let scores = g.matmul(hid, out)?;
        Ok(g.transpose(scores))
    }

    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        Checkpoint {
            meta: json!({ "kind": CHECKPOINT_KIND, "policy": self.config, "extra": meta }),
            params: self.params.clone(),
            optimizer: None,
        }
    }

    /// Rebuilds the architecture from the checkpoint's metadata and restores
    /// its parameter values.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, PolicyError> {
        if ckpt.meta.get("kind").and_then(|k| k.as_str()) != Some(CHECKPOINT_KIND) {
            return Err(PolicyError::Metadata("not a policy checkpoint".into()));
        }
        let config: PolicyConfig = serde_json::from_value(ckpt.meta["policy"].clone())
            .map_err(|e| PolicyError::Metadata(e.to_string()))?;
        let mut net = Self::new(config);
        ckpt.restore_into(&mut net.params)?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        Ok(self.to_checkpoint(serde_json::Value::Null).save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
