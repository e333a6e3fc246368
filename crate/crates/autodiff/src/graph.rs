use std::collections::HashMap;
use std::sync::Arc;

use crate::error::ShapeError;
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{matmul_nt_acc, matmul_tn_acc, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Edges of one relation between a source and a destination node set, with
/// the incoming edge list of every destination precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeIndex {
    src: Vec<usize>,
    dst: Vec<usize>,
    num_src: usize,
    num_dst: usize,
    incoming: Vec<Vec<usize>>,
}

impl EdgeIndex {
    pub fn new(num_src: usize, num_dst: usize, pairs: &[(usize, usize)]) -> Result<Self, ShapeError> {
        let mut incoming = vec![Vec::new(); num_dst];
        for (e, &(s, d)) in pairs.iter().enumerate() {
            if s >= num_src || d >= num_dst {
                return Err(ShapeError::Invalid {
                    op: "edge_index",
                    shape: (num_src, num_dst),
                    detail: format!("edge {e} ({s} -> {d}) out of range"),
                });
            }
            incoming[d].push(e);
        }
        Ok(Self {
            src: pairs.iter().map(|p| p.0).collect(),
            dst: pairs.iter().map(|p| p.1).collect(),
            num_src,
            num_dst,
            incoming,
        })
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn num_src(&self) -> usize {
        self.num_src
    }

    pub fn num_dst(&self) -> usize {
        self.num_dst
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.src.iter().copied().zip(self.dst.iter().copied())
    }

    pub fn incoming(&self, dst: usize) -> &[usize] {
        &self.incoming[dst]
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    LeakyRelu(Var, f64),
    Elu(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    Max(Var, usize),
    GatherRows(Var, Vec<usize>),
    RepeatRows(Var),
    Pick(Var, usize),
    Transpose(Var),
    MeanHeads(Var, usize),
    EdgeAttention(Box<AttentionRecord>),
}

#[derive(Debug)]
struct AttentionRecord {
    messages: Var,
    edge_terms: Option<Var>,
    attn: Var,
    dst_scores: Var,
    heads: usize,
    slope: f64,
    edges: Arc<EdgeIndex>,
    /// Per edge and head: pre-activation score and normalized weight.
    pre: Vec<f64>,
    alpha: Vec<f64>,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// A reverse-mode tape. Parameters are read from the borrowed store the
/// first time they are used and memoized per graph.
#[derive(Debug)]
pub struct Graph<'p> {
    store: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> ShapeError {
    ShapeError::Mismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn invalid(op: &'static str, t: &Tensor, detail: impl Into<String>) -> ShapeError {
    ShapeError::Invalid {
        op,
        shape: t.shape(),
        detail: detail.into(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - m).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

impl<'p> Graph<'p> {
    /// A graph without parameters (constants only).
    pub fn new() -> Self {
        Self {
            store: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn with_params(store: &'p ParamStore) -> Self {
        Self {
            store: Some(store),
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`. Vars created after
    /// that point become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.param_vars.retain(|_, v| v.0 < len);
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(Tensor::scalar(x))
    }

    /// The parameter's node. Panics when the graph has no store.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let store = self.store.expect("graph built without a parameter store");
        let v = self.push(store.get(id).clone(), Op::Param(id));
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("add", ta, tb));
        }
        let mut out = ta.clone();
        out.add_assign(tb);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Sum of several same-shaped values.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var, ShapeError> {
        let (&first, rest) = vars.split_first().ok_or_else(|| ShapeError::Invalid {
            op: "add_all",
            shape: (0, 0),
            detail: "no operands".into(),
        })?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    /// Adds a `1×cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, ShapeError> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(mismatch("add_row", ta, tr));
        }
        let mut out = ta.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(tr.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("sub", ta, tb));
        }
        let mut out = ta.clone();
        out.add_scaled(tb, -1.0);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("mul", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| s * x);
        self.push(out, Op::Scale(a, s))
    }

    pub fn concat_cols(&mut self, vars: &[Var]) -> Result<Var, ShapeError> {
        let first = self.value(*vars.first().ok_or_else(|| ShapeError::Invalid {
            op: "concat_cols",
            shape: (0, 0),
            detail: "no operands".into(),
        })?);
        let rows = first.rows();
        let mut cols = 0;
        for &v in vars {
            let t = self.value(v);
            if t.rows() != rows {
                return Err(mismatch("concat_cols", first, t));
            }
            cols += t.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &v in vars {
                let t = self.value(v);
                out.row_mut(r)[c0..c0 + t.cols()].copy_from_slice(t.row(r));
                c0 += t.cols();
            }
        }
        Ok(self.push(out, Op::ConcatCols(vars.to_vec())))
    }

    pub fn concat_rows(&mut self, vars: &[Var]) -> Result<Var, ShapeError> {
        let first = self.value(*vars.first().ok_or_else(|| ShapeError::Invalid {
            op: "concat_rows",
            shape: (0, 0),
            detail: "no operands".into(),
        })?);
        let cols = first.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &v in vars {
            let t = self.value(v);
            if t.cols() != cols {
                return Err(mismatch("concat_rows", first, t));
            }
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let out = Tensor::new(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(vars.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, ShapeError> {
        let t = self.value(a);
        if start + len > t.cols() {
            return Err(invalid("slice_cols", t, format!("columns {start}..{}", start + len)));
        }
        let out = Tensor::from_fn(t.rows(), len, |r, c| t.get(r, start + c));
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, ShapeError> {
        let t = self.value(a);
        if start + len > t.rows() {
            return Err(invalid("slice_rows", t, format!("rows {start}..{}", start + len)));
        }
        let data = t.data()[start * t.cols()..(start + len) * t.cols()].to_vec();
        let out = Tensor::new(len, t.cols(), data)?;
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        self.push(out, Op::Log(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).map(|x| leaky(x, slope));
        self.push(out, Op::LeakyRelu(a, slope))
    }

    /// ELU with unit scale.
    pub fn elu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(out, Op::Elu(a))
    }

    /// Softmax over each row.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(t.rows(), t.cols());
        for r in 0..t.rows() {
            softmax_row(t.row(r), out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Log-softmax over each row.
    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(t.rows(), t.cols());
        for r in 0..t.rows() {
            let row = t.row(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            for (o, &x) in out.row_mut(r).iter_mut().zip(row) {
                *o = x - lse;
            }
        }
        self.push(out, Op::LogSoftmaxRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.sum() / t.len().max(1) as f64;
        self.push(Tensor::scalar(m), Op::Mean(a))
    }

    /// Largest element; the gradient goes to its first occurrence.
    pub fn max(&mut self, a: Var) -> Result<Var, ShapeError> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(invalid("max", t, "empty tensor"));
        }
        let (idx, &m) = t
            .data()
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        Ok(self.push(Tensor::scalar(m), Op::Max(a, idx)))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var, ShapeError> {
        let t = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= t.rows()) {
            return Err(invalid("gather_rows", t, format!("row {bad} out of range")));
        }
        let mut data = Vec::with_capacity(rows.len() * t.cols());
        for &r in rows {
            data.extend_from_slice(t.row(r));
        }
        let out = Tensor::new(rows.len(), t.cols(), data)?;
        Ok(self.push(out, Op::GatherRows(a, rows.to_vec())))
    }

    /// Stacks `n` copies of a `1×cols` row.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var, ShapeError> {
        let t = self.value(a);
        if t.rows() != 1 {
            return Err(invalid("repeat_rows", t, "expected a single row"));
        }
        let out = Tensor::new(n, t.cols(), t.data().repeat(n))?;
        Ok(self.push(out, Op::RepeatRows(a)))
    }

    /// The element at `(r, c)` as a `1×1` value.
    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Result<Var, ShapeError> {
        let t = self.value(a);
        if r >= t.rows() || c >= t.cols() {
            return Err(invalid("pick", t, format!("index ({r}, {c}) out of range")));
        }
        let idx = r * t.cols() + c;
        let out = Tensor::scalar(t.data()[idx]);
        Ok(self.push(out, Op::Pick(a, idx)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Averages `heads` equal column blocks: `n×(heads·d) → n×d`.
    pub fn mean_heads(&mut self, a: Var, heads: usize) -> Result<Var, ShapeError> {
        let t = self.value(a);
        if heads == 0 || !t.cols().is_multiple_of(heads) {
            return Err(invalid("mean_heads", t, format!("{heads} heads do not divide columns")));
        }
        let d = t.cols() / heads;
        let out = Tensor::from_fn(t.rows(), d, |r, c| {
            (0..heads).map(|h| t.get(r, h * d + c)).sum::<f64>() / heads as f64
        });
        Ok(self.push(out, Op::MeanHeads(a, heads)))
    }

    /// Multi-head attention aggregation over one edge relation.
    ///
    /// For edge `e = (s, d)` and head `h`, the message is
    /// `m = messages[s, h] + edge_terms[e, h]` (column block `h` of width
    /// `D`), its score `leaky_relu(attn[h] · m + dst_scores[d, h])`, and the
    /// weights are a softmax over the edges entering `d`. The output row `d`
    /// holds the weighted message sums; destinations without edges get zeros.
    #[allow(clippy::too_many_arguments)]
    pub fn edge_attention(
        &mut self,
        messages: Var,
        edge_terms: Option<Var>,
        attn: Var,
        dst_scores: Var,
        edges: Arc<EdgeIndex>,
        heads: usize,
        slope: f64,
    ) -> Result<Var, ShapeError> {
        let tm = self.value(messages);
        let width = tm.cols();
        if heads == 0 || !width.is_multiple_of(heads) {
            return Err(invalid("edge_attention", tm, format!("{heads} heads do not divide columns")));
        }
        if tm.rows() != edges.num_src {
            return Err(invalid(
                "edge_attention",
                tm,
                format!("{} source rows expected", edges.num_src),
            ));
        }
        let ta = self.value(attn);
        if ta.shape() != (1, width) {
            return Err(mismatch("edge_attention", tm, ta));
        }
        let tq = self.value(dst_scores);
        if tq.shape() != (edges.num_dst, heads) {
            return Err(invalid(
                "edge_attention",
                tq,
                format!("destination scores must be {}×{heads}", edges.num_dst),
            ));
        }
        let te = match edge_terms {
            Some(v) => {
                let t = self.value(v);
                if t.shape() != (edges.len(), width) {
                    return Err(invalid(
                        "edge_attention",
                        t,
                        format!("edge terms must be {}×{width}", edges.len()),
                    ));
                }
                Some(t)
            }
            None => None,
        };
        let dim = width / heads;
        let n_edges = edges.len();
        let message = |e: usize, h: usize, k: usize| {
            let base = tm.get(edges.src[e], h * dim + k);
            te.map_or(base, |t| base + t.get(e, h * dim + k))
        };

        let mut pre = vec![0.0; n_edges * heads];
        for e in 0..n_edges {
            for h in 0..heads {
                let mut z = tq.get(edges.dst[e], h);
                for k in 0..dim {
                    z += ta.get(0, h * dim + k) * message(e, h, k);
                }
                pre[e * heads + h] = z;
            }
        }
        let mut alpha = vec![0.0; n_edges * heads];
        let mut out = Tensor::zeros(edges.num_dst, width);
        for d in 0..edges.num_dst {
            let inc = &edges.incoming[d];
            if inc.is_empty() {
                continue;
            }
            for h in 0..heads {
                let m = inc
                    .iter()
                    .map(|&e| leaky(pre[e * heads + h], slope))
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for &e in inc {
                    let w = (leaky(pre[e * heads + h], slope) - m).exp();
                    alpha[e * heads + h] = w;
                    z += w;
                }
                for &e in inc {
                    alpha[e * heads + h] /= z;
                    let a = alpha[e * heads + h];
                    for k in 0..dim {
                        let v = out.get(d, h * dim + k) + a * message(e, h, k);
                        out.set(d, h * dim + k, v);
                    }
                }
            }
        }
        let record = AttentionRecord {
            messages,
            edge_terms,
            attn,
            dst_scores,
            heads,
            slope,
            edges,
            pre,
            alpha,
        };
        Ok(self.push(out, Op::EdgeAttention(Box::new(record))))
    }

    /// Attention weights of an `edge_attention` output, `edges × heads`.
    pub fn attention_weights(&self, v: Var) -> Option<Tensor> {
        match &self.nodes[v.0].op {
            Op::EdgeAttention(r) => Tensor::new(r.edges.len(), r.heads, r.alpha.clone()).ok(),
            _ => None,
        }
    }

    /// Adjoints of every node for the scalar `root`, seeded with `seed`.
    fn adjoints(&self, root: Var, seed: f64) -> Vec<Option<Tensor>> {
        assert_eq!(self.shape(root), (1, 1), "backward needs a scalar root");
        let mut adj: Vec<Option<Tensor>> = Vec::with_capacity(root.0 + 1);
        adj.resize_with(root.0 + 1, || None);
        adj[root.0] = Some(Tensor::scalar(seed));
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
            adj[i] = Some(g);
        }
        adj
    }

    /// Accumulates `scale · ∂root/∂θ` into `grads` for every parameter used.
    pub fn backward(&self, root: Var, scale: f64, grads: &mut Gradients) {
        let adj = self.adjoints(root, scale);
        for (i, a) in adj.iter().enumerate() {
            if let (Some(a), Op::Param(id)) = (a, &self.nodes[i].op) {
                grads.accumulate(*id, a, 1.0);
            }
        }
    }

    /// Gradients of the scalar `root` with respect to arbitrary nodes.
    pub fn gradients_wrt(&self, root: Var, wrt: &[Var]) -> Vec<Tensor> {
        let adj = self.adjoints(root, 1.0);
        wrt.iter()
            .map(|v| {
                adj.get(v.0)
                    .and_then(Option::as_ref)
                    .cloned()
                    .unwrap_or_else(|| {
                        let (r, c) = self.shape(*v);
                        Tensor::zeros(r, c)
                    })
            })
            .collect()
    }

    fn propagate(&self, i: usize, g: &Tensor, adj: &mut [Option<Tensor>]) {
        fn acc(adj: &mut [Option<Tensor>], v: Var, t: Tensor) {
            match &mut adj[v.0] {
                Some(a) => a.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        }
        fn slot(adj: &mut [Option<Tensor>], v: Var, shape: (usize, usize)) -> &mut Tensor {
            adj[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
        }
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                matmul_nt_acc(g, tb, slot(adj, *a, ta.shape()));
                matmul_tn_acc(ta, g, slot(adj, *b, tb.shape()));
            }
            Op::Add(a, b) => {
                acc(adj, *a, g.clone());
                acc(adj, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                acc(adj, *a, g.clone());
                let mut r = Tensor::zeros(1, g.cols());
                for k in 0..g.rows() {
                    for (o, &x) in r.data_mut().iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                acc(adj, *row, r);
            }
            Op::Sub(a, b) => {
                acc(adj, *a, g.clone());
                acc(adj, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = zip_map(g, tb, |x, y| x * y);
                let gb = zip_map(g, ta, |x, y| x * y);
                acc(adj, *a, ga);
                acc(adj, *b, gb);
            }
            Op::Scale(a, s) => acc(adj, *a, g.map(|x| s * x)),
            Op::ConcatCols(vars) => {
                let mut c0 = 0;
                for &v in vars {
                    let cols = self.value(v).cols();
                    let part = Tensor::from_fn(g.rows(), cols, |r, c| g.get(r, c0 + c));
                    acc(adj, v, part);
                    c0 += cols;
                }
            }
            Op::ConcatRows(vars) => {
                let mut r0 = 0;
                for &v in vars {
                    let (rows, cols) = self.value(v).shape();
                    let data = g.data()[r0 * cols..(r0 + rows) * cols].to_vec();
                    acc(adj, v, Tensor::new(rows, cols, data).expect("slice shape"));
                    r0 += rows;
                }
            }
            Op::SliceCols(a, start) => {
                let shape = self.value(*a).shape();
                let t = slot(adj, *a, shape);
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        let v = t.get(r, start + c) + g.get(r, c);
                        t.set(r, start + c, v);
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let shape = self.value(*a).shape();
                let t = slot(adj, *a, shape);
                let cols = shape.1;
                for (o, &x) in t.data_mut()[start * cols..].iter_mut().zip(g.data()) {
                    *o += x;
                }
            }
            Op::Sigmoid(a) => acc(adj, *a, zip_map(g, out, |g, y| g * y * (1.0 - y))),
            Op::Tanh(a) => acc(adj, *a, zip_map(g, out, |g, y| g * (1.0 - y * y))),
            Op::Exp(a) => acc(adj, *a, zip_map(g, out, |g, y| g * y)),
            Op::Log(a) => acc(adj, *a, zip_map(g, self.value(*a), |g, x| g / x)),
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                acc(adj, *a, zip_map(g, self.value(*a), |g, x| if x > 0.0 { g } else { s * g }));
            }
            Op::Elu(a) => {
                let x = self.value(*a);
                let t = Tensor::from_fn(g.rows(), g.cols(), |r, c| {
                    if x.get(r, c) > 0.0 {
                        g.get(r, c)
                    } else {
                        g.get(r, c) * (out.get(r, c) + 1.0)
                    }
                });
                acc(adj, *a, t);
            }
            Op::SoftmaxRows(a) => {
                let mut t = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let dot: f64 = g.row(r).iter().zip(out.row(r)).map(|(x, y)| x * y).sum();
                    for c in 0..g.cols() {
                        t.set(r, c, out.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                acc(adj, *a, t);
            }
            Op::LogSoftmaxRows(a) => {
                let mut t = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let gs: f64 = g.row(r).iter().sum();
                    for c in 0..g.cols() {
                        t.set(r, c, g.get(r, c) - out.get(r, c).exp() * gs);
                    }
                }
                acc(adj, *a, t);
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                acc(adj, *a, Tensor::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let t = self.value(*a);
                let n = t.len().max(1) as f64;
                acc(adj, *a, Tensor::filled(t.rows(), t.cols(), g.item() / n));
            }
            Op::Max(a, idx) => {
                let shape = self.value(*a).shape();
                slot(adj, *a, shape).data_mut()[*idx] += g.item();
            }
            Op::GatherRows(a, rows) => {
                let shape = self.value(*a).shape();
                let t = slot(adj, *a, shape);
                for (k, &r) in rows.iter().enumerate() {
                    for (o, &x) in t.row_mut(r).iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
            }
            Op::RepeatRows(a) => {
                let mut r = Tensor::zeros(1, g.cols());
                for k in 0..g.rows() {
                    for (o, &x) in r.data_mut().iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                acc(adj, *a, r);
            }
            Op::Pick(a, idx) => {
                let shape = self.value(*a).shape();
                slot(adj, *a, shape).data_mut()[*idx] += g.item();
            }
            Op::Transpose(a) => acc(adj, *a, g.transpose()),
            Op::MeanHeads(a, heads) => {
                let (rows, cols) = self.value(*a).shape();
                let d = cols / heads;
                let h = *heads as f64;
                acc(adj, *a, Tensor::from_fn(rows, cols, |r, c| g.get(r, c % d) / h));
            }
            Op::EdgeAttention(rec) => self.attention_backward(rec, g, adj),
        }
    }

    fn attention_backward(&self, rec: &AttentionRecord, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let heads = rec.heads;
        let tm = self.value(rec.messages);
        let ta = self.value(rec.attn);
        let te = rec.edge_terms.map(|v| self.value(v));
        let width = tm.cols();
        let dim = width / heads;
        let edges = &rec.edges;
        let n_edges = edges.len();

        let mut d_msg_edge = Tensor::zeros(n_edges, width);
        let mut d_attn = Tensor::zeros(1, width);
        let mut d_dst = Tensor::zeros(edges.num_dst, heads);
        let mut m = vec![0.0; dim];
        let mut d_alpha = vec![0.0; n_edges];
        for d in 0..edges.num_dst {
            let inc = &edges.incoming[d];
            for h in 0..heads {
                let block = h * dim..(h + 1) * dim;
                let gd = &g.row(d)[block.clone()];
                let mut weighted = 0.0;
                for &e in inc {
                    for (k, mk) in m.iter_mut().enumerate() {
                        *mk = tm.get(edges.src[e], h * dim + k) + te.map_or(0.0, |t| t.get(e, h * dim + k));
                    }
                    let da: f64 = gd.iter().zip(&m).map(|(x, y)| x * y).sum();
                    d_alpha[e] = da;
                    weighted += rec.alpha[e * heads + h] * da;
                }
                for &e in inc {
                    let a = rec.alpha[e * heads + h];
                    let du = a * (d_alpha[e] - weighted);
                    let z = rec.pre[e * heads + h];
                    let dz = if z > 0.0 { du } else { rec.slope * du };
                    d_dst.set(d, h, d_dst.get(d, h) + dz);
                    let row = d_msg_edge.row_mut(e);
                    for k in 0..dim {
                        let mk = tm.get(edges.src[e], h * dim + k) + te.map_or(0.0, |t| t.get(e, h * dim + k));
                        let idx = h * dim + k;
                        d_attn.data_mut()[idx] += dz * mk;
                        row[idx] += a * gd[k] + dz * ta.get(0, idx);
                    }
                }
            }
        }
        let mut d_msg = Tensor::zeros(tm.rows(), width);
        for e in 0..n_edges {
            for (o, &x) in d_msg.row_mut(edges.src[e]).iter_mut().zip(d_msg_edge.row(e)) {
                *o += x;
            }
        }
        accumulate(adj, rec.messages, d_msg);
        accumulate(adj, rec.attn, d_attn);
        accumulate(adj, rec.dst_scores, d_dst);
        if let Some(v) = rec.edge_terms {
            accumulate(adj, v, d_msg_edge);
        }
    }
}

fn accumulate(adj: &mut [Option<Tensor>], v: Var, t: Tensor) {
    match &mut adj[v.0] {
        Some(a) => a.add_assign(&t),
        slot @ None => *slot = Some(t),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}
