//! Central finite-difference checks of tape gradients.

use rand::Rng;

use crate::error::ShapeError;
use crate::graph::{Graph, Var};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-3)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub checked: usize,
}

fn weighted_sum(g: &mut Graph<'_>, out: Var, weights: &Tensor) -> Result<Var, ShapeError> {
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}

fn random_weights<R: Rng + ?Sized>(shape: (usize, usize), rng: &mut R) -> Tensor {
    Tensor::from_fn(shape.0, shape.1, |_, _| rng.random_range(-1.0..1.0))
}

/// Compares the gradient of `sum(W ⊙ build(inputs))`, for a random `W`, with
/// respect to every input element against central differences.
pub fn check_inputs<R, F>(inputs: &[Tensor], build: F, rng: &mut R) -> Result<GradCheck, ShapeError>
where
    R: Rng + ?Sized,
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var, ShapeError>,
{
    let eval = |inputs: &[Tensor], weights: Option<&Tensor>| -> Result<(f64, Vec<Tensor>, (usize, usize)), ShapeError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        let shape = g.shape(out);
        let Some(w) = weights else {
            return Ok((0.0, Vec::new(), shape));
        };
        let loss = weighted_sum(&mut g, out, w)?;
        let grads = g.gradients_wrt(loss, &vars);
        Ok((g.value(loss).item(), grads, shape))
    };
    let (_, _, shape) = eval(inputs, None)?;
    let weights = random_weights(shape, rng);
    let (_, analytic, _) = eval(inputs, Some(&weights))?;

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut probe = inputs.to_vec();
    for i in 0..inputs.len() {
        for k in 0..inputs[i].len() {
            let x = inputs[i].data()[k];
            probe[i].data_mut()[k] = x + STEP;
            let plus = eval(&probe, Some(&weights))?.0;
            probe[i].data_mut()[k] = x - STEP;
            let minus = eval(&probe, Some(&weights))?.0;
            probe[i].data_mut()[k] = x;
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(relative_error(analytic[i].data()[k], numeric));
            checked += 1;
        }
    }
    Ok(GradCheck {
        max_relative_error: worst,
        checked,
    })
}

/// Compares parameter gradients of a scalar `build(graph)` against central
/// differences on at most `max_coords` randomly chosen coordinates
/// (all of them when the store is smaller).
pub fn check_params<R, F>(
    store: &ParamStore,
    build: F,
    max_coords: usize,
    rng: &mut R,
) -> Result<GradCheck, ShapeError>
where
    R: Rng + ?Sized,
    F: Fn(&mut Graph<'_>) -> Result<Var, ShapeError>,
{
    let mut coords: Vec<(ParamId, usize)> = store
        .iter()
        .flat_map(|(id, _, t)| (0..t.len()).map(move |k| (id, k)))
        .collect();
    if coords.len() > max_coords {
        for i in 0..max_coords {
            let j = rng.random_range(i..coords.len());
            coords.swap(i, j);
        }
        coords.truncate(max_coords);
    }
    check_param_coords(store, build, &coords)
}

/// Like [`check_params`] on an explicit coordinate list `(parameter, flat index)`.
pub fn check_param_coords<F>(store: &ParamStore, build: F, coords: &[(ParamId, usize)]) -> Result<GradCheck, ShapeError>
where
    F: Fn(&mut Graph<'_>) -> Result<Var, ShapeError>,
{
    let eval = |store: &ParamStore| -> Result<f64, ShapeError> {
        let mut g = Graph::with_params(store);
        let out = build(&mut g)?;
        Ok(g.value(out).item())
    };
    let mut grads = Gradients::for_store(store);
    {
        let mut g = Graph::with_params(store);
        let out = build(&mut g)?;
        g.backward(out, 1.0, &mut grads);
    }
    let mut probe = store.clone();
    let mut worst: f64 = 0.0;
    for &(id, k) in coords {
        let x = store.get(id).data()[k];
        probe.get_mut(id).data_mut()[k] = x + STEP;
        let plus = eval(&probe)?;
        probe.get_mut(id).data_mut()[k] = x - STEP;
        let minus = eval(&probe)?;
        probe.get_mut(id).data_mut()[k] = x;
        let numeric = (plus - minus) / (2.0 * STEP);
        let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
        worst = worst.max(relative_error(analytic, numeric));
    }
    Ok(GradCheck {
        max_relative_error: worst,
        checked: coords.len(),
    })
}

/// Worst finite-difference error of one operation over random instances.
#[derive(Debug, Clone, PartialEq)]
pub struct OpReport {
    pub op: &'static str,
    pub max_relative_error: f64,
    pub instances: usize,
}

fn rand_tensor<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
}

/// Random values bounded away from zero, for ops with a kink there.
fn rand_off_zero<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| {
        let x: f64 = rng.random_range(0.05..2.0);
        if rng.random_bool(0.5) {
            x
        } else {
            -x
        }
    })
}

type Builder = Box<dyn Fn(&mut Graph<'_>, &[Var]) -> Result<Var, ShapeError>>;

/// Random inputs and a builder for `op`.
fn op_case<R: Rng + ?Sized>(op: &str, rng: &mut R) -> (Vec<Tensor>, Builder) {
    let r = rng.random_range(1..=4);
    let c = rng.random_range(1..=5);
    match op {
        "matmul" => {
            let k = rng.random_range(1..=4);
            (vec![rand_tensor(rng, r, k), rand_tensor(rng, k, c)], Box::new(|g, v| g.matmul(v[0], v[1])))
        }
        "add" => (vec![rand_tensor(rng, r, c), rand_tensor(rng, r, c)], Box::new(|g, v| g.add(v[0], v[1]))),
        "add_all" => (
            vec![rand_tensor(rng, r, c), rand_tensor(rng, r, c), rand_tensor(rng, r, c)],
            Box::new(|g, v| g.add_all(v)),
        ),
        "add_row" => (vec![rand_tensor(rng, r, c), rand_tensor(rng, 1, c)], Box::new(|g, v| g.add_row(v[0], v[1]))),
        "sub" => (vec![rand_tensor(rng, r, c), rand_tensor(rng, r, c)], Box::new(|g, v| g.sub(v[0], v[1]))),
        "mul" => (vec![rand_tensor(rng, r, c), rand_tensor(rng, r, c)], Box::new(|g, v| g.mul(v[0], v[1]))),
        "scale" => {
            let s = rng.random_range(-3.0..3.0);
            (vec![rand_tensor(rng, r, c)], Box::new(move |g, v| Ok(g.scale(v[0], s))))
        }
        "concat_cols" => {
            let c2 = rng.random_range(1..=3);
            (vec![rand_tensor(rng, r, c), rand_tensor(rng, r, c2)], Box::new(|g, v| g.concat_cols(v)))
        }
        "concat_rows" => {
            let r2 = rng.random_range(1..=3);
            (vec![rand_tensor(rng, r, c), rand_tensor(rng, r2, c)], Box::new(|g, v| g.concat_rows(v)))
        }
        "slice_cols" => {
            let start = rng.random_range(0..c);
            let len = rng.random_range(1..=c - start);
            (vec![rand_tensor(rng, r, c)], Box::new(move |g, v| g.slice_cols(v[0], start, len)))
        }
        "slice_rows" => {
            let start = rng.random_range(0..r);
            let len = rng.random_range(1..=r - start);
            (vec![rand_tensor(rng, r, c)], Box::new(move |g, v| g.slice_rows(v[0], start, len)))
        }
        "sigmoid" => (vec![rand_tensor(rng, r, c)], Box::new(|g, v| Ok(g.sigmoid(v[0])))),
        "tanh" => (vec![rand_tensor(rng, r, c)], Box::new(|g, v| Ok(g.tanh(v[0])))),
        "exp" => (vec![rand_tensor(rng, r, c)], Box::new(|g, v| Ok(g.exp(v[0])))),
        "log" => (
            vec![Tensor::from_fn(r, c, |_, _| rng.random_range(0.2..3.0))],
            Box::new(|g, v| Ok(g.log(v[0]))),
        ),
        "leaky_relu" => (vec![rand_off_zero(rng, r, c)], Box::new(|g, v| Ok(g.leaky_relu(v[0], 0.2)))),
        "elu" => (vec![rand_off_zero(rng, r, c)], Box::new(|g, v| Ok(g.elu(v[0])))),
        "softmax_rows" => (vec![rand_tensor(rng, r, c)], Box::new(|g, v| Ok(g.softmax_rows(v[0])))),
        "log_softmax_rows" => (vec![rand_tensor(rng, r, c)], Box::new(|g, v| Ok(g.log_softmax_rows(v[0])))),
        "sum" => (vec![rand_tensor(rng, r, c)], Box::new(|g, v| Ok(g.sum(v[0])))),
        "mean" => (vec![rand_tensor(rng, r, c)], Box::new(|g, v| Ok(g.mean(v[0])))),
        "max" => {
            let mut t = rand_tensor(rng, r, c);
            let k = rng.random_range(0..t.len());
            t.data_mut()[k] = 3.0;
            (vec![t], Box::new(|g, v| g.max(v[0])))
        }
        "gather_rows" => {
            let idx: Vec<usize> = (0..rng.random_range(1..=5)).map(|_| rng.random_range(0..r)).collect();
            (vec![rand_tensor(rng, r, c)], Box::new(move |g, v| g.gather_rows(v[0], &idx)))
        }
        "repeat_rows" => {
            let n = rng.random_range(1..=4);
            (vec![rand_tensor(rng, 1, c)], Box::new(move |g, v| g.repeat_rows(v[0], n)))
        }
        "pick" => {
            let (i, j) = (rng.random_range(0..r), rng.random_range(0..c));
            (vec![rand_tensor(rng, r, c)], Box::new(move |g, v| g.pick(v[0], i, j)))
        }
        "transpose" => (vec![rand_tensor(rng, r, c)], Box::new(|g, v| Ok(g.transpose(v[0])))),
        "mean_heads" => {
            let heads = rng.random_range(1..=4);
            (vec![rand_tensor(rng, r, heads * c)], Box::new(move |g, v| g.mean_heads(v[0], heads)))
        }
        "edge_attention" | "edge_attention_with_edge_terms" => {
            let heads = rng.random_range(1..=3);
            let dim = rng.random_range(1..=3);
            let (n_src, n_dst) = (rng.random_range(1..=4), rng.random_range(1..=4));
            let mut pairs = Vec::new();
            for s in 0..n_src {
                for d in 0..n_dst {
                    if rng.random_bool(0.6) {
                        pairs.push((s, d));
                    }
                }
            }
            let edges = std::sync::Arc::new(
                crate::graph::EdgeIndex::new(n_src, n_dst, &pairs).expect("edges in range"),
            );
            let mut inputs = vec![
                rand_tensor(rng, n_src, heads * dim),
                rand_tensor(rng, 1, heads * dim),
                rand_tensor(rng, n_dst, heads),
            ];
            let with_terms = op == "edge_attention_with_edge_terms";
            if with_terms {
                inputs.push(rand_tensor(rng, pairs.len(), heads * dim));
            }
            (
                inputs,
                Box::new(move |g, v| {
                    let terms = with_terms.then(|| v[3]);
                    g.edge_attention(v[0], terms, v[1], v[2], edges.clone(), heads, 0.2)
                }),
            )
        }
        other => panic!("no gradient case for {other}"),
    }
}

/// Every differentiable operation of [`Graph`].
pub const OPS: &[&str] = &[
    "matmul",
    "add",
    "add_all",
    "add_row",
    "sub",
    "mul",
    "scale",
    "concat_cols",
    "concat_rows",
    "slice_cols",
    "slice_rows",
    "sigmoid",
    "tanh",
    "exp",
    "log",
    "leaky_relu",
    "elu",
    "softmax_rows",
    "log_softmax_rows",
    "sum",
    "mean",
    "max",
    "gather_rows",
    "repeat_rows",
    "pick",
    "transpose",
    "mean_heads",
    "edge_attention",
    "edge_attention_with_edge_terms",
];

/// Finite-difference check of every op over `instances` random inputs each.
pub fn primitive_suite<R: Rng + ?Sized>(instances: usize, rng: &mut R) -> Vec<OpReport> {
    OPS.iter()
        .map(|&op| {
            let mut worst: f64 = 0.0;
            for _ in 0..instances {
                let (inputs, build) = op_case(op, rng);
                let res = check_inputs(&inputs, &build, rng).expect("op case has valid shapes");
                worst = worst.max(res.max_relative_error);
            }
            OpReport {
                op,
                max_relative_error: worst,
                instances,
            }
        })
        .collect()
}
