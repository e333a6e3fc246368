mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{generated, observation, toy3};
use teamsched_autodiff::gradcheck::check_params;
use teamsched_autodiff::{Graph, ParamStore, Tensor};
use teamsched_core::probgen::Scale;
use teamsched_core::{AgentKind, Observation, WaitConstraint};
use teamsched_policy::hetgraph::{EdgeType, NodeType};
use teamsched_policy::net::Encoded;
use teamsched_policy::{build_het_graph, lstm_step, HybridNet, LstmCell, PolicyConfig};

fn edge_counts(obs: &Observation) -> Vec<(EdgeType, usize)> {
    let g = build_het_graph(obs);
    EdgeType::ALL.iter().map(|&k| (k, g.relation(k).edges.len())).collect()
}

#[test]
fn minimal_graph_has_three_nodes() {
    let obs = observation(&[&[20.0]], &[AgentKind::Robot], &[], &[]);
    let g = build_het_graph(&obs);
    assert_eq!(NodeType::ALL.map(|t| g.num_nodes(t)), [1, 1, 1]);
    for kind in [EdgeType::TaskToState, EdgeType::AgentToState, EdgeType::StateSelf] {
        assert_eq!(g.relation(kind).edges.pairs().collect::<Vec<_>>(), vec![(0, 0)]);
    }
    assert!(g.relation(EdgeType::Precedes).edges.is_empty());
}

#[test]
fn wait_becomes_temporal_edges_with_gap() {
    let obs = toy3();
    let g = build_het_graph(&obs);
    let pre = g.relation(EdgeType::Precedes);
    assert_eq!(pre.edges.pairs().collect::<Vec<_>>(), vec![(0, 2)]);
    assert_eq!(pre.features.as_ref().unwrap().data(), &[0.05]);
    let fol = g.relation(EdgeType::Follows);
    assert_eq!(fol.edges.pairs().collect::<Vec<_>>(), vec![(2, 0)]);
}

#[test]
fn fixture_edge_counts_match_hand_count() {
    // 3 tasks, 2 agents, 1 wait
    let expected = [
        (EdgeType::Precedes, 1),
        (EdgeType::Follows, 1),
        (EdgeType::TaskSelf, 3),
        (EdgeType::Capable, 6),
        (EdgeType::CapableRev, 6),
        (EdgeType::AgentSelf, 2),
        (EdgeType::TaskToState, 3),
        (EdgeType::AgentToState, 2),
        (EdgeType::StateSelf, 1),
        (EdgeType::StateToTask, 3),
        (EdgeType::StateToAgent, 2),
    ];
    assert_eq!(edge_counts(&toy3()), expected.to_vec());
    assert_eq!(build_het_graph(&toy3()).num_edges(), 30);
}

#[test]
fn generated_graph_invariants() {
    for seed in 0..20 {
        let obs = generated(Scale::Small, seed);
        let g = build_het_graph(&obs);
        let (n, a, w) = (obs.num_tasks(), obs.num_agents(), obs.waits.len());
        assert_eq!(g.num_nodes(NodeType::State), 1);
        assert_eq!(g.num_edges(), 2 * w + n + 2 * n * a + a + n + a + 1 + n + a);
        let to_state: Vec<_> = g.relation(EdgeType::TaskToState).edges.pairs().map(|p| p.0).collect();
        assert_eq!(to_state, (0..n).collect::<Vec<_>>());
        let agents: Vec<_> = g.relation(EdgeType::AgentToState).edges.pairs().map(|p| p.0).collect();
        assert_eq!(agents, (0..a).collect::<Vec<_>>());
        let arcs: Vec<_> = obs.waits.iter().map(|w| (w.from, w.to)).collect();
        assert_eq!(g.relation(EdgeType::Precedes).edges.pairs().collect::<Vec<_>>(), arcs);
    }
}

#[test]
fn task_and_state_features_do_not_grow_with_problem_size() {
    let kinds = [AgentKind::Robot, AgentKind::Human];
    let rows: [&[f64]; 2] = [&[12.0, 20.0], &[15.0, 9.0]];
    let one = observation(&rows, &kinds, &[(1, 30.0)], &[]);
    // the same tasks twice over, with deadlines stretched to the doubled load
    let two = observation(&[rows[0], rows[1], rows[0], rows[1]], &kinds, &[(1, 60.0), (3, 60.0)], &[]);
    let (g1, g2) = (build_het_graph(&one), build_het_graph(&two));
    let state = NodeType::State.index();
    assert_eq!(g1.node_features[state], g2.node_features[state]);
    let task = NodeType::Task.index();
    for f in [3, 4] {
        assert_eq!(g1.node_features[task].row(1)[f], g2.node_features[task].row(1)[f]);
        assert_eq!(g1.node_features[task].row(1)[f], g2.node_features[task].row(3)[f]);
    }
}

fn encode(net: &HybridNet, obs: &Observation) -> (Tensor, Tensor, Tensor) {
    let mut g = Graph::with_params(&net.params);
    let e: Encoded = net.encode(&mut g, &build_het_graph(obs)).unwrap();
    (g.value(e.task).clone(), g.value(e.agent).clone(), g.value(e.state).clone())
}

fn permute_tasks(obs: &Observation, perm: &[usize]) -> Observation {
    let n = obs.num_tasks();
    let mut out = obs.clone();
    for t in 0..n {
        for j in 0..obs.num_agents() {
            out.estimated_durations.set(perm[t], j, obs.estimated_durations.get(t, j));
        }
    }
    out.deadlines = obs.deadlines.iter().map(|(&t, &d)| (perm[t], d)).collect();
    out.waits = obs
        .waits
        .iter()
        .map(|w| WaitConstraint { from: perm[w.from], to: perm[w.to], gap: w.gap })
        .collect();
    out
}

#[test]
fn encoder_is_task_permutation_equivariant() {
    let net = HybridNet::new(PolicyConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..5 {
        let obs = generated(Scale::Small, 100 + seed);
        let n = obs.num_tasks();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let (t0, a0, s0) = encode(&net, &obs);
        let (t1, a1, s1) = encode(&net, &permute_tasks(&obs, &perm));
        for t in 0..n {
            for (x, y) in t0.row(t).iter().zip(t1.row(perm[t])) {
                assert!((x - y).abs() < 1e-10);
            }
        }
        for (x, y) in a0.data().iter().zip(a1.data()).chain(s0.data().iter().zip(s1.data())) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn identical_graphs_give_identical_embeddings() {
    let net = HybridNet::new(PolicyConfig::default());
    let obs = generated(Scale::Medium, 3);
    assert_eq!(encode(&net, &obs), encode(&net, &obs.clone()));
}

#[test]
fn single_neighbor_attention_weight_is_one() {
    let net = HybridNet::new(PolicyConfig::default());
    let obs = toy3();
    let mut g = Graph::with_params(&net.params);
    let e = net.encode(&mut g, &build_het_graph(&obs)).unwrap();
    for layer in &e.attention {
        for kind in [EdgeType::TaskSelf, EdgeType::StateToTask, EdgeType::StateToAgent, EdgeType::StateSelf] {
            let w = g.attention_weights(layer[kind as usize].unwrap()).unwrap();
            assert!(w.data().iter().all(|&x| x == 1.0), "{kind:?}");
        }
        // several in-neighbors: a proper distribution per destination and head
        let w = g.attention_weights(layer[EdgeType::TaskToState as usize].unwrap()).unwrap();
        for h in 0..w.cols() {
            let s: f64 = (0..w.rows()).map(|e| w.get(e, h)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn weight_shapes_do_not_depend_on_problem_size() {
    let net = HybridNet::new(PolicyConfig::default());
    for scale in [Scale::Small, Scale::Large] {
        let obs = generated(scale, 7);
        let (t, a, s) = encode(&net, &obs);
        assert_eq!(t.shape(), (obs.num_tasks(), 64));
        assert_eq!(a.shape(), (4, 64));
        assert_eq!(s.shape(), (1, 64));
    }
}

fn zero_cell(input: usize, hidden: usize) -> (ParamStore, LstmCell) {
    let mut store = ParamStore::new();
    let cell = LstmCell::new(&mut store, "cell", input, hidden, &mut ChaCha8Rng::seed_from_u64(0));
    for id in store.ids().collect::<Vec<_>>() {
        store.get_mut(id).data_mut().fill(0.0);
    }
    (store, cell)
}

#[test]
fn lstm_with_zero_weights_halves_the_cell() {
    let (store, cell) = zero_cell(3, 32);
    let c0 = Tensor::from_fn(1, 32, |_, c| c as f64 / 8.0 - 2.0);
    let mut g = Graph::with_params(&store);
    let h = g.constant(Tensor::from_fn(1, 32, |_, c| (c as f64).sin()));
    let c = g.constant(c0.clone());
    let x = g.constant(Tensor::filled(1, 3, 0.7));
    let (h1, c1) = lstm_step(&mut g, &cell, h, c, x).unwrap();
    for k in 0..32 {
        let ck = c0.get(0, k);
        assert!((g.value(c1).get(0, k) - 0.5 * ck).abs() < 1e-15);
        assert!((g.value(h1).get(0, k) - 0.5 * (0.5 * ck).tanh()).abs() < 1e-15);
    }
}

#[test]
fn lstm_from_zero_state_matches_closed_form() {
    let mut store = ParamStore::new();
    let cell = LstmCell::new(&mut store, "cell", 5, 32, &mut ChaCha8Rng::seed_from_u64(4));
    let b = store.get(cell.bias).clone();
    let mut g = Graph::with_params(&store);
    let zero_h = g.constant(Tensor::zeros(1, 32));
    let zero_c = g.constant(Tensor::zeros(1, 32));
    let x = g.constant(Tensor::zeros(1, 5));
    let (h1, c1) = lstm_step(&mut g, &cell, zero_h, zero_c, x).unwrap();
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    for k in 0..32 {
        // only the biases drive the gates
        let c = sig(b.get(0, k)) * b.get(0, 64 + k).tanh();
        let h = sig(b.get(0, 96 + k)) * c.tanh();
        assert!((g.value(c1).get(0, k) - c).abs() < 1e-14);
        assert!((g.value(h1).get(0, k) - h).abs() < 1e-14);
        assert_eq!(b.get(0, 32 + k), 1.0);
    }
}

#[test]
fn five_step_lstm_chain_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut store = ParamStore::new();
    let cell = LstmCell::new(&mut store, "cell", 3, 6, &mut rng);
    let xs: Vec<Tensor> = (0..5).map(|_| Tensor::from_fn(1, 3, |_, _| rng.random_range(-1.0..1.0))).collect();
    let w = Tensor::from_fn(1, 6, |_, _| rng.random_range(-1.0..1.0));
    let res = check_params(
        &store,
        |g| {
            let mut h = g.constant(Tensor::zeros(1, 6));
            let mut c = g.constant(Tensor::zeros(1, 6));
            for x in &xs {
                let xv = g.constant(x.clone());
                (h, c) = lstm_step(g, &cell, h, c, xv)?;
            }
            let wv = g.constant(w.clone());
            let both = g.add(h, c)?;
            let prod = g.mul(both, wv)?;
            Ok(g.sum(prod))
        },
        usize::MAX,
        &mut rng,
    )
    .unwrap();
    assert_eq!(res.checked, 3 * 24 + 6 * 24 + 24);
    assert!(res.max_relative_error < 1e-5, "{:e}", res.max_relative_error);
}

#[test]
fn checkpoint_round_trip_restores_the_network() {
    let net = HybridNet::new(PolicyConfig { init_seed: 77, ..PolicyConfig::default() });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    net.save(&path).unwrap();
    let back = HybridNet::load(&path).unwrap();
    assert_eq!(back.config, net.config);
    assert_eq!(back.params, net.params);
    let obs = generated(Scale::Small, 1);
    assert_eq!(encode(&net, &obs), encode(&back, &obs));
}
