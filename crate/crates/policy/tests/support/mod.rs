#![allow(dead_code)]

use std::collections::BTreeMap;

use teamsched_core::probgen::{generate_problem, GeneratorConfig, Scale};
use teamsched_core::{AgentKind, DurationMatrix, EnvConfig, MultiRoundEnv, Observation, WaitConstraint};
use teamsched_policy::{HybridNet, PolicyConfig};

pub fn observation(durs: &[&[f64]], kinds: &[AgentKind], deadlines: &[(usize, f64)], waits: &[(usize, usize, f64)]) -> Observation {
    let n = durs.len();
    Observation {
        round: 0,
        num_robots: kinds.iter().filter(|k| **k == AgentKind::Robot).count(),
        num_humans: kinds.iter().filter(|k| **k == AgentKind::Human).count(),
        estimated_durations: DurationMatrix::from_row_major(n, kinds.len(), durs.concat()).unwrap(),
        deadlines: deadlines.iter().copied().collect::<BTreeMap<_, _>>(),
        waits: waits.iter().map(|&w| WaitConstraint::from(w)).collect(),
        agent_kinds: kinds.to_vec(),
        stochastic: false,
    }
}

/// Three tasks, a robot and a human, one deadline and one wait.
pub fn toy3() -> Observation {
    observation(
        &[&[12.0, 20.0], &[15.0, 9.0], &[30.0, 25.0]],
        &[AgentKind::Robot, AgentKind::Human],
        &[(1, 40.0)],
        &[(0, 2, 5.0)],
    )
}

/// Two tasks, two robots.
pub fn toy2() -> Observation {
    observation(&[&[10.0, 14.0], &[13.0, 11.0]], &[AgentKind::Robot, AgentKind::Robot], &[(1, 20.0)], &[])
}

pub fn generated(scale: Scale, seed: u64) -> Observation {
    let inst = generate_problem(scale, seed, &GeneratorConfig::default()).instance;
    MultiRoundEnv::new(EnvConfig::deterministic()).reset(&inst, seed).unwrap()
}

/// A narrow network so finite-difference sweeps stay fast.
pub fn small_net(seed: u64) -> HybridNet {
    HybridNet::new(PolicyConfig {
        hidden: 8,
        heads: 2,
        lstm: 4,
        selector_hidden: 4,
        init_seed: seed,
        ..PolicyConfig::default()
    })
}
