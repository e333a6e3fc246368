mod support {
    pub mod oracles;
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles::{random_problem, random_schedule, recompute_reward};
use teamsched_core::baselines::edf_schedule;
use teamsched_core::env::round_reward;
use teamsched_core::probgen::{generate_problem, GeneratorConfig, Scale};
use teamsched_core::temporal::simulate_dispatch;
use teamsched_core::workers::CurveParams;
use teamsched_core::{
    DurationMatrix, EnvConfig, EnvError, MultiRoundEnv, ProblemInstance, Schedule, SchedulingProblem,
};

fn small_instance(seed: u64) -> ProblemInstance {
    generate_problem(Scale::Small, seed, &GeneratorConfig::default()).instance
}

/// Two robots, two humans, no constraints; every human curve has mean 50 at
/// zero experience.
fn flat_human_instance() -> ProblemInstance {
    let n = 3;
    let problem = SchedulingProblem {
        num_tasks: n,
        num_robots: 2,
        num_humans: 2,
        durations: DurationMatrix::from_row_major(n, 4, [20.0, 25.0, 50.0, 50.0].repeat(n)).unwrap(),
        deadlines: Default::default(),
        waits: vec![],
    };
    let curve = CurveParams { c: 30.0, k: 20.0, beta: 0.5, sd_c: 3.0, sd_k: 2.0, sd_beta: 0.05 };
    ProblemInstance { problem, human_curves: Some(vec![vec![curve; n]; 2]) }
}

#[test]
fn reset_is_reproducible() {
    let inst = small_instance(3);
    let mut a = MultiRoundEnv::new(EnvConfig::stochastic());
    let mut b = MultiRoundEnv::new(EnvConfig::stochastic());
    assert_eq!(a.reset(&inst, 9).unwrap(), b.reset(&inst, 9).unwrap());
}

#[test]
fn stochastic_episode_is_reproducible() {
    let inst = small_instance(4);
    let run = || {
        let mut env = MultiRoundEnv::new(EnvConfig::stochastic());
        let mut obs = env.reset(&inst, 21).unwrap();
        let mut out = Vec::new();
        loop {
            let step = env.step(&edf_schedule(&obs)).unwrap();
            obs = step.observation.clone();
            let done = step.done;
            out.push(step);
            if done {
                break;
            }
        }
        out
    };
    assert_eq!(run(), run());
}

#[test]
fn robot_entries_are_exact() {
    let inst = small_instance(5);
    let mut env = MultiRoundEnv::new(EnvConfig::stochastic());
    let obs = env.reset(&inst, 1).unwrap();
    let p = &inst.problem;
    for t in 0..p.num_tasks {
        for r in 0..p.num_robots {
            assert_eq!(obs.estimated_durations.get(t, r), p.durations.get(t, r));
        }
    }
}

#[test]
fn human_estimates_at_zero_repetitions_have_sigma0_spread() {
    let inst = flat_human_instance();
    let cfg = EnvConfig::stochastic();
    let mut env = MultiRoundEnv::new(cfg);
    let xs: Vec<f64> = (0..20_000)
        .map(|seed| env.reset(&inst, seed).unwrap().estimated_durations.get(0, 2))
        .collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    // sd of a sample sd is about sigma/sqrt(2n)
    let tol = 4.0 * cfg.estimator.sigma0 / (2.0 * n).sqrt();
    assert!((sd - cfg.estimator.sigma0).abs() < tol, "sd {sd}");
    assert!((mean - 50.0).abs() < 4.0 * cfg.estimator.sigma0 / n.sqrt(), "mean {mean}");
}

#[test]
fn single_round_episode_finishes_after_one_step() {
    let inst = small_instance(6);
    let mut env = MultiRoundEnv::new(EnvConfig { rounds: 1, ..EnvConfig::deterministic() });
    let obs = env.reset(&inst, 0).unwrap();
    let out = env.step(&edf_schedule(&obs)).unwrap();
    assert!(out.done);
    assert!(matches!(env.step(&edf_schedule(&obs)), Err(EnvError::Finished(1))));
}

#[test]
fn done_exactly_once_at_last_round() {
    let inst = small_instance(7);
    let mut env = MultiRoundEnv::new(EnvConfig::deterministic());
    let mut obs = env.reset(&inst, 0).unwrap();
    let mut dones = Vec::new();
    for _ in 0..4 {
        let out = env.step(&edf_schedule(&obs)).unwrap();
        dones.push(out.done);
        obs = out.observation;
    }
    assert_eq!(dones, vec![false, false, false, true]);
    assert!(env.step(&edf_schedule(&obs)).is_err());
}

#[test]
fn step_before_reset_is_rejected() {
    let mut env = MultiRoundEnv::new(EnvConfig::deterministic());
    assert!(matches!(env.step(&Schedule::default()), Err(EnvError::NotReset)));
}

#[test]
fn invalid_problem_is_rejected() {
    let mut inst = small_instance(8);
    inst.problem.durations.set(0, 0, 150.0);
    let mut env = MultiRoundEnv::new(EnvConfig::deterministic());
    assert!(matches!(env.reset(&inst, 0), Err(EnvError::InvalidProblem(_))));
}

#[test]
fn repeated_schedule_never_slows_down_with_deterministic_humans() {
    for seed in 0..30 {
        let inst = small_instance(100 + seed);
        let n = inst.problem.num_tasks;
        // everything on the humans, alternating, in index order
        let s = Schedule::from_pairs((0..n).map(|t| (t, 2 + t % 2)));
        let mut env = MultiRoundEnv::new(EnvConfig::deterministic());
        env.reset(&inst, seed).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..4 {
            let out = env.step(&s).unwrap();
            let m = out.info.executed_makespan();
            if out.info.is_feasible() {
                assert!(m <= last, "seed {seed}: {m} after {last}");
                last = m;
            }
        }
    }
}

#[test]
fn trace_covers_all_tasks_every_round() {
    let inst = small_instance(9);
    let mut env = MultiRoundEnv::new(EnvConfig::stochastic());
    let mut obs = env.reset(&inst, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..4 {
        let n = obs.num_tasks();
        // partial schedules are accepted; missing tasks count as infeasible
        let mut s = random_schedule(&mut rng, n, obs.num_agents());
        s.decisions.truncate(rng.random_range(0..=n));
        let out = env.step(&s).unwrap();
        assert_eq!(out.info.feasible_set.len() + out.info.infeasible_set.len(), n);
        obs = out.observation;
    }
}

#[test]
fn reward_matches_independent_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let n = rng.random_range(2..=8);
        let p = random_problem(&mut rng, n, 3);
        let mut s = random_schedule(&mut rng, n, 3);
        s.decisions.truncate(rng.random_range(1..=n));
        let trace = simulate_dispatch(&p, &s, &p.durations).unwrap();
        assert_eq!(round_reward(&trace, &p.durations, 2.0), recompute_reward(&trace, &p.durations, 2.0));
    }
}

#[test]
fn more_feasible_tasks_never_score_lower() {
    // same durations on every agent, so feasible durations are assignment-free
    let p = SchedulingProblem {
        num_tasks: 3,
        num_robots: 2,
        num_humans: 0,
        durations: DurationMatrix::from_row_major(3, 2, vec![10.0, 10.0, 20.0, 20.0, 30.0, 30.0]).unwrap(),
        deadlines: [(2, 30.0)].into_iter().collect(),
        waits: vec![],
    };
    let good = Schedule::from_pairs([(2, 0), (0, 1), (1, 1)]);
    let bad = Schedule::from_pairs([(0, 0), (1, 0), (2, 0)]);
    let tg = simulate_dispatch(&p, &good, &p.durations).unwrap();
    let tb = simulate_dispatch(&p, &bad, &p.durations).unwrap();
    assert!(tg.feasible_set.len() > tb.feasible_set.len());
    assert!(round_reward(&tg, &p.durations, 2.0) >= round_reward(&tb, &p.durations, 2.0));
}
