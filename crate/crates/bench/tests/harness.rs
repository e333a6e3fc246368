use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use teamsched_bench::report::{append_summaries, read_summaries};
use teamsched_bench::{
    evaluate, render_table, report, worst_case_makespan, BenchError, EvalConfig, EvalResult, Registry, RunSummary,
};
use teamsched_core::baselines::{EdfScheduler, GaScheduler};
use teamsched_core::probgen::{generate_problem, GeneratorConfig, Scale};
use teamsched_core::{DurationMatrix, ProblemInstance, SchedulingProblem};
use teamsched_policy::{HybridNet, PolicyConfig};

fn robots_only(durations: &[f64], num_tasks: usize, deadlines: &[(usize, f64)]) -> ProblemInstance {
    SchedulingProblem {
        num_tasks,
        num_robots: durations.len() / num_tasks,
        num_humans: 0,
        durations: DurationMatrix::from_row_major(num_tasks, durations.len() / num_tasks, durations.to_vec()).unwrap(),
        deadlines: deadlines.iter().copied().collect::<BTreeMap<_, _>>(),
        waits: Vec::new(),
    }
    .into()
}

fn tiny_net() -> Arc<HybridNet> {
    Arc::new(HybridNet::new(PolicyConfig {
        hidden: 8,
        heads: 2,
        lstm: 4,
        selector_hidden: 4,
        ..PolicyConfig::default()
    }))
}

#[test]
fn unconstrained_problems_score_their_makespan() {
    let data = vec![
        robots_only(&[10.0, 20.0, 30.0, 15.0, 12.0, 12.0, 40.0, 35.0], 4, &[]),
        robots_only(&[25.0, 11.0, 17.0, 19.0, 33.0, 14.0], 3, &[]),
    ];
    let r = evaluate(&EdfScheduler, &data, &EvalConfig::new(false, 0)).unwrap();
    assert_eq!(r.rounds.len(), 8);
    assert_eq!(r.feasibility(), 1.0);
    // robots without waits run back to back, so each makespan is the busiest agent's load
    let mut total = 0.0;
    for rec in &r.rounds {
        let d = &data[rec.problem].problem.durations;
        let mut load = vec![0.0; d.num_agents()];
        for (&t, &a) in &rec.trace.assignment {
            load[a] += d.get(t, a);
        }
        total += load.iter().cloned().fold(0.0, f64::max);
    }
    assert!((r.adjusted_makespan() - total / 8.0).abs() < 1e-9);
}

#[test]
fn unmeetable_deadlines_score_the_worst_case() {
    let durs = [10.0, 20.0, 30.0, 15.0, 12.0, 18.0];
    let data = vec![robots_only(&durs, 3, &[(0, 1.0), (1, 1.0), (2, 1.0)])];
    let r = evaluate(&EdfScheduler, &data, &EvalConfig::new(false, 0)).unwrap();
    assert_eq!(r.feasibility(), 0.0);
    assert_eq!(r.adjusted_makespan(), 20.0 + 30.0 + 18.0);
    assert_eq!(worst_case_makespan(&data[0].problem.durations), 68.0);
}

#[test]
fn feasibility_is_recounted_from_stored_traces() {
    let data: Vec<_> = (0..6).map(|s| generate_problem(Scale::Small, s, &GeneratorConfig::default()).instance).collect();
    let r = evaluate(&EdfScheduler, &data, &EvalConfig::new(true, 3)).unwrap();
    let back: EvalResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
    let feasible = back.rounds.iter().filter(|x| x.trace.infeasible_set.is_empty()).count();
    let s = RunSummary::from_result(&back, Scale::Small, None, None);
    assert_eq!(s.feasible_rounds, feasible);
    assert_eq!(s.rounds, 24);
    assert_eq!(s.problems, 6);
    assert_eq!(s.feasibility(), r.feasibility());
}

#[test]
fn every_method_sees_the_same_environment() {
    let data: Vec<_> = (0..4).map(|s| generate_problem(Scale::Small, 40 + s, &GeneratorConfig::default()).instance).collect();
    let cfg = EvalConfig::new(true, 9);
    let edf = evaluate(&EdfScheduler, &data, &cfg).unwrap();
    let ga = evaluate(&GaScheduler::default(), &data, &cfg).unwrap();
    // first-round realizations do not depend on the schedule
    for (a, b) in edf.rounds.iter().zip(&ga.rounds).filter(|(a, _)| a.round == 0) {
        assert_eq!(a.worst_case, b.worst_case);
    }
    assert!(edf.same_outcome(&evaluate(&EdfScheduler, &data, &cfg).unwrap()));
}

#[test]
fn registry_resolves_methods_by_name() {
    let base = Registry::standard(None, 8);
    assert_eq!(base.names().collect::<Vec<_>>(), vec!["edf", "ga"]);
    assert!(matches!(base.get("hybridnet"), Err(BenchError::MissingCheckpoint { .. })));
    assert!(matches!(base.get("hetgat-interactive"), Err(BenchError::MissingCheckpoint { .. })));
    assert!(matches!(base.get("sjf"), Err(BenchError::UnknownMethod { .. })));
    let full = Registry::standard(Some(tiny_net()), 4);
    assert_eq!(full.names().count(), 4);
    for name in teamsched_bench::METHODS {
        assert_eq!(full.get(name).unwrap().name(), name);
    }
}

#[test]
fn interactive_method_refuses_stochastic_evaluation() {
    let data = vec![generate_problem(Scale::Small, 1, &GeneratorConfig::default()).instance];
    let reg = Registry::standard(Some(tiny_net()), 2);
    let s = reg.get("hetgat-interactive").unwrap();
    assert!(matches!(
        evaluate(s, &data, &EvalConfig::new(true, 0)),
        Err(BenchError::IncompatibleMode { .. })
    ));
    let ok = evaluate(s, &data, &EvalConfig::new(false, 0)).unwrap();
    assert_eq!(ok.rounds.len(), 4);
    let hn = evaluate(reg.get("hybridnet").unwrap(), &data, &EvalConfig::new(true, 0)).unwrap();
    assert_eq!(hn.rounds.len(), 4);
}

fn run(method: &str, scale: Scale, seed: u64, makespan: f64, feasible_rounds: usize, runtime: f64) -> RunSummary {
    RunSummary {
        method: method.into(),
        train_scale: None,
        batch: None,
        dataset_scale: scale,
        seed,
        problems: 10,
        rounds: 40,
        feasible_rounds,
        adjusted_makespan: makespan,
        runtime,
    }
}

#[test]
fn single_seed_report_has_no_spread() {
    let rows = report(&[run("edf", Scale::Small, 0, 300.0, 20, 0.5)]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].adjusted_makespan_sem, None);
    assert_eq!(rows[0].feasibility_sem, None);
    assert_eq!(rows[0].runtime_sd, None);
    assert_eq!(rows[0].feasibility_mean, 50.0);
}

#[test]
fn two_seeds_pool_like_manual_arithmetic() {
    let rows = report(&[run("ga", Scale::Medium, 0, 300.0, 10, 1.0), run("ga", Scale::Medium, 1, 310.0, 14, 2.0)]);
    let r = &rows[0];
    assert_eq!(r.seeds, 2);
    assert_eq!(r.adjusted_makespan_mean, 305.0);
    // sem of two values is half their distance; sd is that distance over √2
    assert!((r.adjusted_makespan_sem.unwrap() - 5.0).abs() < 1e-12);
    assert_eq!(r.feasibility_mean, 30.0);
    assert!((r.feasibility_sem.unwrap() - 5.0).abs() < 1e-12);
    assert!((r.runtime_sd.unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn report_is_sorted_by_dataset_then_method() {
    let runs = vec![
        run("hybridnet", Scale::Large, 0, 1.0, 1, 0.1),
        run("edf", Scale::Large, 0, 1.0, 1, 0.1),
        run("ga", Scale::Small, 0, 1.0, 1, 0.1),
        run("edf", Scale::Medium, 0, 1.0, 1, 0.1),
        run("edf", Scale::Small, 0, 1.0, 1, 0.1),
    ];
    let order: Vec<(Scale, String)> = report(&runs).into_iter().map(|r| (r.dataset_scale, r.method)).collect();
    let expected = [
        (Scale::Small, "edf"),
        (Scale::Small, "ga"),
        (Scale::Medium, "edf"),
        (Scale::Large, "edf"),
        (Scale::Large, "hybridnet"),
    ];
    assert_eq!(order, expected.map(|(s, m)| (s, m.to_string())).to_vec());
    let table = render_table(&report(&runs));
    assert_eq!(table.lines().count(), 2 + runs.len());
    assert!(table.lines().nth(2).unwrap().starts_with("small"));
}

#[test]
fn summaries_append_and_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.csv");
    let a = run("edf", Scale::Small, 0, 250.5, 12, 0.01);
    let mut b = run("hybridnet", Scale::Large, 4, 2000.25, 3, 1.5);
    b.train_scale = Some(Scale::Small);
    b.batch = Some(16);
    append_summaries(&path, std::slice::from_ref(&a)).unwrap();
    append_summaries(&path, std::slice::from_ref(&b)).unwrap();
    assert_eq!(read_summaries(&path).unwrap(), vec![a, b]);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("method,")).count(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn adjusted_makespan_never_exceeds_worst_case(seed in any::<u64>(), stochastic in any::<bool>()) {
        let data = vec![generate_problem(Scale::Small, seed, &GeneratorConfig::default()).instance];
        let cfg = EvalConfig::new(stochastic, seed);
        for r in [evaluate(&EdfScheduler, &data, &cfg).unwrap(), evaluate(&GaScheduler::default(), &data, &cfg).unwrap()] {
            for rec in &r.rounds {
                prop_assert!(rec.adjusted_makespan() <= rec.worst_case + 1e-9);
            }
            let worst = r.rounds.iter().map(|x| x.worst_case).sum::<f64>() / r.rounds.len() as f64;
            prop_assert!(r.adjusted_makespan() <= worst + 1e-9);
        }
    }
}
