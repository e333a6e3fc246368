use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use teamsched_core::workers::{
    estimate_duration, human_mean_duration, record_execution, sample_human_duration, CurveParams,
    CurveSampling, EstimatorConfig, EstimatorState, HumanCurve,
};

fn one_task(p: CurveParams) -> HumanCurve {
    HumanCurve::new(vec![p])
}

/// Mean of `clamp(X, lo, hi)` for `X ~ N(mu, sd)`.
fn clamped_normal_mean(mu: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let a = (lo - mu) / sd;
    let b = (hi - mu) / sd;
    lo * n.cdf(a) + hi * (1.0 - n.cdf(b)) + mu * (n.cdf(b) - n.cdf(a)) + sd * (n.pdf(a) - n.pdf(b))
}

#[test]
fn sample_mean_matches_clamped_normal() {
    // At zero experience the draw is c' + k', normal with the summed variance;
    // the upper clamp binds for a sizeable share of draws.
    let p = CurveParams { c: 35.0, k: 60.0, beta: 0.4, sd_c: 8.0, sd_k: 6.0, sd_beta: 0.04 };
    let h = one_task(p);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws: Vec<f64> = (0..100_000).map(|_| sample_human_duration(&h, 0, true, &mut rng)).collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let expected = clamped_normal_mean(95.0, 10.0, 10.0, 100.0);
    assert!((mean - expected).abs() < 3.0 * se, "mean {mean} expected {expected} se {se}");
    assert!(draws.iter().all(|&d| (10.0..=100.0).contains(&d)));
}

#[test]
fn zero_noise_sample_equals_clamped_mean() {
    let p = CurveParams { c: 4.0, k: 1.0, beta: 0.5, sd_c: 0.0, sd_k: 0.0, sd_beta: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(sample_human_duration(&one_task(p), 0, true, &mut rng), 10.0);
    assert_eq!(sample_human_duration(&one_task(p), 0, false, &mut rng), 10.0);
}

#[test]
fn estimator_variance_ratio_follows_decay() {
    let cfg = EstimatorConfig::default();
    let h = one_task(CurveParams { c: 55.0, k: 0.0, beta: 0.0, sd_c: 0.0, sd_k: 0.0, sd_beta: 0.0 });
    let variance = |reps: usize, seed| {
        let mut e = EstimatorState::default();
        for _ in 0..reps {
            record_execution(&mut e, 0, 0, 55.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..100_000).map(|_| estimate_duration(&e, &cfg, &h, 0, 0, &mut rng)).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
    };
    let ratio = variance(0, 1) / variance(3, 2);
    let expected = (2.0 * cfg.lambda * 3.0).exp();
    assert!((ratio / expected - 1.0).abs() < 0.03, "ratio {ratio} expected {expected}");
}

#[test]
fn many_repetitions_converge_to_true_mean() {
    let cfg = EstimatorConfig::default();
    let h = one_task(CurveParams { c: 30.0, k: 10.0, beta: 0.3, sd_c: 0.0, sd_k: 0.0, sd_beta: 0.0 });
    let mut e = EstimatorState::default();
    for _ in 0..80 {
        record_execution(&mut e, 0, 0, 40.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let est = estimate_duration(&e, &cfg, &h, 0, 0, &mut rng);
    assert!((est - 40.0).abs() < 1e-9);
}

#[test]
fn recording_is_isolated_per_pair() {
    let mut e = EstimatorState::default();
    record_execution(&mut e, 1, 1, 30.0);
    record_execution(&mut e, 1, 1, 28.0);
    assert_eq!(e.repetitions(1, 1), 2);
    assert_eq!(e.observations(1, 1), &[30.0, 28.0]);
    assert_eq!(e.repetitions(1, 2), 0);
    assert_eq!(e.repetitions(0, 1), 0);
}

proptest! {
    #[test]
    fn derived_curves_learn_monotonically(d0 in 10.0f64..=100.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = CurveSampling::default().derive(d0, &mut rng);
        let h = one_task(p);
        let mut prev = human_mean_duration(&h, 0, 0);
        prop_assert!((prev - d0).abs() < 1e-9);
        for i in 1..10 {
            let m = human_mean_duration(&h, 0, i);
            prop_assert!(m < prev);
            prop_assert!(m >= p.c);
            prev = m;
        }
    }

    #[test]
    fn samples_stay_in_range(d0 in 10.0f64..=100.0, exp in 0u32..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sampling = CurveSampling { relative_sd: 0.5, ..CurveSampling::default() };
        let mut h = one_task(sampling.derive(d0, &mut rng));
        h.experience[0] = exp;
        for _ in 0..50 {
            let d = sample_human_duration(&h, 0, true, &mut rng);
            prop_assert!((10.0..=100.0).contains(&d));
        }
    }

    #[test]
    fn estimator_noise_shrinks_with_repetitions(r in 0u32..30) {
        let cfg = EstimatorConfig::default();
        prop_assert!(cfg.noise_sd(r + 1) < cfg.noise_sd(r));
    }
}
