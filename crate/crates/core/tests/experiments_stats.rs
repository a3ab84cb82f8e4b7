use marginfer::experiments::{
    self, led_bayes_optimal, led_benchmark, led_rulebase, led_trial, LedOptions, SegmentTable,
    DIGITS, SEGMENTS,
};
use marginfer::inference::{EngineConfig, InferenceEngine};
use marginfer::rulebase::{ClassModel, RuleBase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn channel_flips_at_the_noise_rate_independently() {
    let table = SegmentTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let draws = 100_000;
    let mut flips = [0u64; SEGMENTS];
    let mut both_ab = 0u64;
    for _ in 0..draws {
        let digit = rng.random_range(0..DIGITS);
        let ev = led_trial(&table, digit, 0.1, &mut rng);
        let flipped: Vec<bool> = ev
            .values()
            .iter()
            .zip(table.pattern(digit))
            .map(|(a, b)| a != b)
            .collect();
        for (s, &f) in flipped.iter().enumerate() {
            flips[s] += f as u64;
        }
        both_ab += (flipped[0] && flipped[1]) as u64;
    }
    let total: u64 = flips.iter().sum();
    let rate = total as f64 / (draws * SEGMENTS as u64) as f64;
    assert!((rate - 0.10).abs() <= 0.005, "flip rate {rate}");
    // Correlation of the flip indicators of segments a and b.
    let pa = flips[0] as f64 / draws as f64;
    let pb = flips[1] as f64 / draws as f64;
    let pab = both_ab as f64 / draws as f64;
    let rho = (pab - pa * pb) / (pa * (1.0 - pa) * pb * (1.0 - pb)).sqrt();
    assert!(rho.abs() < 0.02, "ρ = {rho}");
}

#[test]
fn bayes_optimum_matches_enumeration() {
    let table = SegmentTable::default();
    // Independent enumeration over all 2⁷ received patterns.
    let exact = [
        (0.05, 0.8670322576562491),
        (0.1, 0.74002248),
        (0.2, 0.51257344),
    ];
    for (p, value) in exact {
        assert!(
            (led_bayes_optimal(&table, p).unwrap() - value).abs() < 1e-12,
            "p = {p}"
        );
    }
}

#[test]
fn benchmark_never_beats_bayes_optimum() {
    let options = LedOptions::default();
    for (k, p) in [0.0, 0.05, 0.1, 0.2].into_iter().enumerate() {
        let report = led_benchmark(20_000, p, 40 + k as u64, &options).unwrap();
        assert!(
            report.accuracy <= report.bayes_optimal + 3.0 * report.std_error.max(1e-12),
            "p = {p}: {} vs {}",
            report.accuracy,
            report.bayes_optimal
        );
        assert_eq!(report.confusion.iter().flatten().sum::<u64>(), 20_000);
        assert_eq!(report.per_digit.iter().sum::<u64>(), 20_000);
    }
}

#[test]
fn benchmark_is_reproducible() {
    let options = LedOptions::default();
    let a = led_benchmark(2_000, 0.1, 9, &options).unwrap();
    let b = led_benchmark(2_000, 0.1, 9, &options).unwrap();
    assert_eq!(a, b);
    let c = led_benchmark(2_000, 0.1, 10, &options).unwrap();
    assert_ne!(a.confusion, c.confusion);
}

#[test]
fn estimated_marginals_reach_similar_accuracy() {
    let options = LedOptions {
        estimate_from_samples: Some(20_000),
        ..LedOptions::default()
    };
    let report = led_benchmark(10_000, 0.1, 12, &options).unwrap();
    assert!(
        (report.accuracy - 0.74).abs() <= 0.03,
        "{}",
        report.accuracy
    );
}

#[test]
fn noiseless_display_classifies_every_digit() {
    let table = SegmentTable::default();
    let base = led_rulebase(&table, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(302);
    for digit in 0..DIGITS {
        let ev = led_trial(&table, digit, 0.0, &mut rng);
        let result = InferenceEngine::new(&base, &ev, &EngineConfig::default())
            .unwrap()
            .classify()
            .unwrap();
        assert_eq!(result.argmax, digit.to_string());
    }
}

#[test]
fn argmax_follows_floored_likelihood_times_prior() {
    let table = SegmentTable::default();
    let base = led_rulebase(&table, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let weights: Vec<f64> = (0..DIGITS).map(|_| rng.random_range(0.5..2.0)).collect();
    let total: f64 = weights.iter().sum();
    let priors: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let skewed = ClassModel::new(base.classes.classes().to_vec(), priors.clone()).unwrap();
    let base = RuleBase::new(base.space.clone(), base.rules.clone(), skewed).unwrap();
    let cfg = EngineConfig {
        check_nonnegativity: false,
        ..EngineConfig::default()
    };
    let mut decided = 0;
    for _ in 0..500 {
        let digit = rng.random_range(0..DIGITS);
        let ev = led_trial(&table, digit, 0.1, &mut rng);
        let engine = InferenceEngine::new(&base, &ev, &cfg).unwrap();
        let scores: Vec<f64> = (0..DIGITS)
            .map(|d| engine.likelihood(&d.to_string()).unwrap().value.max(0.0) * priors[d])
            .collect();
        let best = scores.iter().cloned().fold(0.0, f64::max);
        match engine.classify() {
            Ok(result) => {
                let expected = scores.iter().position(|&s| s == best).unwrap();
                assert_eq!(result.argmax, expected.to_string());
                let sum: f64 = result.posterior.values().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                decided += 1;
            }
            Err(_) => assert_eq!(best, 0.0),
        }
    }
    assert!(decided > 450);
}

#[test]
fn agreement_lengths_are_independent_streams() {
    // Dropping a length must not change the draws of the others.
    let all = experiments::agreement_study(&[4, 16, 64], 5_000, 21).unwrap();
    let first = experiments::agreement_study(&[4], 5_000, 21).unwrap();
    assert_eq!(all.records[0], first.records[0]);
    let mean = all.records.iter().map(|r| r.agreement).sum::<f64>() / 3.0;
    assert!((all.pooled - mean).abs() < 1e-15);
}

#[test]
fn invalid_experiment_inputs_rejected() {
    let options = LedOptions::default();
    assert!(led_benchmark(0, 0.1, 1, &options).is_err());
    assert!(led_benchmark(10, 0.7, 1, &options).is_err());
    assert!(experiments::agreement_study(&[6], 10, 1).is_err());
    assert!(experiments::agreement_study(&[1], 10, 1).is_err());
}
