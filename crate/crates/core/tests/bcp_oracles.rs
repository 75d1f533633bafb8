//! Changepoint model checked against independent brute-force oracles.

use bcpflood_core::bcp::{
    block_sums, conditional_change_odds, exact_stationary, gibbs_pass, incomplete_beta_ratio,
    run_bcp, variance_ratio_integral, BcpConfig, ChannelMode, PartitionState, QuadratureRule,
    TimeSeriesSample,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{brute_block_sums, dense_beta_ratio, dense_w_integral};

/// Direct evaluation of the conditional log odds with dense quadrature.
fn direct_log_odds(x: &[f64], indicators: &[bool], i: usize, gamma: f64, lambda: f64) -> f64 {
    let n = x.len();
    let mut merged = indicators.to_vec();
    merged[i] = false;
    let mut split = indicators.to_vec();
    split[i] = true;
    let b = merged.iter().filter(|u| **u).count() + 1;
    let (w0, b0) = brute_block_sums(x, &merged);
    let (w1, b1) = brute_block_sums(x, &split);
    dense_beta_ratio(b, n, gamma) + dense_w_integral(w1, b1, n, lambda, b as u32)
        - dense_w_integral(w0, b0, n, lambda, b as u32 - 1)
}

fn mask(m: usize, bits: u32) -> Vec<bool> {
    (0..m).map(|i| bits >> i & 1 == 1).collect()
}

#[test]
fn block_sums_match_double_loop() {
    let x = [-1.0, -1.0, 1.0, 1.0, 3.0];
    let ind = [false, true, false, true];
    let s = TimeSeriesSample::univariate(&x);
    let p = PartitionState::from_indicators(&s, &ind).unwrap();
    let (w, b) = block_sums(&s, &p).unwrap();
    let (bw, bb) = brute_block_sums(&x, &ind);
    assert!((w - bw).abs() <= 1e-12 * bw.max(1.0), "{w} vs {bw}");
    assert!((b - bb).abs() <= 1e-12 * bb, "{b} vs {bb}");
    // blocks {-1,-1}, {1,1}, {3}: W = 0, grand mean 0.6, B = 2*2.56 + 2*0.16 + 5.76
    assert_eq!(bw, 0.0);
    assert!((bb - 11.2).abs() < 1e-12);
}

#[test]
fn beta_ratio_matches_dense_quadrature() {
    let got = incomplete_beta_ratio(2, 13, 0.2).unwrap();
    let want = dense_beta_ratio(2, 13, 0.2);
    assert!(((got - want).exp() - 1.0).abs() < 1e-8, "{got} vs {want}");
}

#[test]
fn w_integral_matches_dense_quadrature() {
    let rule = QuadratureRule::new(64).unwrap();
    let got = variance_ratio_integral(3.5, 7.1, 12, 0.2, 3, &rule).unwrap();
    let want = dense_w_integral(3.5, 7.1, 12, 0.2, 3);
    assert!(((got - want).exp() - 1.0).abs() < 1e-8, "{got} vs {want}");
}

#[test]
fn conditional_odds_match_direct_evaluation() {
    // Noisy step: exact steps make W vanish in the split partition and the
    // odds infinite, which is covered separately.
    let x = [-1.1, -0.9, -1.0, 1.05, 0.95, 1.0];
    let s = TimeSeriesSample::univariate(&x);
    let cfg = BcpConfig::default();
    let p = PartitionState::new(&s);
    for i in [0, 2, 4] {
        let got = conditional_change_odds(i, &s, &p, &cfg).unwrap();
        let want = direct_log_odds(&x, &[false; 5], i, 0.2, 0.2);
        assert!((got - want).abs() < 1e-6, "i = {i}: {got} vs {want}");
    }
    let ind = [true, false, false, true, false];
    let p = PartitionState::from_indicators(&s, &ind).unwrap();
    let got = conditional_change_odds(2, &s, &p, &cfg).unwrap();
    let want = direct_log_odds(&x, &ind, 2, 0.2, 0.2);
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
}

#[test]
fn exact_step_break_has_infinite_odds() {
    let s = TimeSeriesSample::univariate(&[-1.0, -1.0, -1.0, 1.0, 1.0, 1.0]);
    let cfg = BcpConfig::default();
    let p = PartitionState::new(&s);
    assert_eq!(
        conditional_change_odds(2, &s, &p, &cfg).unwrap(),
        f64::INFINITY
    );
    assert!(conditional_change_odds(0, &s, &p, &cfg)
        .unwrap()
        .is_finite());
    // Refining an already exact partition adds no evidence.
    let p = PartitionState::from_indicators(&s, &[false, false, true, false, false]).unwrap();
    assert_eq!(
        conditional_change_odds(0, &s, &p, &cfg).unwrap(),
        f64::NEG_INFINITY
    );
}

#[test]
fn evidence_grows_with_step_height() {
    let jitter = [0.03, -0.02, -0.01, 0.02, -0.03, 0.01];
    let cfg = BcpConfig::default();
    let mut last = f64::NEG_INFINITY;
    let mut last_exact = f64::NEG_INFINITY;
    for a in [0.5, 1.0, 2.0, 4.0] {
        let x: Vec<f64> = (0..6)
            .map(|t| if t < 3 { -a } else { a } + jitter[t])
            .collect();
        let s = TimeSeriesSample::univariate(&x);
        let v = conditional_change_odds(2, &s, &PartitionState::new(&s), &cfg).unwrap();
        assert!(v >= last, "a = {a}: {v} < {last}");
        last = v;

        let x: Vec<f64> = (0..6).map(|t| if t < 3 { -a } else { a }).collect();
        let s = TimeSeriesSample::univariate(&x);
        let v = conditional_change_odds(2, &s, &PartitionState::new(&s), &cfg).unwrap();
        assert!(v >= last_exact);
        last_exact = v;
    }
}

#[test]
fn two_observation_oracle_by_hand() {
    let s = TimeSeriesSample::univariate(&[0.0, 1.0]);
    let cfg = BcpConfig::default();
    let lo = conditional_change_odds(0, &s, &PartitionState::new(&s), &cfg).unwrap();
    let p = 1.0 / (1.0 + (-lo).exp());
    let stationary = exact_stationary(&s, &cfg).unwrap();
    assert!((stationary[0] - p).abs() < 1e-12);
    assert!((p - 0.1).abs() < 1e-12);
}

fn noisy_step6() -> TimeSeriesSample {
    TimeSeriesSample::univariate(&[-1.05, -0.95, -1.0, 1.02, 0.97, 1.01])
}

#[test]
fn gibbs_pass_frequencies_match_stationary() {
    let cfg = BcpConfig::default();
    for s in [
        TimeSeriesSample::univariate(&[-1.0, -1.0, -1.0, 1.0, 1.0, 1.0]),
        noisy_step6(),
        TimeSeriesSample::univariate(&[0.2, -0.4, 0.9, 0.1, 1.3, 0.6]),
    ] {
        let oracle = exact_stationary(&s, &cfg).unwrap();
        let mut p = PartitionState::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let passes = 100_000;
        let mut hits = [0usize; 5];
        for _ in 0..passes {
            gibbs_pass(&s, &mut p, &cfg, &mut rng).unwrap();
            for (h, &u) in hits.iter_mut().zip(p.indicators()) {
                *h += usize::from(u);
            }
        }
        let freq = hits[2] as f64 / passes as f64;
        assert!((freq - oracle[2]).abs() < 0.01, "{freq} vs {}", oracle[2]);
    }
}

#[test]
fn run_bcp_matches_stationary_on_step_series() {
    let cfg = BcpConfig {
        iterations: 50_000,
        burn_in: 50,
        seed: 5,
        ..Default::default()
    };
    for s in [
        TimeSeriesSample::univariate(&[-1.0, -1.0, -1.0, 1.0, 1.0, 1.0]),
        noisy_step6(),
    ] {
        let oracle = exact_stationary(&s, &cfg).unwrap();
        let r = run_bcp(&s, &cfg).unwrap();
        for (got, want) in r.change_probability.iter().zip(&oracle) {
            assert!((got - want).abs() <= 0.02, "{got} vs {want}");
        }
    }
}

#[test]
fn pooled_and_max_modes_match_stationary() {
    let vv = [-8.1, -7.6, -8.4, -7.9, -8.2, -15.3, -15.9];
    let vh = [-15.2, -14.8, -15.6, -15.1, -14.9, -20.2, -21.0];
    let s = TimeSeriesSample::from_channels(&[&vv, &vh]).unwrap();
    for mode in [ChannelMode::Pooled, ChannelMode::PerChannelMax] {
        let cfg = BcpConfig {
            iterations: 50_000,
            channel_mode: mode,
            seed: 2,
            ..Default::default()
        };
        let oracle = exact_stationary(&s, &cfg).unwrap();
        let r = run_bcp(&s, &cfg).unwrap();
        for (got, want) in r.change_probability.iter().zip(&oracle) {
            assert!((got - want).abs() <= 0.02, "{mode:?}: {got} vs {want}");
        }
        assert!(oracle[4] > 0.9, "{mode:?}: {oracle:?}");
    }
}

#[test]
fn cache_coherent_after_many_passes() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let x: Vec<f64> = (0..14)
        .map(|t| if t > 8 { 2.0 } else { 0.0 } + rng.random::<f64>())
        .collect();
    let s = TimeSeriesSample::univariate(&x);
    let cfg = BcpConfig::default();
    let mut p = PartitionState::new(&s);
    for _ in 0..2_000 {
        gibbs_pass(&s, &mut p, &cfg, &mut rng).unwrap();
        assert!(p.max_cache_error(&s) <= 1e-10);
        assert_eq!(
            p.block_count(),
            1 + p.indicators().iter().filter(|u| **u).count()
        );
    }
}

#[test]
fn run_is_reproducible() {
    let s = TimeSeriesSample::univariate(&[0.3, 0.1, -0.2, 0.5, 0.4, -1.9, -2.2, -2.0]);
    let cfg = BcpConfig {
        seed: 1234,
        ..Default::default()
    };
    assert_eq!(run_bcp(&s, &cfg).unwrap(), run_bcp(&s, &cfg).unwrap());
    let other = run_bcp(
        &s,
        &BcpConfig {
            seed: 4321,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_eq!(other.sweeps_used, 500);
}

fn series_strategy() -> impl Strategy<Value = (Vec<f64>, u32)> {
    (3usize..10).prop_flat_map(|n| (prop::collection::vec(-5.0f64..5.0, n), 0u32..(1 << (n - 1))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variance_decomposes((x, bits) in series_strategy()) {
        let s = TimeSeriesSample::univariate(&x);
        let ind = mask(x.len() - 1, bits);
        let p = PartitionState::from_indicators(&s, &ind).unwrap();
        let (w, b) = block_sums(&s, &p).unwrap();
        let tss = s.total_sum_of_squares();
        prop_assert!(w >= 0.0 && b >= 0.0);
        prop_assert!((w + b - tss).abs() <= 1e-10 * tss.max(1e-300));
    }

    #[test]
    fn pooled_variance_decomposes((x, bits) in series_strategy(), shift in -3.0f64..3.0) {
        let y: Vec<f64> = x.iter().rev().map(|v| 2.0 * v + shift).collect();
        let s = TimeSeriesSample::from_channels(&[&x, &y]).unwrap();
        let ind = mask(x.len() - 1, bits);
        let p = PartitionState::from_indicators(&s, &ind).unwrap();
        let (w, b) = block_sums(&s, &p).unwrap();
        // standardized channels each contribute n to the total
        let tss = 2.0 * x.len() as f64;
        prop_assert!((w + b - tss).abs() <= 1e-10 * tss);
    }

    #[test]
    fn odds_are_shift_and_scale_invariant(
        (x, bits) in series_strategy(),
        shift in -100.0f64..100.0,
        scale in 0.01f64..100.0,
    ) {
        let s = TimeSeriesSample::univariate(&x);
        let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let ss = TimeSeriesSample::univariate(&shifted);
        let sk = TimeSeriesSample::univariate(&scaled);
        let ind = mask(x.len() - 1, bits);
        let cfg = BcpConfig::default();
        for i in 0..ind.len() {
            let base = conditional_change_odds(i, &s, &PartitionState::from_indicators(&s, &ind).unwrap(), &cfg).unwrap();
            let a = conditional_change_odds(i, &ss, &PartitionState::from_indicators(&ss, &ind).unwrap(), &cfg).unwrap();
            let b = conditional_change_odds(i, &sk, &PartitionState::from_indicators(&sk, &ind).unwrap(), &cfg).unwrap();
            if base.is_finite() {
                prop_assert!((a - base).abs() <= 1e-9, "shift {i}: {a} vs {base}");
                prop_assert!((b - base).abs() <= 1e-9, "scale {i}: {b} vs {base}");
            } else {
                prop_assert_eq!(a, base);
                prop_assert_eq!(b, base);
            }
        }
    }
}
