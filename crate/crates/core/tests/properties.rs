use gpmidas::data::Horizon;
use gpmidas::evaluation::{
    dm_test, model_confidence_set, quantile_score, weighted_crps, McsConfig, Weighting,
};
use gpmidas::rng::stream;
use gpmidas::varimp::{kkt_violation, lasso_fit, rho_max};
use nalgebra::{DMatrix, DVector};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::Rng;

const WEIGHTINGS: [Weighting; 3] = [Weighting::Equal, Weighting::Left, Weighting::Right];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantile_score_is_nonnegative_and_zero_at_the_quantile(y in -50.0f64..50.0, q in -50.0f64..50.0, tau in 0.01f64..0.99) {
        prop_assert!(quantile_score(y, q, tau) >= 0.0);
        prop_assert_eq!(quantile_score(q, q, tau), 0.0);
    }

    #[test]
    fn crps_is_translation_invariant(draws in vec(-10.0f64..10.0, 5..200), y in -15.0f64..15.0, shift in -100.0f64..100.0) {
        let moved: Vec<f64> = draws.iter().map(|d| d + shift).collect();
        for w in WEIGHTINGS {
            let a = weighted_crps(&draws, y, w).unwrap();
            let b = weighted_crps(&moved, y + shift, w).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + shift.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn crps_scales_with_the_data(draws in vec(-10.0f64..10.0, 5..200), y in -15.0f64..15.0, c in 0.01f64..20.0) {
        let scaled: Vec<f64> = draws.iter().map(|d| d * c).collect();
        for w in WEIGHTINGS {
            let a = weighted_crps(&draws, y, w).unwrap();
            let b = weighted_crps(&scaled, y * c, w).unwrap();
            prop_assert!((a * c - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn dm_statistic_is_antisymmetric(seed in 0u64..10_000, n in 10usize..80, h in 0usize..3, harvey: bool) {
        let mut rng = stream(seed, &[]);
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
        let c: Vec<f64> = (0..n).map(|_| 5.0 * rng.random::<f64>()).collect();
        let horizon = Horizon::new(h, 3);
        let ab = dm_test(&a, &b, horizon, harvey).unwrap();
        let ba = dm_test(&b, &a, horizon, harvey).unwrap();
        prop_assert!((ab.statistic + ba.statistic).abs() < 1e-10);
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-10);
        // A loss shared by both models leaves the differential unchanged.
        let a2: Vec<f64> = a.iter().zip(&c).map(|(x, y)| x + y).collect();
        let b2: Vec<f64> = b.iter().zip(&c).map(|(x, y)| x + y).collect();
        let shifted = dm_test(&a2, &b2, horizon, harvey).unwrap();
        prop_assert!((shifted.statistic - ab.statistic).abs() < 1e-8 * (1.0 + ab.statistic.abs()));
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }

    #[test]
    fn mcs_partitions_the_models(seed in 0u64..10_000, t in 20usize..60, j in 2usize..5) {
        let mut rng = stream(seed, &[0]);
        let losses: Vec<Vec<f64>> = (0..t)
            .map(|_| (0..j).map(|m| m as f64 * 0.1 + rng.random::<f64>()).collect())
            .collect();
        let cfg = McsConfig { replications: 200, ..McsConfig::default() };
        let r = model_confidence_set(&losses, &cfg, &mut stream(seed, &[1])).unwrap();
        prop_assert!(!r.included.is_empty());
        prop_assert_eq!(r.included.len() + r.eliminated.len(), j);
        let mut all: Vec<usize> = r.included.iter().chain(&r.eliminated).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..j).collect::<Vec<_>>());
        for m in 0..j {
            prop_assert_eq!(r.inclusion[m], r.included.contains(&m));
            prop_assert!((0.0..=1.0).contains(&r.p_values[m]));
            prop_assert_eq!(r.p_values[m] >= cfg.alpha, r.inclusion[m]);
        }
        let again = model_confidence_set(&losses, &cfg, &mut stream(seed, &[1])).unwrap();
        prop_assert_eq!(r, again);
    }

    #[test]
    fn lasso_solutions_satisfy_kkt(seed in 0u64..10_000, n in 15usize..50, p in 1usize..12, frac in 0.001f64..1.0) {
        let mut rng = stream(seed, &[]);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] * 2.0 + rng.random::<f64>());
        let rmax = rho_max(&x, &y);
        let rho = frac * rmax;
        let (b0, b) = lasso_fit(&x, &y, rho).unwrap();
        prop_assert!(kkt_violation(&x, &y, rho, b0, &b) < 1e-6 * (1.0 + rmax));
        let (_, zero) = lasso_fit(&x, &y, rmax * 1.0001).unwrap();
        prop_assert!(zero.iter().all(|v| *v == 0.0));
    }
}
