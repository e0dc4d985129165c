//! Property tests for the softmin family: order, bounds, equivariance, the
//! gradient identity, and agreement with the entropy-regularized grid oracle.

use proptest::prelude::*;
use ssdrl_core::numeric::central_diff_grad;
use ssdrl_core::softmin::{entropy_regularized_min_oracle, softmin, softmin_weights, LambdaParam};

fn lam(v: f64) -> LambdaParam {
    LambdaParam::new(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn monotone_in_lambda(
        v in prop::collection::vec(-10.0f64..10.0, 2..6),
        l1 in -30.0f64..30.0,
        l2 in -30.0f64..30.0,
    ) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let a = softmin(&v, lam(lo)).unwrap();
        let b = softmin(&v, lam(hi)).unwrap();
        prop_assert!(a <= b + 1e-12, "softmin({lo}) = {a} > softmin({hi}) = {b}");
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(250))]

    #[test]
    fn bounded_by_min_and_max(
        v in prop::collection::vec(-50.0f64..50.0, 1..8),
        l in -100.0f64..100.0,
    ) {
        let s = softmin(&v, lam(l)).unwrap();
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s >= min - 1e-12 && s <= max + 1e-12);
    }

    #[test]
    fn translation_equivariance(
        v in prop::collection::vec(-10.0f64..10.0, 2..6),
        c in -20.0f64..20.0,
        l in -20.0f64..20.0,
    ) {
        let base = softmin(&v, lam(l)).unwrap();
        let shifted_v: Vec<f64> = v.iter().map(|x| x + c).collect();
        let shifted = softmin(&shifted_v, lam(l)).unwrap();
        prop_assert!((shifted - (base + c)).abs() <= 1e-10);
    }

    #[test]
    fn weights_sum_to_one_and_are_the_gradient(
        v in prop::collection::vec(-5.0f64..5.0, 2..5),
        l in prop_oneof![-20.0f64..-0.1, 0.1f64..20.0],
    ) {
        let w = softmin_weights(&v, lam(l)).unwrap();
        let total: f64 = w.as_slice().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let fd = central_diff_grad(|x| softmin(x, lam(l)).unwrap(), &v, 1e-6);
        for (wi, fdi) in w.as_slice().iter().zip(&fd) {
            prop_assert!(
                (wi - fdi).abs() <= 1e-6 * (1.0 + fdi.abs()),
                "weight {wi} vs finite difference {fdi}"
            );
        }
    }

    #[test]
    fn infinite_lambda_weights_are_indicators(
        v in prop::collection::vec(-5.0f64..5.0, 2..5),
    ) {
        let w = softmin_weights(&v, LambdaParam::NEG_INF).unwrap();
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        for (wi, vi) in w.as_slice().iter().zip(&v) {
            if *vi == min {
                prop_assert!(*wi > 0.0);
            } else {
                prop_assert_eq!(*wi, 0.0);
            }
        }
    }
}

#[test]
fn oracle_tracks_softmin_linearly_in_grid_step() {
    // |softmin - oracle(h)| <= C*h for dimensions up to 3
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let c = 1.0;
    for _ in 0..15 {
        let d = rng.random_range(2..=3usize);
        let b: Vec<f64> = (0..d).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
        let l = loop {
            let cand = 10.0 * rng.random::<f64>() - 5.0;
            if cand.abs() > 0.5 {
                break cand;
            }
        };
        let want = softmin(&b, lam(l)).unwrap();
        for h in [0.02, 0.01, 0.005] {
            let got = entropy_regularized_min_oracle(&b, lam(l), h).unwrap();
            assert!(
                (got - want).abs() <= c * h,
                "d={d} lambda={l} h={h}: oracle {got} vs softmin {want}"
            );
        }
    }
}
