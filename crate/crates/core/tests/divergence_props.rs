use byztree::{
    best_split_test_at_false_alarm, fusion_weights, gaussian_roc_point, grid_min_kld, kld_partial_wrt_separation,
    kld_vs_coverage, level_channel, min_level_kld, optimal_attack_strategy, total_kld, AttackConfig, FlipPair,
    FlipStrategy, GaussianSensorModel, OperatingPoint, TreeTopology,
};
use proptest::prelude::*;

fn kl(p: f64, q: f64) -> f64 {
    let term = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

fn point() -> impl Strategy<Value = OperatingPoint<f64>> {
    (0.01f64..0.6, 0.05f64..0.95).prop_map(|(pfa, gap)| {
        let pd = pfa + (1.0 - pfa) * gap;
        OperatingPoint::new(pd.min(0.99), pfa).unwrap()
    })
}

#[test]
fn six_two_tree_by_hand() {
    let t = TreeTopology::new(&[6, 2]).unwrap();
    let op = OperatingPoint::new(0.9, 0.1).unwrap();
    let report = total_kld(&t, &AttackConfig::new(vec![2, 1]), &FlipStrategy::always_flip(2), &[op, op]).unwrap();
    let mut expected = 0.0f64;
    for (n, beta) in [(6.0, 2.0 / 6.0), (12.0, 2.0 / 6.0 + 1.0 / 12.0)] {
        let pi10 = beta * 0.9 + (1.0 - beta) * 0.1;
        let pi11 = beta * 0.1 + (1.0 - beta) * 0.9;
        expected += n * kl(pi10, pi11);
    }
    assert!((report.total - expected).abs() < 1e-12, "{} vs {expected}", report.total);
}

#[test]
fn coverage_curve_is_convex_and_decreasing() {
    let op = OperatingPoint::new(0.8, 0.1).unwrap();
    let grid: Vec<f64> = (0..500).map(|i| i as f64 / 1000.0).collect();
    let curve = kld_vs_coverage(&op, &grid).unwrap();
    for w in curve.windows(2) {
        assert!(w[1].1 < w[0].1);
    }
    for w in curve.windows(3) {
        assert!(w[0].1 - 2.0 * w[1].1 + w[2].1 >= -1e-12);
    }
    assert!(kld_vs_coverage(&op, &[0.5]).is_err());
    assert_eq!(min_level_kld(&op, 0.5), 0.0);
}

#[test]
fn likelihood_ratio_test_wins_the_split_family() {
    for &(amp, pfa) in &[(1.0f64, 0.05f64), (2.0, 0.1), (0.5, 0.2), (1.5, 0.01)] {
        let (theta, best) = best_split_test_at_false_alarm(amp, pfa, 1001).unwrap();
        assert_eq!(theta, 1.0);
        let lambda = GaussianSensorModel::threshold_for_false_alarm(amp, pfa);
        let roc = gaussian_roc_point(&GaussianSensorModel { amplitude: amp, threshold: lambda }).unwrap();
        assert!((roc.p_false_alarm - pfa).abs() < 1e-9);
        assert!((roc.p_detect - best.p_detect).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// No single-level deviation from the prescribed strategy lowers the
    /// divergence.
    #[test]
    fn prescribed_strategy_is_a_minimum(t in 0.0f64..0.49, op in point(), p10 in 0.0f64..=1.0, p01 in 0.0f64..=1.0) {
        let alphas = [t];
        let opt = optimal_attack_strategy(&[t]).unwrap();
        let at_opt = kl_of(&alphas, &opt, &op);
        let dev = kl_of(&alphas, &FlipStrategy::new(vec![FlipPair::new(p10, p01)]).unwrap(), &op);
        prop_assert!(dev >= at_opt - 1e-12);
        prop_assert!((at_opt - min_level_kld(&op, t)).abs() < 1e-12);
    }

    #[test]
    fn divergence_falls_as_flipping_rises(t in 0.01f64..0.49, op in point(), p in 0.0f64..0.9, dp in 0.01f64..0.1) {
        let lo = kl_of(&[t], &FlipStrategy::uniform(1, FlipPair::new(p, p)), &op);
        let hi = kl_of(&[t], &FlipStrategy::uniform(1, FlipPair::new(p + dp, p + dp)), &op);
        prop_assert!(hi < lo);
    }

    #[test]
    fn grid_argmin_is_always_flip(b1 in 0u64..3, b2 in 0u64..4, op in point()) {
        let t = TreeTopology::new(&[6, 2]).unwrap();
        let config = AttackConfig::new(vec![b1, b2]);
        let alphas = config.fractions::<f64>(&t).unwrap();
        let cov = config.coverage::<f64>(&t).unwrap();
        prop_assume!(cov[1] < 0.5);
        let best = grid_min_kld(t.node_counts(), &alphas, &[op, op], 21).unwrap();
        let opt = optimal_attack_strategy(&cov).unwrap();
        let at_opt = total_kld(&t, &config, &opt, &[op, op]).unwrap().total;
        prop_assert!(best.kld >= at_opt - 1e-9);
        if b1 + b2 > 0 {
            prop_assert_eq!((best.p10, best.p01), (1.0, 1.0));
        }
    }

    /// Matches `N_k (1 − β10 − β01) (−π10/π11 + (1 − π10)/(1 − π11))`.
    #[test]
    fn separation_derivative(b1 in 0u64..3, b2 in 0u64..4, op in point(), level in 1usize..=2) {
        let t = TreeTopology::new(&[6, 2]).unwrap();
        let config = AttackConfig::new(vec![b1, b2]);
        prop_assume!(config.coverage::<f64>(&t).unwrap()[1] < 0.5);
        let alphas = config.fractions::<f64>(&t).unwrap();
        let s = FlipStrategy::always_flip(2);
        let points = [op, op];
        let fd = kld_partial_wrt_separation(t.node_counts(), &alphas, &s, &points, level, 1e-6).unwrap();
        let ch = level_channel(&alphas, &s, &op, level).unwrap();
        let n = t.node_counts()[level - 1] as f64;
        let exact = n * (1.0 - ch.beta10 - ch.beta01) * (-ch.pi10 / ch.pi11 + (1.0 - ch.pi10) / (1.0 - ch.pi11));
        prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0), "{} vs {}", fd, exact);
        prop_assert!(fd > 0.0);
    }

    #[test]
    fn weight_signs(t in 0.0f64..0.49, op in point()) {
        let ch = level_channel(&[t], &FlipStrategy::always_flip(1), &op, 1).unwrap();
        let (a1, a0) = fusion_weights(&ch);
        prop_assert!(a1 > 0.0);
        prop_assert!(a0 < 0.0);
    }
}

fn kl_of(alphas: &[f64], s: &FlipStrategy<f64>, op: &OperatingPoint<f64>) -> f64 {
    let ch = level_channel(alphas, s, op, 1).unwrap();
    kl(ch.pi10, ch.pi11)
}
