use proptest::prelude::*;

use socdyn::generator::{apply_g_tilde_n, GeneratorPoint, Poly2};
use socdyn::stats::{ks_one_sample, ks_p_value, ks_two_sample};
use socdyn::{LimitRunConfig, PhiModel, QuarticLaw, StarDensity};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quartic_cdf_is_monotone_and_symmetric(a in -6.0f64..6.0, b in -6.0f64..6.0, s2 in 0.3f64..3.0) {
        let law = QuarticLaw::new(s2).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(law.cdf(lo) <= law.cdf(hi) + 1e-14);
        prop_assert!((law.cdf(a) + law.cdf(-a) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn log_density_is_permutation_invariant(xs in prop::collection::vec(-3.0f64..3.0, 2..40), rot in 0usize..40) {
        let model = StarDensity::new(PhiModel::gaussian(1.0).unwrap(), xs.len()).unwrap();
        let mut ys = xs.clone();
        ys.rotate_left(rot % xs.len());
        let (a, b) = (model.log_density(&xs).unwrap(), model.log_density(&ys).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn ks_statistics_stay_in_range(xs in prop::collection::vec(-5.0f64..5.0, 1..200), ys in prop::collection::vec(-5.0f64..5.0, 1..200)) {
        let law = QuarticLaw::new(1.0).unwrap();
        let one = ks_one_sample(&xs, |s| law.cdf(s)).unwrap();
        let two = ks_two_sample(&xs, &ys).unwrap();
        for r in [one, two] {
            prop_assert!((0.0..=1.0).contains(&r.ks_statistic));
            prop_assert!((0.0..=1.0).contains(&r.p_value_approx));
        }
    }

    #[test]
    fn ks_p_value_is_decreasing_in_the_statistic(d1 in 0.0f64..1.0, d2 in 0.0f64..1.0, m in 5usize..5000) {
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(ks_p_value(hi, m as f64) <= ks_p_value(lo, m as f64) + 1e-12);
    }

    #[test]
    fn generator_is_linear(x in -2.0f64..2.0, y in -1.0f64..1.0, c in -3.0f64..3.0, n in 2usize..500) {
        let p = GeneratorPoint::new(x, y, n, 1.0).unwrap();
        let f = Poly2::new(vec![(1.0, 2, 1), (0.5, 0, 2)]);
        let g = Poly2::new(vec![(1.0, 3, 0), (-2.0, 1, 1)]);
        let sum = Poly2::new(vec![(1.0, 2, 1), (0.5, 0, 2), (c, 3, 0), (-2.0 * c, 1, 1)]);
        let lhs = apply_g_tilde_n(&sum, &p).unwrap();
        let rhs = apply_g_tilde_n(&f, &p).unwrap() + c * apply_g_tilde_n(&g, &p).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn limit_runs_are_reproducible(seed in 0u64..1000) {
        let cfg = LimitRunConfig::new(1.0, 0.01, 0.5, 8, seed);
        let a = socdyn::limit::simulate_limit(&cfg).unwrap();
        let b = socdyn::limit::simulate_limit(&cfg).unwrap();
        prop_assert_eq!(a.terminal, b.terminal);
    }
}
