use proptest::prelude::*;

use selmi::pooling::rubin_combine;
use selmi::stats::{inverse_mills, mills_delta, norm_cdf, norm_quantile, t_critical};

proptest! {
    #[test]
    fn normal_cdf_is_symmetric(x in -30.0f64..30.0) {
        prop_assert!((norm_cdf(x) + norm_cdf(-x) - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn mills_ratio_respects_its_bounds(x in -30.0f64..30.0) {
        let l = inverse_mills(x, true);
        prop_assert!(l > 0.0);
        prop_assert!(l + x > 0.0);
        if x < 0.0 {
            // Classical Mills-ratio bounds for the lower tail.
            prop_assert!(l < -x - 1.0 / x);
        }
    }

    #[test]
    fn mills_ratio_is_decreasing(x in -30.0f64..29.9, step in 1e-3f64..0.1) {
        prop_assert!(inverse_mills(x + step, true) < inverse_mills(x, true));
    }

    #[test]
    fn mills_delta_lies_in_the_unit_interval(x in -30.0f64..30.0, selected in any::<bool>()) {
        let d = mills_delta(x, selected);
        prop_assert!(d > 0.0 && d < 1.0, "delta({x}, {selected}) = {d}");
    }

    #[test]
    fn unselected_branch_mirrors_the_selected_one(x in -30.0f64..30.0) {
        prop_assert!((inverse_mills(x, false) + inverse_mills(-x, true)).abs() <= 1e-12 * inverse_mills(-x, true).max(1.0));
    }

    #[test]
    fn quantile_inverts_the_cdf(p in 1e-12f64..(1.0 - 1e-12)) {
        let x = norm_quantile(p);
        prop_assert!((norm_cdf(x) - p).abs() <= 1e-12_f64.max(1e-9 * p.min(1.0 - p)));
    }

    #[test]
    fn t_critical_shrinks_with_df(df in 1.0f64..500.0) {
        prop_assert!(t_critical(df + 1.0, 0.05) < t_critical(df, 0.05));
        prop_assert!(t_critical(df, 0.05) > 1.959963984540054);
    }

    #[test]
    fn rubin_total_dominates_within(
        est in prop::collection::vec(-10.0f64..10.0, 2..12),
        var in 0.0f64..5.0,
    ) {
        let vars = vec![var; est.len()];
        let r = rubin_combine(&est, &vars, 30.0);
        prop_assert!(r.total >= r.within - 1e-12);
        prop_assert!(r.df > 0.0);
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        prop_assert!((r.estimate - mean).abs() < 1e-12);
    }
}
