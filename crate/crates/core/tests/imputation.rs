mod common;

use std::collections::HashSet;

use common::{simulate, Dgp};
use selmi::imputation::{impute, Method, MethodConfig, TreeOptions};
use selmi::pooling::{fit_per_imputation, pool_rubin};
use selmi::stats::RngStream;

fn config(method: Method, seed: u64) -> MethodConfig {
    MethodConfig::new(method, RngStream::new(seed, 0))
}

fn observed_set(sample: &common::Sample) -> HashSet<u64> {
    sample.data.observed_outcome().iter().map(|y| y.to_bits()).collect()
}

#[test]
fn hot_deck_methods_only_copy_observed_values() {
    let sample = simulate(&Dgp::default(), 600, 1);
    let observed = observed_set(&sample);
    for method in [Method::MIPmm, Method::MIRF] {
        let imps = impute(&sample.data, &sample.spec, &config(method, 2)).unwrap();
        assert_eq!(imps.m(), 5);
        for j in 0..imps.m() {
            for v in imps.imputed_values(j) {
                assert!(observed.contains(&v.to_bits()), "{method}: {v} was never observed");
            }
        }
    }
}

#[test]
fn single_leaf_forest_draws_from_the_whole_observed_sample() {
    let sample = simulate(&Dgp::default(), 400, 3);
    let mut cfg = config(Method::MIRF, 4);
    cfg.tree = TreeOptions {
        max_depth: Some(0),
        ..TreeOptions::default()
    };
    let imps = impute(&sample.data, &sample.spec, &cfg).unwrap();
    let values = imps.imputed_values(0);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let obs = sample.data.observed_outcome();
    let obs_mean = obs.iter().sum::<f64>() / obs.len() as f64;
    let sd = (obs.iter().map(|y| (y - obs_mean).powi(2)).sum::<f64>() / obs.len() as f64).sqrt();
    assert!((mean - obs_mean).abs() < 4.0 * sd / (values.len() as f64).sqrt());
}

#[test]
fn single_imputation_methods_produce_one_dataset() {
    let sample = simulate(&Dgp::default(), 400, 5);
    for method in [Method::LM, Method::Hml] {
        let imps = impute(&sample.data, &sample.spec, &config(method, 6).with_m(7)).unwrap();
        assert_eq!(imps.m(), 1, "{method}");
        assert_eq!(imps.missing_rows, sample.data.missing_rows());
    }
}

#[test]
fn fixed_seed_reproduces_imputations() {
    let sample = simulate(&Dgp::default(), 500, 7);
    for method in [Method::LM, Method::MIPmm, Method::MIRF, Method::Hml, Method::MIHml, Method::MIH2Step] {
        let a = impute(&sample.data, &sample.spec, &config(method, 8)).unwrap();
        let b = impute(&sample.data, &sample.spec, &config(method, 8)).unwrap();
        let c = impute(&sample.data, &sample.spec, &config(method, 9)).unwrap();
        for j in 0..a.m() {
            assert_eq!(a.imputed_values(j), b.imputed_values(j), "{method}");
        }
        // Regression imputation is deterministic; every other method draws.
        if method == Method::LM {
            assert_eq!(a.imputed_values(0), c.imputed_values(0));
        } else {
            assert_ne!(a.imputed_values(0), c.imputed_values(0), "{method}");
        }
    }
}

#[test]
fn completed_datasets_keep_observed_values() {
    let sample = simulate(&Dgp::default(), 300, 10);
    let imps = impute(&sample.data, &sample.spec, &config(Method::MIHml, 11)).unwrap();
    for ds in &imps.completed {
        assert_eq!(ds.n_missing(), 0);
        for &i in &sample.data.observed_rows() {
            assert_eq!(ds.outcome()[i], sample.data.outcome()[i]);
        }
    }
}

#[test]
fn selection_model_imputation_corrects_the_slope_under_mnar() {
    // Strong negative correlation: complete-case least squares is biased.
    let dgp = Dgp {
        rho: -0.8,
        ..Dgp::default()
    };
    let sample = simulate(&dgp, 8000, 12);
    let slope = |method: Method| {
        let imps = impute(&sample.data, &sample.spec, &config(method, 13)).unwrap();
        let fits = fit_per_imputation(&imps, &sample.spec).unwrap();
        if fits.len() == 1 {
            fits[0].beta[1]
        } else {
            pool_rubin(&fits).unwrap().theta_hat[1]
        }
    };
    let truth = dgp.beta[1];
    let lm = slope(Method::LM);
    let mihml = slope(Method::MIHml);
    let mih2 = slope(Method::MIH2Step);
    assert!((lm - truth).abs() > 0.05, "LM slope {lm}");
    assert!((mihml - truth).abs() < 0.05, "MIHml slope {mihml}");
    assert!((mih2 - truth).abs() < 0.06, "MIH2Step slope {mih2}");
}

#[test]
fn invalid_configurations_are_rejected() {
    let sample = simulate(&Dgp::default(), 100, 14);
    let mut cfg = config(Method::MIPmm, 1);
    cfg.donors = 0;
    assert!(impute(&sample.data, &sample.spec, &cfg).is_err());
    assert!(impute(&sample.data, &sample.spec, &config(Method::Median, 1)).is_err());
}
