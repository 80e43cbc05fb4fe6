mod common;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use common::{simulate, Dgp};
use selmi::data::encode_design;
use selmi::selection::{
    fit_ols, fit_probit, heckman_loglik_grad, heckman_ml, heckman_two_step, HeckmanLikelihood, HeckmanParams,
    SelectionData, SolverOptions,
};
use selmi::stats::{norm_log_cdf, norm_log_pdf, RngStream};

const FD_STEP: f64 = 1e-5;

/// Largest elementwise |analytic − central difference| / max(1, |difference|).
fn max_gradient_error(theta: &DVector<f64>, sample: &common::Sample) -> f64 {
    let (_, grad) = heckman_loglik_grad(theta, &sample.data, &sample.spec).unwrap();
    let mut worst = 0.0_f64;
    for k in 0..theta.len() {
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[k] += FD_STEP;
        dn[k] -= FD_STEP;
        let (fu, _) = heckman_loglik_grad(&up, &sample.data, &sample.spec).unwrap();
        let (fd, _) = heckman_loglik_grad(&dn, &sample.data, &sample.spec).unwrap();
        let numeric = (fu - fd) / (2.0 * FD_STEP);
        worst = worst.max((grad[k] - numeric).abs() / numeric.abs().max(1.0));
    }
    worst
}

#[test]
fn analytic_gradient_matches_central_differences() {
    for (d, rho) in [-0.6, 0.0, 0.4].into_iter().enumerate() {
        let sample = simulate(&Dgp { rho, ..Dgp::default() }, 400, 100 + d as u64);
        let truth = HeckmanParams {
            beta: Dgp::default().beta.to_vec(),
            beta_s: Dgp::default().beta_s.to_vec(),
            sigma_eps: 1.0,
            rho,
        }
        .to_theta();
        let mut rng = RngStream::new(7, d as u64).rng();
        for _ in 0..20 {
            let theta = truth.map(|v| v + 0.5 * rng.sample::<f64, _>(StandardNormal));
            let err = max_gradient_error(&theta, &sample);
            assert!(err <= 1e-5, "dataset {d}: relative gradient error {err:e}");
        }
    }
}

#[test]
fn loglik_at_zero_parameters_is_the_plug_in_value() {
    let sample = simulate(&Dgp::default(), 200, 3);
    let theta = DVector::zeros(3 + 3 + 2);
    let (ll, _) = heckman_loglik_grad(&theta, &sample.data, &sample.spec).unwrap();
    let n0 = sample.data.n_missing() as f64;
    let expected = n0 * norm_log_cdf(0.0)
        + sample
            .data
            .observed_outcome()
            .iter()
            .map(|&y| norm_log_pdf(y) + norm_log_cdf(0.0))
            .sum::<f64>();
    assert!((ll - expected).abs() < 1e-9 * expected.abs());
}

#[test]
fn gradient_rejects_wrong_length() {
    let sample = simulate(&Dgp::default(), 50, 3);
    assert!(heckman_loglik_grad(&DVector::zeros(4), &sample.data, &sample.spec).is_err());
}

#[test]
fn ml_recovers_known_parameters() {
    let dgp = Dgp::default();
    let sample = simulate(&dgp, 20_000, 11);
    let fit = heckman_ml(&sample.data, &sample.spec, None, &SolverOptions::default()).unwrap();
    assert!(fit.converged);
    let se = fit.beta_std_errors();
    for (k, (&b, &truth)) in fit.beta.iter().zip(&dgp.beta).enumerate() {
        assert!((b - truth).abs() < 4.0 * se[k], "beta[{k}] = {b}, se {}", se[k]);
    }
    assert!((fit.rho - dgp.rho).abs() < 0.1, "rho = {}", fit.rho);
    assert!((fit.sigma_eps - dgp.sigma).abs() < 0.05, "sigma = {}", fit.sigma_eps);
}

#[test]
fn ml_score_vanishes_and_beats_two_step_plug_in() {
    let sample = simulate(&Dgp::default(), 3000, 12);
    let fit = heckman_ml(&sample.data, &sample.spec, None, &SolverOptions::default()).unwrap();
    let data = SelectionData::new(&sample.data, &sample.spec).unwrap();
    let lik = HeckmanLikelihood::new(&data);
    let (ll, grad) = lik.eval(&fit.theta);
    assert!(grad.amax() <= 1e-6 * (1.0 + ll.abs()), "score {:e}", grad.amax());

    let ts = heckman_two_step(&sample.data, &sample.spec).unwrap();
    let plug_in = HeckmanParams {
        beta: ts.beta.iter().copied().collect(),
        beta_s: ts.probit.beta_s.iter().copied().collect(),
        sigma_eps: ts.implied_sigma_eps,
        rho: ts.implied_rho.clamp(-0.99, 0.99),
    };
    assert!(ll >= lik.value(&plug_in.to_theta()));
    assert!((ts.implied_rho - fit.rho).abs() < 0.15);
}

#[test]
fn ml_at_zero_correlation_matches_separate_fits() {
    // A strong exclusion variable keeps the sampling noise in the fitted
    // correlation, which shifts the ML intercept, well inside the tolerance.
    let dgp = Dgp {
        rho: 0.0,
        beta_s: [0.8, 0.3, 2.0],
        ..Dgp::default()
    };
    for seed in 0..3 {
        let sample = simulate(&dgp, 10_000, 200 + seed);
        let fit = heckman_ml(&sample.data, &sample.spec, None, &SolverOptions::default()).unwrap();
        let design = encode_design(&sample.data, &sample.spec.outcome_covariates, &sample.data.observed_rows()).unwrap();
        let ols = fit_ols(&sample.data.observed_outcome(), &design).unwrap();
        let sel = encode_design(&sample.data, &sample.spec.selection_covariates, &sample.data.all_rows()).unwrap();
        let probit = fit_probit(&sample.data.indicator(), &sel, &SolverOptions::default()).unwrap();
        for (a, b) in fit.beta.iter().zip(ols.beta.iter()) {
            assert!((a - b).abs() < 0.02, "ML {a} vs OLS {b}");
        }
        for (a, b) in fit.beta_s.iter().zip(probit.beta_s.iter()) {
            assert!((a - b).abs() < 0.02, "ML {a} vs probit {b}");
        }
    }
}

#[test]
fn two_step_mills_coefficient_is_null_without_correlation() {
    let dgp = Dgp { rho: 0.0, ..Dgp::default() };
    let reps = 100;
    let inside = (0..reps)
        .filter(|&r| {
            let sample = simulate(&dgp, 10_000, 1000 + r);
            let ts = heckman_two_step(&sample.data, &sample.spec).unwrap();
            let se = ts.std_errors();
            ts.beta_lambda.abs() <= 2.0 * se[se.len() - 1]
        })
        .count();
    assert!(inside >= 90, "{inside} of {reps} within 2 SE");
}

#[test]
fn two_step_needs_an_exclusion_restriction() {
    let mut sample = simulate(&Dgp::default(), 200, 5);
    sample.spec.selection_covariates = sample.spec.outcome_covariates.clone();
    assert!(heckman_two_step(&sample.data, &sample.spec).is_err());
}

#[test]
fn conditional_moments_hand_values() {
    let lambda0 = (2.0 / std::f64::consts::PI).sqrt();
    let params = HeckmanParams {
        beta: vec![],
        beta_s: vec![],
        sigma_eps: 1.0,
        rho: -0.6,
    };
    let (mean, var) = params.moments(3.0, 0.0, true);
    assert!((mean - (3.0 - 0.6 * lambda0)).abs() < 1e-12);
    assert!((var - (1.0 - 0.36 * lambda0 * lambda0)).abs() < 1e-12);

    let indep = HeckmanParams { rho: 0.0, sigma_eps: 2.0, ..params };
    for &z in &[-3.0, 0.0, 2.5] {
        for selected in [true, false] {
            assert_eq!(indep.moments(1.5, z, selected), (1.5, 4.0));
        }
    }
}

#[test]
fn ml_is_invariant_to_covariate_order() {
    let sample = simulate(&Dgp::default(), 2000, 21);
    let a = heckman_ml(&sample.data, &sample.spec, None, &SolverOptions::default()).unwrap();
    let mut swapped = sample.spec.clone();
    swapped.outcome_covariates.reverse();
    let b = heckman_ml(&sample.data, &swapped, None, &SolverOptions::default()).unwrap();
    for (k, name) in a.outcome_names.iter().enumerate() {
        let j = b.outcome_names.iter().position(|n| n == name).unwrap();
        assert!((a.beta[k] - b.beta[j]).abs() < 1e-5, "{name}");
    }
    assert!((a.rho - b.rho).abs() < 1e-5);
}
