use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{run_imputations, ImputationSet, MethodConfig, ParameterDraw, SourceFit};
use crate::data::{DesignSpec, Dataset};
use crate::error::{Error, Result};
use crate::selection::ols::fit_matrix;
use crate::selection::{
    heckman_ml_from_data, two_step_from_data, HeckmanMLFit, HeckmanParams, SelectionData, SolverOptions,
    LAMBDA_COLUMN,
};
use crate::stats::{inverse_mills, mills_delta, mvn_draw, MvnSampler};

use super::posterior_draw_linear;

const MAX_REJECTIONS: usize = 100;

/// Draws each missing outcome from its conditional distribution given
/// non-selection under `params`.
fn draw_unselected<R: Rng + ?Sized>(data: &SelectionData, params: &HeckmanParams, rng: &mut R) -> Vec<f64> {
    let beta = DVector::from_column_slice(&params.beta);
    let beta_s = DVector::from_column_slice(&params.beta_s);
    data.missing_rows
        .iter()
        .map(|&i| {
            let xb = data.outcome_design.values.row(i).transpose().dot(&beta);
            let z = data.selection_design.values.row(i).transpose().dot(&beta_s);
            let (mean, var) = params.moments(xb, z, false);
            mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

fn params_draw(params: &HeckmanParams) -> ParameterDraw {
    ParameterDraw {
        beta: params.beta.clone(),
        sigma: Some(params.sigma_eps),
        rho: Some(params.rho),
        beta_lambda: Some(params.rho * params.sigma_eps),
        beta_s: Some(params.beta_s.clone()),
    }
}

/// Single imputation from the maximum likelihood selection model: each
/// missing outcome is one draw from N(E[Y | R = 0], Var[Y | R = 0]) at θ̂.
pub fn impute_heckman_single(ds: &Dataset, spec: &DesignSpec, cfg: &MethodConfig) -> Result<ImputationSet> {
    let data = SelectionData::new(ds, spec)?;
    let fit = heckman_ml_from_data(&data, None, &SolverOptions::default())?;
    impute_heckman_single_with_fit(ds, spec, &data, Arc::new(fit), cfg)
}

/// As [`impute_heckman_single`] with a fit computed by the caller on `data`.
pub fn impute_heckman_single_with_fit(
    ds: &Dataset,
    spec: &DesignSpec,
    data: &SelectionData,
    fit: Arc<HeckmanMLFit>,
    cfg: &MethodConfig,
) -> Result<ImputationSet> {
    let params = fit.params();
    run_imputations(ds, spec, cfg, SourceFit::HeckmanMl(fit), &data.missing_rows, |_, rng| {
        Ok((draw_unselected(data, &params, rng), params_draw(&params)))
    })
}

/// Multiple imputation from the maximum likelihood selection model.
///
/// Each imputation draws θ* from the normal approximation to the posterior on
/// the unconstrained scale (β, βˢ, log σ_ε, atanh ρ), then draws the missing
/// outcomes from the non-selected conditional distribution under θ*.
pub fn impute_mi_heckman_ml(ds: &Dataset, spec: &DesignSpec, cfg: &MethodConfig) -> Result<ImputationSet> {
    let data = SelectionData::new(ds, spec)?;
    let fit = heckman_ml_from_data(&data, None, &SolverOptions::default())?;
    impute_mi_heckman_ml_with_fit(ds, spec, &data, Arc::new(fit), cfg)
}

/// As [`impute_mi_heckman_ml`] with a fit computed by the caller on `data`.
pub fn impute_mi_heckman_ml_with_fit(
    ds: &Dataset,
    spec: &DesignSpec,
    data: &SelectionData,
    fit: Arc<HeckmanMLFit>,
    cfg: &MethodConfig,
) -> Result<ImputationSet> {
    let sampler = MvnSampler::new(fit.theta.clone(), &fit.theta_covariance)?;
    let p = fit.p();
    run_imputations(ds, spec, cfg, SourceFit::HeckmanMl(fit), &data.missing_rows, |_, rng| {
        for _ in 0..MAX_REJECTIONS {
            let theta = sampler.draw(rng);
            let params = HeckmanParams::from_theta(&theta, p);
            let valid = theta.iter().all(|v| v.is_finite())
                && params.sigma_eps.is_finite()
                && params.sigma_eps > 0.0
                && params.rho.abs() < 1.0;
            if valid {
                return Ok((draw_unselected(data, &params, rng), params_draw(&params)));
            }
        }
        Err(Error::NonFinite(format!(
            "selection-model posterior draws ({MAX_REJECTIONS} rejected)"
        )))
    })
}

/// Multiple imputation built on the two-step estimator.
///
/// Per imputation: draw βˢ* from the probit's normal approximation and
/// recompute the inverse Mills ratios; refit the outcome on [X, λ*] by
/// weighted least squares with variance multipliers 1 − ρ̂²δ*_i; draw
/// (β*, β_λ*, σ*) from that weighted fit's posterior, whose Cholesky factor
/// carries the heteroskedasticity correction; and impute
/// Xβ* + β_λ* λ₀(Xˢβˢ*) plus noise with the non-selected conditional variance
/// σ*²(1 − ρ*²δ₀).
pub fn impute_mi_heckman_2step(ds: &Dataset, spec: &DesignSpec, cfg: &MethodConfig) -> Result<ImputationSet> {
    if !spec.exclusion_restriction_holds() {
        return Err(Error::ExclusionRestriction);
    }
    let data = SelectionData::new(ds, spec)?;
    let fit = two_step_from_data(&data, &SolverOptions::default())?;
    let rho_hat = fit.implied_rho;
    let beta_s_hat = fit.probit.beta_s.clone();
    let beta_s_cov = fit.probit.covariance.clone();
    let xs_obs = data.xs_obs();
    let p = data.p();
    let mut names = data.outcome_design.column_names.clone();
    names.push(LAMBDA_COLUMN.to_string());
    run_imputations(
        ds,
        spec,
        cfg,
        SourceFit::TwoStep(Box::new(fit)),
        &data.missing_rows,
        |_, rng| {
            let beta_s = mvn_draw(&beta_s_hat, &beta_s_cov, rng)?;
            let z_obs = &xs_obs * &beta_s;
            let mut xstar = data.x_obs.clone().insert_column(p, 0.0);
            let mut weights = Vec::with_capacity(z_obs.len());
            for (i, &z) in z_obs.iter().enumerate() {
                xstar[(i, p)] = inverse_mills(z, true);
                let delta = mills_delta(z, true).clamp(0.0, 1.0);
                weights.push((1.0 - rho_hat * rho_hat * delta).max(1e-6));
            }
            let wfit = fit_matrix(&data.y_obs, &xstar, &names, Some(&weights))?;
            let (coef, sigma) = posterior_draw_linear(&wfit, rng)?;
            let beta_lambda = coef[p];
            let rho = if sigma > 0.0 {
                (beta_lambda / sigma).clamp(-0.999, 0.999)
            } else {
                0.0
            };
            let beta = coef.rows(0, p).into_owned();
            let values = data
                .missing_rows
                .iter()
                .map(|&i| {
                    let xb = data.outcome_design.values.row(i).transpose().dot(&beta);
                    let z = data.selection_design.values.row(i).transpose().dot(&beta_s);
                    let lambda0 = inverse_mills(z, false);
                    let delta0 = mills_delta(z, false).clamp(0.0, 1.0);
                    let sd = sigma * (1.0 - rho * rho * delta0).max(0.0).sqrt();
                    xb + beta_lambda * lambda0 + sd * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            let draw = ParameterDraw {
                beta: beta.iter().copied().collect(),
                sigma: Some(sigma),
                rho: Some(rho),
                beta_lambda: Some(beta_lambda),
                beta_s: Some(beta_s.iter().copied().collect()),
            };
            Ok((values, draw))
        },
    )
}
