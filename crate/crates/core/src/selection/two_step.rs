use nalgebra::{DMatrix, DVector};

use super::ols::{fit_matrix, OlsFit};
use super::probit::{fit_probit, ProbitFit};
use super::{SelectionData, SolverOptions};
use crate::data::{Dataset, DesignSpec};
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::stats::inverse_mills;

/// Name of the inverse Mills ratio regressor in the second-step design.
pub const LAMBDA_COLUMN: &str = "(InverseMills)";

#[derive(Debug, Clone)]
pub struct Heckman2StepFit {
    pub beta: DVector<f64>,
    /// Coefficient on the inverse Mills ratio, an estimate of ρσ_ε.
    pub beta_lambda: f64,
    /// Residual standard deviation of the second-step regression.
    pub sigma_eta: f64,
    pub probit: ProbitFit,
    /// λ̂_i on the observed rows.
    pub lambda_hat: Vec<f64>,
    /// δ̂_i = λ̂_i(λ̂_i + X_iˢβ̂ˢ) on the observed rows.
    pub delta_hat: Vec<f64>,
    /// Covariance of (β̂, β̂_λ), corrected for heteroskedasticity and for
    /// estimation of βˢ in the first step.
    pub covariance: DMatrix<f64>,
    pub implied_rho: f64,
    pub implied_sigma_eps: f64,
    /// The plain second-step least-squares fit on [X, λ̂].
    pub second_step: OlsFit,
    pub column_names: Vec<String>,
}

impl Heckman2StepFit {
    pub fn std_errors(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// Heckman's two-step estimator on a dataset.
///
/// Requires the selection equation to differ from the outcome equation; the
/// estimator is identified only through that restriction.
pub fn heckman_two_step(ds: &Dataset, spec: &DesignSpec) -> Result<Heckman2StepFit> {
    if !spec.exclusion_restriction_holds() {
        return Err(Error::ExclusionRestriction);
    }
    let data = SelectionData::new(ds, spec)?;
    two_step_from_data(&data, &SolverOptions::default())
}

/// Two-step estimator on pre-encoded data.
pub fn two_step_from_data(data: &SelectionData, opts: &SolverOptions) -> Result<Heckman2StepFit> {
    if !data.exclusion_restriction {
        return Err(Error::ExclusionRestriction);
    }
    let n1 = data.n_observed();
    let p = data.p();
    if n1 <= p + 1 {
        return Err(Error::Degenerate(format!(
            "{n1} observed rows cannot identify {} second-step coefficients",
            p + 1
        )));
    }
    let probit = fit_probit(&data.indicator, &data.selection_design, opts)?;
    let xs1 = data.xs_obs();
    let zs = &xs1 * &probit.beta_s;
    let lambda_hat: Vec<f64> = zs.iter().map(|&z| inverse_mills(z, true)).collect();
    let delta_hat: Vec<f64> = zs
        .iter()
        .zip(&lambda_hat)
        .map(|(&z, &l)| (l * (l + z)).clamp(f64::MIN_POSITIVE, 1.0))
        .collect();

    let xstar = data.x_obs.clone().insert_column(p, 0.0);
    let mut xstar = xstar;
    for (i, &l) in lambda_hat.iter().enumerate() {
        xstar[(i, p)] = l;
    }
    let mut names = data.outcome_design.column_names.clone();
    names.push(LAMBDA_COLUMN.to_string());
    let second_step = fit_matrix(&data.y_obs, &xstar, &names, None)?;

    let beta_lambda = second_step.beta[p];
    let mean_delta = delta_hat.iter().sum::<f64>() / n1 as f64;
    let sigma2_eps = second_step.rss / n1 as f64 + mean_delta * beta_lambda * beta_lambda;
    let implied_sigma_eps = sigma2_eps.sqrt();
    let implied_rho = if implied_sigma_eps > 0.0 {
        (beta_lambda / implied_sigma_eps).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let rho2 = implied_rho * implied_rho;

    // Sandwich: σ²A[X*'(I − ρ²Δ)X* + ρ²(X*'ΔXs)V(Xs'ΔX*)]A with A = (X*'X*)⁻¹.
    let k = p + 1;
    let mut meat = DMatrix::zeros(k, k);
    let mut xdx = DMatrix::zeros(k, xs1.ncols());
    let mut row = DVector::zeros(k);
    for i in 0..n1 {
        row.copy_from(&xstar.row(i).transpose());
        let d = delta_hat[i];
        meat.ger(1.0 - rho2 * d, &row, &row, 1.0);
        xdx.ger(d, &row, &xs1.row(i).transpose(), 1.0);
    }
    let q = &xdx * &probit.covariance * xdx.transpose() * rho2;
    let a = &second_step.xtx_inv;
    let covariance = symmetrize(&(a * (meat + q) * a * sigma2_eps));
    if covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("two-step covariance".into()));
    }

    Ok(Heckman2StepFit {
        beta: second_step.beta.rows(0, p).into_owned(),
        beta_lambda,
        sigma_eta: second_step.sigma,
        probit,
        lambda_hat,
        delta_hat,
        covariance,
        implied_rho,
        implied_sigma_eps,
        second_step,
        column_names: names,
    })
}
