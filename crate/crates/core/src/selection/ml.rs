use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ols::fit_matrix;
use super::optim::{bfgs_maximize, fd_hessian};
use super::probit::fit_probit;
use super::two_step::two_step_from_data;
use super::{SelectionData, SolverOptions};
use crate::data::{Dataset, DesignSpec};
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, symmetrize};
use crate::stats::{inverse_mills, mills_delta, norm_log_cdf, norm_log_pdf};

/// Parameters of the bivariate normal selection model on the natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeckmanParams {
    pub beta: Vec<f64>,
    pub beta_s: Vec<f64>,
    pub sigma_eps: f64,
    pub rho: f64,
}

impl HeckmanParams {
    /// Packs into the unconstrained vector (β, βˢ, log σ_ε, atanh ρ).
    pub fn to_theta(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.beta.len() + self.beta_s.len() + 2);
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.beta_s);
        v.push(self.sigma_eps.ln());
        v.push(self.rho.atanh());
        DVector::from_vec(v)
    }

    /// Unpacks an unconstrained vector with `p` outcome coefficients.
    pub fn from_theta(theta: &DVector<f64>, p: usize) -> Self {
        let k = theta.len();
        Self {
            beta: theta.rows(0, p).iter().copied().collect(),
            beta_s: theta.rows(p, k - p - 2).iter().copied().collect(),
            sigma_eps: theta[k - 2].exp(),
            rho: theta[k - 1].tanh(),
        }
    }

    /// Mean and variance of Y given the linear indices `xb` = Xβ and
    /// `z` = Xˢβˢ, conditional on being selected (R = 1) or not (R = 0).
    pub fn moments(&self, xb: f64, z: f64, selected: bool) -> (f64, f64) {
        let lambda = inverse_mills(z, selected);
        let delta = mills_delta(z, selected);
        let s2 = self.sigma_eps * self.sigma_eps;
        let mean = xb + self.rho * self.sigma_eps * lambda;
        let var = s2 * (1.0 - self.rho * self.rho * delta);
        (mean, var.clamp(0.0, s2))
    }
}

/// Conditional mean and variance of the outcome for one row under a fitted
/// selection model.
pub fn conditional_moments(fit: &HeckmanMLFit, x_row: &[f64], xs_row: &[f64], selected: bool) -> (f64, f64) {
    let xb: f64 = x_row.iter().zip(&fit.beta).map(|(a, b)| a * b).sum();
    let z: f64 = xs_row.iter().zip(&fit.beta_s).map(|(a, b)| a * b).sum();
    fit.params().moments(xb, z, selected)
}

#[derive(Debug, Clone)]
pub struct HeckmanMLFit {
    pub beta: Vec<f64>,
    pub beta_s: Vec<f64>,
    pub sigma_eps: f64,
    pub rho: f64,
    /// Covariance of (β, βˢ, σ_ε, ρ), obtained from the transformed-scale
    /// covariance by the delta method.
    pub covariance: DMatrix<f64>,
    /// Optimum on the unconstrained scale (β, βˢ, log σ_ε, atanh ρ).
    pub theta: DVector<f64>,
    /// Inverse observed information on the unconstrained scale.
    pub theta_covariance: DMatrix<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Number of rows with an observed outcome.
    pub n_observed: usize,
    pub outcome_names: Vec<String>,
    pub selection_names: Vec<String>,
}

impl HeckmanMLFit {
    pub fn params(&self) -> HeckmanParams {
        HeckmanParams {
            beta: self.beta.clone(),
            beta_s: self.beta_s.clone(),
            sigma_eps: self.sigma_eps,
            rho: self.rho,
        }
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Standard errors of β.
    pub fn beta_std_errors(&self) -> Vec<f64> {
        (0..self.p()).map(|j| self.covariance[(j, j)].max(0.0).sqrt()).collect()
    }
}

/// Log-likelihood of the selection model over pre-encoded data.
#[derive(Debug, Clone, Copy)]
pub struct HeckmanLikelihood<'a> {
    data: &'a SelectionData,
}

struct RowTerms {
    ll: f64,
    /// Per observed row: weight for the outcome design.
    w_beta: Vec<f64>,
    /// Per row: weight for the selection design.
    w_s: Vec<f64>,
    /// Per observed row: derivative w.r.t. log σ.
    d_log_sigma: Vec<f64>,
    /// Per observed row: derivative w.r.t. atanh ρ.
    d_atanh_rho: Vec<f64>,
}

impl<'a> HeckmanLikelihood<'a> {
    pub fn new(data: &'a SelectionData) -> Self {
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.p() + self.data.q() + 2
    }

    fn terms(&self, theta: &DVector<f64>) -> RowTerms {
        let d = self.data;
        let (p, q) = (d.p(), d.q());
        let beta = theta.rows(0, p);
        let beta_s = theta.rows(p, q);
        let log_sigma = theta[p + q];
        let a = theta[p + q + 1];
        let sigma = log_sigma.exp();
        let rho = a.tanh();
        let s = 1.0 / a.cosh();

        let xb = &d.x_obs * beta;
        let z = &d.selection_design.values * beta_s;
        let n1 = d.n_observed();
        let mut t = RowTerms {
            ll: 0.0,
            w_beta: vec![0.0; n1],
            w_s: vec![0.0; d.n()],
            d_log_sigma: vec![0.0; n1],
            d_atanh_rho: vec![0.0; n1],
        };
        for &i in &d.missing_rows {
            t.ll += norm_log_cdf(-z[i]);
            t.w_s[i] = inverse_mills(z[i], false);
        }
        for (k, &i) in d.observed_rows.iter().enumerate() {
            let u = (d.y_obs[k] - xb[k]) / sigma;
            let zi = z[i];
            let arg = (zi + rho * u) / s;
            let m = inverse_mills(arg, true);
            t.ll += norm_log_cdf(arg) - log_sigma + norm_log_pdf(u);
            t.w_beta[k] = (u - m * rho / s) / sigma;
            t.w_s[i] = m / s;
            t.d_log_sigma[k] = u * u - 1.0 - m * rho * u / s;
            t.d_atanh_rho[k] = m * (u + rho * zi) / s;
        }
        t
    }

    /// Log-likelihood alone.
    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        self.terms(theta).ll
    }

    /// Log-likelihood and analytic gradient on the unconstrained scale.
    pub fn eval(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        let d = self.data;
        let (p, q) = (d.p(), d.q());
        let t = self.terms(theta);
        let mut g = DVector::zeros(p + q + 2);
        g.rows_mut(0, p)
            .copy_from(&d.x_obs.tr_mul(&DVector::from_column_slice(&t.w_beta)));
        g.rows_mut(p, q).copy_from(
            &d.selection_design
                .values
                .tr_mul(&DVector::from_column_slice(&t.w_s)),
        );
        g[p + q] = t.d_log_sigma.iter().sum();
        g[p + q + 1] = t.d_atanh_rho.iter().sum();
        (t.ll, g)
    }

    /// Per-row score contributions (n x dim), rows in dataset order.
    pub fn scores(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let d = self.data;
        let (p, q) = (d.p(), d.q());
        let t = self.terms(theta);
        let mut out = DMatrix::zeros(d.n(), p + q + 2);
        for i in 0..d.n() {
            let ws = t.w_s[i];
            for j in 0..q {
                out[(i, p + j)] = ws * d.selection_design.values[(i, j)];
            }
        }
        for (k, &i) in d.observed_rows.iter().enumerate() {
            for j in 0..p {
                out[(i, j)] = t.w_beta[k] * d.x_obs[(k, j)];
            }
            out[(i, p + q)] = t.d_log_sigma[k];
            out[(i, p + q + 1)] = t.d_atanh_rho[k];
        }
        out
    }
}

/// Log-likelihood and analytic gradient at `theta` = (β, βˢ, log σ_ε, atanh ρ).
pub fn heckman_loglik_grad(theta: &DVector<f64>, ds: &Dataset, spec: &DesignSpec) -> Result<(f64, DVector<f64>)> {
    let data = SelectionData::new(ds, spec)?;
    let lik = HeckmanLikelihood::new(&data);
    if theta.len() != lik.dim() {
        return Err(Error::InvalidArgument(format!(
            "parameter vector has length {} but the model has {}",
            theta.len(),
            lik.dim()
        )));
    }
    Ok(lik.eval(theta))
}

/// Full-information maximum likelihood fit of the selection model.
pub fn heckman_ml(
    ds: &Dataset,
    spec: &DesignSpec,
    init: Option<&HeckmanParams>,
    opts: &SolverOptions,
) -> Result<HeckmanMLFit> {
    if !spec.exclusion_restriction_holds() {
        log::warn!("selection and outcome equations share all covariates; identification rests on normality");
    }
    let data = SelectionData::new(ds, spec)?;
    heckman_ml_from_data(&data, init, opts)
}

const MAX_START_ATANH_RHO: f64 = 1.83; // atanh(0.95)

fn default_start(data: &SelectionData, opts: &SolverOptions) -> Result<DVector<f64>> {
    let p = data.p();
    if data.exclusion_restriction {
        match two_step_from_data(data, opts) {
            Ok(ts) if ts.implied_sigma_eps > 0.0 => {
                let params = HeckmanParams {
                    beta: ts.beta.iter().copied().collect(),
                    beta_s: ts.probit.beta_s.iter().copied().collect(),
                    sigma_eps: ts.implied_sigma_eps,
                    rho: ts.implied_rho.clamp(-0.95, 0.95),
                };
                return Ok(params.to_theta());
            }
            Ok(_) => {}
            Err(e) => log::debug!("two-step start unavailable ({e}); using probit and OLS"),
        }
    }
    let probit = fit_probit(&data.indicator, &data.selection_design, opts)?;
    let ols = fit_matrix(&data.y_obs, &data.x_obs, &data.outcome_design.column_names, None)?;
    let sigma = if ols.sigma > 0.0 { ols.sigma } else { 1.0 };
    let params = HeckmanParams {
        beta: ols.beta.iter().copied().take(p).collect(),
        beta_s: probit.beta_s.iter().copied().collect(),
        sigma_eps: sigma,
        rho: 0.0,
    };
    Ok(params.to_theta())
}

/// Maximum likelihood on pre-encoded data.
///
/// The optimum is located by BFGS started from the BHHH information and then
/// polished by Newton steps on a finite-difference Hessian of the analytic
/// gradient. A stalled search is reported through `converged = false`.
pub fn heckman_ml_from_data(
    data: &SelectionData,
    init: Option<&HeckmanParams>,
    opts: &SolverOptions,
) -> Result<HeckmanMLFit> {
    let (p, q) = (data.p(), data.q());
    let lik = HeckmanLikelihood::new(data);
    let k = lik.dim();
    let mut theta0 = match init {
        Some(params) => {
            if params.beta.len() != p || params.beta_s.len() != q {
                return Err(Error::InvalidArgument("start point does not match the design".into()));
            }
            params.to_theta()
        }
        None => default_start(data, opts)?,
    };
    theta0[k - 1] = theta0[k - 1].clamp(-MAX_START_ATANH_RHO, MAX_START_ATANH_RHO);
    let (ll0, g0) = lik.eval(&theta0);
    if !ll0.is_finite() || g0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("selection-model likelihood at the start point".into()));
    }

    let scores = lik.scores(&theta0);
    let bhhh = scores.tr_mul(&scores);
    let h0 = spd_inverse(&bhhh, "outer-product information")
        .unwrap_or_else(|_| DMatrix::identity(k, k) * (1.0 / (1.0 + g0.norm())));

    let f = |t: &DVector<f64>| {
        let (v, g) = lik.eval(t);
        if v.is_finite() {
            (v, g)
        } else {
            (f64::NEG_INFINITY, g)
        }
    };
    let out = bfgs_maximize(f, theta0, h0, opts);
    let mut theta = out.x;
    let mut ll = out.value;
    let mut grad = out.grad;
    let mut iterations = out.iterations;
    let tol = |ll: f64| opts.grad_tol * (1.0 + ll.abs());

    let grad_fn = |t: &DVector<f64>| lik.eval(t).1;
    let mut hess = fd_hessian(grad_fn, &theta);
    for _ in 0..20 {
        if grad.amax() <= tol(ll) * 1e-2 {
            break;
        }
        let Ok(cov) = spd_inverse(&-&hess, "observed information") else {
            break;
        };
        let step = &cov * &grad;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let cand = &theta + &step * t;
            let (lc, gc) = lik.eval(&cand);
            if lc.is_finite() && lc >= ll - 1e-12 * ll.abs() && gc.amax() < grad.amax() {
                theta = cand;
                ll = lc;
                grad = gc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !moved {
            break;
        }
        hess = fd_hessian(grad_fn, &theta);
    }
    let converged = grad.amax() <= tol(ll) && ll.is_finite();
    if !converged {
        log::debug!(
            "selection-model ML stopped with gradient {:.3e} at loglik {:.6}",
            grad.amax(),
            ll
        );
    }

    let theta_covariance = symmetrize(&spd_inverse(&-&hess, "selection-model observed information")?);
    let params = HeckmanParams::from_theta(&theta, p);
    let mut jac = DVector::from_element(k, 1.0);
    jac[k - 2] = params.sigma_eps;
    jac[k - 1] = 1.0 - params.rho * params.rho;
    let covariance = symmetrize(&DMatrix::from_fn(k, k, |i, j| {
        jac[i] * theta_covariance[(i, j)] * jac[j]
    }));

    Ok(HeckmanMLFit {
        beta: params.beta,
        beta_s: params.beta_s,
        sigma_eps: params.sigma_eps,
        rho: params.rho,
        covariance,
        theta,
        theta_covariance,
        loglik: ll,
        iterations,
        converged,
        n_observed: data.n_observed(),
        outcome_names: data.outcome_design.column_names.clone(),
        selection_names: data.selection_design.column_names.clone(),
    })
}
