use nalgebra::{DMatrix, DVector};

use super::SolverOptions;
use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{check_full_rank, spd_inverse};
use crate::stats::{inverse_mills, norm_log_cdf};

#[derive(Debug, Clone)]
pub struct ProbitFit {
    pub beta_s: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub column_names: Vec<String>,
}

const SEPARATION_LIMIT: f64 = 1e3;

/// Probit log-likelihood, score and Hessian at `beta`.
fn evaluate(r: &[f64], x: &DMatrix<f64>, beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let (n, k) = x.shape();
    let xb = x * beta;
    let mut ll = 0.0;
    let mut score_w = DVector::zeros(n);
    let mut xw = x.clone();
    for i in 0..n {
        let q = if r[i] > 0.5 { 1.0 } else { -1.0 };
        let z = q * xb[i];
        let lambda = inverse_mills(z, true);
        ll += norm_log_cdf(z);
        score_w[i] = q * lambda;
        let w = (lambda * (lambda + z)).max(0.0).sqrt();
        for j in 0..k {
            xw[(i, j)] *= w;
        }
    }
    let grad = x.tr_mul(&score_w);
    let hess = -xw.tr_mul(&xw);
    (ll, grad, hess)
}

/// Probit log-likelihood alone.
pub fn probit_loglik(r: &[f64], x: &DMatrix<f64>, beta: &DVector<f64>) -> f64 {
    let xb = x * beta;
    r.iter()
        .zip(xb.iter())
        .map(|(&ri, &v)| norm_log_cdf(if ri > 0.5 { v } else { -v }))
        .sum()
}

/// Newton-Raphson maximum likelihood for P(R = 1 | Xs) = Φ(Xs βs).
pub fn fit_probit(r: &[f64], xs: &DesignMatrix, opts: &SolverOptions) -> Result<ProbitFit> {
    fit_probit_matrix(r, &xs.values, &xs.column_names, opts)
}

pub(crate) fn fit_probit_matrix(
    r: &[f64],
    x: &DMatrix<f64>,
    names: &[String],
    opts: &SolverOptions,
) -> Result<ProbitFit> {
    let (n, k) = x.shape();
    if r.len() != n {
        return Err(Error::InvalidArgument("indicator length does not match design".into()));
    }
    let ones = r.iter().filter(|&&v| v > 0.5).count();
    if ones == 0 || ones == n {
        return Err(Error::Degenerate("probit needs both selected and unselected rows".into()));
    }
    check_full_rank(x, names)?;
    let mut beta = DVector::zeros(k);
    let (mut ll, mut grad, mut hess) = evaluate(r, x, &beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it;
        let info = spd_inverse(&-&hess, "probit information").map_err(|_| {
            let max_abs = beta.amax();
            if max_abs > 1.0 {
                Error::Separation { max_abs }
            } else {
                Error::Singular("probit information")
            }
        })?;
        let step = &info * &grad;
        // Under separation the gradient vanishes while Newton steps keep
        // growing, so convergence also requires a negligible step.
        if grad.amax() <= opts.grad_tol * (1.0 + ll.abs()) && step.amax() <= 1e-6 * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let cand_ll = probit_loglik(r, x, &cand);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs() {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            break;
        };
        beta = next;
        let max_abs = beta.amax();
        if max_abs > SEPARATION_LIMIT {
            return Err(Error::Separation { max_abs });
        }
        (ll, grad, hess) = evaluate(r, x, &beta);
    }
    if !converged {
        let max_abs = beta.amax();
        if max_abs > 0.5 * SEPARATION_LIMIT || ll.abs() < 1e-6 {
            return Err(Error::Separation { max_abs });
        }
        return Err(Error::NotConverged {
            stage: "probit",
            iterations,
        });
    }
    let covariance = spd_inverse(&-&hess, "probit information")?;
    Ok(ProbitFit {
        beta_s: beta,
        covariance,
        loglik: ll,
        iterations,
        converged,
        column_names: names.to_vec(),
    })
}
