//! Both-direction stepwise covariate selection by AIC for the outcome
//! (linear) and selection (probit) equations, and Wald-test pruning of
//! insignificant covariate blocks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::{encode_design, DesignMatrix, DesignSpec, Dataset};
use crate::error::{Error, Result};
use crate::linalg::spd_inverse;
use crate::selection::ols::fit_matrix;
use crate::selection::probit::fit_probit_matrix;
use crate::selection::SolverOptions;

/// Which equation a covariate search targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Linear outcome equation, fitted on rows with an observed outcome.
    Linear,
    /// Probit selection equation for the missingness indicator.
    Probit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepAction {
    Add,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: StepAction,
    pub covariate: String,
    pub aic_before: f64,
    pub aic_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub steps: Vec<Step>,
    pub final_spec: Vec<String>,
    pub initial_aic: f64,
    pub final_aic: f64,
}

struct Fitted {
    design: DesignMatrix,
    coef: Vec<f64>,
    covariance: nalgebra::DMatrix<f64>,
    loglik: f64,
}

fn model_rows(ds: &Dataset, model: ModelKind, scope: &[usize]) -> Vec<usize> {
    match model {
        ModelKind::Linear => {
            let y = ds.outcome();
            scope.iter().copied().filter(|&i| y[i].is_some()).collect()
        }
        ModelKind::Probit => scope.to_vec(),
    }
}

fn fit_model(ds: &Dataset, covariates: &[String], model: ModelKind, rows: &[usize]) -> Result<Fitted> {
    let design = encode_design(ds, covariates, rows)?;
    match model {
        ModelKind::Linear => {
            let y = ds.outcome();
            let yv: Vec<f64> = rows.iter().map(|&i| y[i].expect("observed rows only")).collect();
            let fit = fit_matrix(&yv, &design.values, &design.column_names, None)?;
            let n = rows.len() as f64;
            let s2 = fit.rss / n;
            let loglik = if s2 > 0.0 {
                -0.5 * n * ((2.0 * PI).ln() + s2.ln() + 1.0)
            } else {
                f64::INFINITY
            };
            Ok(Fitted {
                coef: fit.beta.iter().copied().collect(),
                covariance: fit.covariance,
                loglik,
                design,
            })
        }
        ModelKind::Probit => {
            let r = ds.indicator();
            let rv: Vec<f64> = rows.iter().map(|&i| r[i]).collect();
            let fit = fit_probit_matrix(&rv, &design.values, &design.column_names, &SolverOptions::default())?;
            Ok(Fitted {
                coef: fit.beta_s.iter().copied().collect(),
                covariance: fit.covariance,
                loglik: fit.loglik,
                design,
            })
        }
    }
}

/// AIC = −2 log L + 2k with k the number of estimated coefficients.
pub fn model_aic(ds: &Dataset, covariates: &[String], model: ModelKind, scope: &[usize]) -> Result<f64> {
    let rows = model_rows(ds, model, scope);
    let f = fit_model(ds, covariates, model, &rows)?;
    Ok(-2.0 * f.loglik + 2.0 * f.design.ncols() as f64)
}

/// Stepwise search starting from the intercept-only model.
pub fn stepwise_aic(ds: &Dataset, candidates: &[String], model: ModelKind, scope: &[usize]) -> Result<StepTrace> {
    stepwise_aic_from(ds, candidates, &[], model, scope)
}

/// Both-direction stepwise search from `start`.
///
/// Every step evaluates each single addition of an absent candidate and each
/// removal of a present covariate (categoricals move as whole blocks) and
/// takes the move with the lowest AIC, provided it strictly improves on the
/// current model. Moves whose model cannot be fitted are skipped. Ties are
/// broken by covariate name.
pub fn stepwise_aic_from(
    ds: &Dataset,
    candidates: &[String],
    start: &[String],
    model: ModelKind,
    scope: &[usize],
) -> Result<StepTrace> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("stepwise search needs candidates".into()));
    }
    let rows = model_rows(ds, model, scope);
    let aic_of = |covs: &[String]| -> Result<f64> {
        let f = fit_model(ds, covs, model, &rows)?;
        Ok(-2.0 * f.loglik + 2.0 * f.design.ncols() as f64)
    };
    let mut current: Vec<String> = start.to_vec();
    let mut current_aic = aic_of(&current)?;
    let initial_aic = current_aic;
    let mut steps = Vec::new();
    let mut names: Vec<&String> = candidates.iter().chain(start.iter()).collect();
    names.sort();
    names.dedup();
    loop {
        let mut best: Option<(f64, &String, StepAction)> = None;
        for &name in &names {
            let (trial, action) = if let Some(pos) = current.iter().position(|c| c == name) {
                let mut t = current.clone();
                t.remove(pos);
                (t, StepAction::Remove)
            } else if candidates.contains(name) {
                let mut t = current.clone();
                t.push(name.clone());
                (t, StepAction::Add)
            } else {
                continue;
            };
            let Ok(aic) = aic_of(&trial) else {
                continue;
            };
            if aic.is_finite() && best.is_none_or(|(b, _, _)| aic < b) {
                best = Some((aic, name, action));
            }
        }
        match best {
            Some((aic, name, action)) if aic < current_aic => {
                match action {
                    StepAction::Add => current.push(name.clone()),
                    StepAction::Remove => current.retain(|c| c != name),
                }
                steps.push(Step {
                    action,
                    covariate: name.clone(),
                    aic_before: current_aic,
                    aic_after: aic,
                });
                current_aic = aic;
            }
            _ => break,
        }
        if steps.len() > 4 * names.len() + 8 {
            // Strict decrease rules out cycles; this guards only against
            // pathological floating-point behaviour.
            break;
        }
    }
    Ok(StepTrace {
        steps,
        final_spec: current,
        initial_aic,
        final_aic: current_aic,
    })
}

/// Wald test p-value for each covariate block of a fitted model.
fn block_p_values(f: &Fitted) -> Result<Vec<(String, f64)>> {
    f.design
        .blocks
        .iter()
        .map(|b| {
            let idx: Vec<usize> = (b.start..b.start + b.len).collect();
            let v = f.covariance.select_rows(&idx).select_columns(&idx);
            let coef = nalgebra::DVector::from_iterator(b.len, idx.iter().map(|&i| f.coef[i]));
            let vinv = spd_inverse(&v, "Wald test covariance")?;
            let stat = (coef.transpose() * vinv * &coef)[(0, 0)];
            let chi = ChiSquared::new(b.len as f64).expect("positive df");
            Ok((b.variable.clone(), chi.sf(stat.max(0.0))))
        })
        .collect()
}

/// Repeatedly drops the covariate block with the largest Wald p-value above
/// `alpha` from the equation selected by `model`, refitting after each drop.
pub fn prune_insignificant(ds: &Dataset, spec: &DesignSpec, model: ModelKind, alpha: f64) -> Result<DesignSpec> {
    let mut out = spec.clone();
    let rows = model_rows(ds, model, &ds.all_rows());
    loop {
        let covs = match model {
            ModelKind::Linear => &mut out.outcome_covariates,
            ModelKind::Probit => &mut out.selection_covariates,
        };
        if covs.is_empty() {
            return Ok(out);
        }
        let fitted = fit_model(ds, covs, model, &rows)?;
        let pvals = block_p_values(&fitted)?;
        let worst = pvals
            .into_iter()
            .filter(|(_, p)| *p > alpha)
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        match worst {
            Some((name, _)) => covs.retain(|c| *c != name),
            None => return Ok(out),
        }
    }
}
