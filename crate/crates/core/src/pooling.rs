//! Rubin's rules for multiply imputed analyses, predict-then-combine
//! prediction intervals, single-model prediction intervals, and the group
//! median baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{encode_design, Dataset, DesignMatrix, DesignSpec};
use crate::error::{Error, Result};
use crate::imputation::ImputationSet;
use crate::linalg::{quad_form, spd_inverse};
use crate::selection::{fit_ols, HeckmanMLFit, OlsFit};
use crate::stats::t_critical;

/// Significance level of every reported interval.
pub const ALPHA: f64 = 0.05;

/// Pooled estimates for a vector of coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledParameters {
    pub column_names: Vec<String>,
    pub theta_hat: Vec<f64>,
    /// Mean within-imputation variance W.
    pub within: Vec<f64>,
    /// Between-imputation variance B (divisor m − 1).
    pub between: Vec<f64>,
    /// T = W + (1 + 1/m) B.
    pub total_var: Vec<f64>,
    /// Barnard–Rubin degrees of freedom.
    pub df: Vec<f64>,
    pub m: usize,
}

impl PooledParameters {
    pub fn std_error(&self, k: usize) -> f64 {
        self.total_var[k].sqrt()
    }

    /// Two-sided (1 − alpha) interval for coefficient `k`.
    pub fn confidence_interval(&self, k: usize, alpha: f64) -> (f64, f64) {
        let half = t_critical(self.df[k], alpha) * self.std_error(k);
        (self.theta_hat[k] - half, self.theta_hat[k] + half)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }
}

/// Scalar summary produced by Rubin's rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RubinScalar {
    pub estimate: f64,
    pub within: f64,
    pub between: f64,
    pub total: f64,
    pub df: f64,
}

/// Barnard–Rubin small-sample degrees of freedom for m imputations with
/// between variance `b`, total variance `t` and complete-data df `df_com`.
pub fn barnard_rubin_df(m: usize, b: f64, t: f64, df_com: f64) -> f64 {
    let mf = m as f64;
    let lambda = if t > 0.0 { ((1.0 + 1.0 / mf) * b / t).clamp(0.0, 1.0) } else { 0.0 };
    let df_obs = (df_com + 1.0) / (df_com + 3.0) * df_com * (1.0 - lambda);
    if lambda == 0.0 {
        return df_obs;
    }
    let df_old = (mf - 1.0) / (lambda * lambda);
    if df_obs <= 0.0 {
        return df_old;
    }
    df_old * df_obs / (df_old + df_obs)
}

/// Rubin's rules for one scalar: `estimates` and `variances` per imputation.
///
/// With a single imputation the between variance is zero and `df_com` is
/// returned unchanged as the degrees of freedom.
pub fn rubin_combine(estimates: &[f64], variances: &[f64], df_com: f64) -> RubinScalar {
    let m = estimates.len();
    assert!(m >= 1 && variances.len() == m, "one variance per estimate");
    let mf = m as f64;
    let estimate = estimates.iter().sum::<f64>() / mf;
    let within = variances.iter().sum::<f64>() / mf;
    if m == 1 {
        return RubinScalar {
            estimate,
            within,
            between: 0.0,
            total: within,
            df: df_com,
        };
    }
    let between = estimates.iter().map(|e| (e - estimate).powi(2)).sum::<f64>() / (mf - 1.0);
    let total = within + (1.0 + 1.0 / mf) * between;
    RubinScalar {
        estimate,
        within,
        between,
        total,
        df: barnard_rubin_df(m, between, total, df_com),
    }
}

/// Least-squares analysis of every completed dataset over all rows.
pub fn fit_per_imputation(imps: &ImputationSet, spec: &DesignSpec) -> Result<Vec<OlsFit>> {
    let Some(first) = imps.completed.first() else {
        return Err(Error::InvalidArgument("imputation set is empty".into()));
    };
    let design = encode_design(first, &spec.outcome_covariates, &first.all_rows())?;
    imps.completed
        .iter()
        .map(|ds| {
            let y: Vec<f64> = ds
                .outcome()
                .iter()
                .map(|v| v.ok_or_else(|| Error::Degenerate("completed dataset still has missing outcomes".into())))
                .collect::<Result<_>>()?;
            fit_ols(&y, &design)
        })
        .collect()
}

/// Rubin's rules across per-imputation fits.
pub fn pool_rubin(fits: &[OlsFit]) -> Result<PooledParameters> {
    let m = fits.len();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "pooling needs at least two imputations".into(),
        ));
    }
    let names = &fits[0].column_names;
    if fits.iter().any(|f| &f.column_names != names) {
        return Err(Error::InvalidArgument("fits do not share a coefficient layout".into()));
    }
    let k = names.len();
    let df_com = fits[0].residual_df as f64;
    let mut out = PooledParameters {
        column_names: names.clone(),
        theta_hat: Vec::with_capacity(k),
        within: Vec::with_capacity(k),
        between: Vec::with_capacity(k),
        total_var: Vec::with_capacity(k),
        df: Vec::with_capacity(k),
        m,
    };
    for j in 0..k {
        let est: Vec<f64> = fits.iter().map(|f| f.beta[j]).collect();
        let var: Vec<f64> = fits.iter().map(|f| f.covariance[(j, j)]).collect();
        let r = rubin_combine(&est, &var, df_com);
        out.theta_hat.push(r.estimate);
        out.within.push(r.within);
        out.between.push(r.between);
        out.total_var.push(r.total);
        out.df.push(r.df);
    }
    Ok(out)
}

/// Point prediction with its variance decomposition and interval. Interval
/// and variance fields are absent for baselines that carry no uncertainty
/// model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionWithInterval {
    /// Row index in the source dataset.
    pub row: usize,
    pub row_id: String,
    pub y_hat: f64,
    pub v_within: Option<f64>,
    pub v_between: Option<f64>,
    pub total_var: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub df: Option<f64>,
}

impl PredictionWithInterval {
    pub fn interval_length(&self) -> Option<f64> {
        Some(self.upper? - self.lower?)
    }

    pub fn covers(&self, y: f64) -> Option<bool> {
        Some(self.lower? <= y && y <= self.upper?)
    }

    fn with_interval(row: usize, row_id: String, r: RubinScalar) -> Self {
        let half = if r.total > 0.0 {
            t_critical(r.df, ALPHA) * r.total.sqrt()
        } else {
            0.0
        };
        Self {
            row,
            row_id,
            y_hat: r.estimate,
            v_within: Some(r.within),
            v_between: Some(r.between),
            total_var: Some(r.total),
            lower: Some(r.estimate - half),
            upper: Some(r.estimate + half),
            df: Some(r.df),
        }
    }
}

/// Combines per-imputation predictions ŷ_j and squared standard errors
/// se²_j for one target into a pooled prediction with a t interval.
pub fn combine_predictions(predictions: &[f64], se2: &[f64], df_com: f64) -> RubinScalar {
    rubin_combine(predictions, se2, df_com)
}

fn check_columns(expected: &[String], targets: &DesignMatrix) -> Result<()> {
    if expected != targets.column_names.as_slice() {
        return Err(Error::InvalidArgument(format!(
            "target columns [{}] do not match the model's [{}]",
            targets.column_names.join(", "),
            expected.join(", ")
        )));
    }
    Ok(())
}

/// (X_obs'X_obs)⁻¹ over the originally observed rows of an imputation set.
pub fn observed_design_inverse(imps: &ImputationSet) -> Result<DMatrix<f64>> {
    let ds = imps
        .completed
        .first()
        .ok_or_else(|| Error::InvalidArgument("imputation set is empty".into()))?;
    let design = encode_design(ds, &imps.spec.outcome_covariates, &ds.all_rows())?;
    let x_obs = design.values.select_rows(&imps.observed_rows);
    spd_inverse(&x_obs.tr_mul(&x_obs), "observed-data normal equations")
}

/// Predict-then-combine.
///
/// For each target row, ŷ_ij = x_i β̂_j and se²_ij = σ̂_j²(1 + x_i (X_obs'X_obs)⁻¹ x_i');
/// the pooled prediction is the mean over imputations with total variance
/// V_W + (1 + 1/m) V_B. Degrees of freedom follow Barnard–Rubin with the
/// analysis residual df; a single imputation uses n_obs − p.
pub fn predict_combine(
    imps: &ImputationSet,
    fits: &[OlsFit],
    targets: &DesignMatrix,
) -> Result<Vec<PredictionWithInterval>> {
    if fits.is_empty() || fits.len() != imps.m() {
        return Err(Error::InvalidArgument(
            "need exactly one fit per completed dataset".into(),
        ));
    }
    check_columns(&fits[0].column_names, targets)?;
    let xtx_obs_inv = observed_design_inverse(imps)?;
    let p = targets.ncols();
    let df_com = if fits.len() == 1 {
        imps.observed_rows.len().saturating_sub(p) as f64
    } else {
        fits[0].residual_df as f64
    };
    predict_combine_with(fits, &xtx_obs_inv, df_com, targets)
}

/// Predict-then-combine with a precomputed (X_obs'X_obs)⁻¹ and
/// complete-data degrees of freedom.
pub fn predict_combine_with(
    fits: &[OlsFit],
    xtx_obs_inv: &DMatrix<f64>,
    df_com: f64,
    targets: &DesignMatrix,
) -> Result<Vec<PredictionWithInterval>> {
    check_columns(&fits[0].column_names, targets)?;
    let preds: Vec<DVector<f64>> = fits.iter().map(|f| &targets.values * &f.beta).collect();
    let sigma2: Vec<f64> = fits.iter().map(|f| f.sigma * f.sigma).collect();
    let mut row = vec![0.0; targets.ncols()];
    let mut yj = vec![0.0; fits.len()];
    let mut se2 = vec![0.0; fits.len()];
    Ok((0..targets.nrows())
        .map(|i| {
            for (c, v) in row.iter_mut().enumerate() {
                *v = targets.values[(i, c)];
            }
            let lev = quad_form(xtx_obs_inv, &row);
            for j in 0..fits.len() {
                yj[j] = preds[j][i];
                se2[j] = sigma2[j] * (1.0 + lev);
            }
            let r = combine_predictions(&yj, &se2, df_com);
            PredictionWithInterval::with_interval(targets.rows[i], targets.row_ids[i].clone(), r)
        })
        .collect())
}

/// A fitted linear predictor usable for single-model intervals.
pub trait LinearPredictor {
    fn coefficients(&self) -> Vec<f64>;
    fn coefficient_names(&self) -> &[String];
    fn residual_sigma(&self) -> f64;
    /// Covariance of the coefficients.
    fn coefficient_covariance(&self) -> DMatrix<f64>;
    fn interval_df(&self) -> f64;
}

impl LinearPredictor for OlsFit {
    fn coefficients(&self) -> Vec<f64> {
        self.beta.iter().copied().collect()
    }
    fn coefficient_names(&self) -> &[String] {
        &self.column_names
    }
    fn residual_sigma(&self) -> f64 {
        self.sigma
    }
    fn coefficient_covariance(&self) -> DMatrix<f64> {
        self.covariance.clone()
    }
    fn interval_df(&self) -> f64 {
        self.residual_df as f64
    }
}

impl LinearPredictor for HeckmanMLFit {
    fn coefficients(&self) -> Vec<f64> {
        self.beta.clone()
    }
    fn coefficient_names(&self) -> &[String] {
        &self.outcome_names
    }
    fn residual_sigma(&self) -> f64 {
        self.sigma_eps
    }
    fn coefficient_covariance(&self) -> DMatrix<f64> {
        let p = self.p();
        self.covariance.view((0, 0), (p, p)).into_owned()
    }
    fn interval_df(&self) -> f64 {
        self.n_observed.saturating_sub(self.p()) as f64
    }
}

/// Prediction x_i β̂ with variance σ̂² + x_i Cov(β̂) x_i' and a t interval.
/// For selection-model fits this is the unconditional linear prediction.
pub fn predict_single<M: LinearPredictor + ?Sized>(
    model: &M,
    targets: &DesignMatrix,
) -> Result<Vec<PredictionWithInterval>> {
    check_columns(model.coefficient_names(), targets)?;
    let beta = DVector::from_vec(model.coefficients());
    let cov = model.coefficient_covariance();
    let s2 = model.residual_sigma().powi(2);
    let df = model.interval_df();
    let yhat = &targets.values * &beta;
    let mut row = vec![0.0; targets.ncols()];
    Ok((0..targets.nrows())
        .map(|i| {
            for (c, v) in row.iter_mut().enumerate() {
                *v = targets.values[(i, c)];
            }
            let var = s2 + quad_form(&cov, &row);
            let r = RubinScalar {
                estimate: yhat[i],
                within: var,
                between: 0.0,
                total: var,
                df,
            };
            PredictionWithInterval::with_interval(targets.rows[i], targets.row_ids[i].clone(), r)
        })
        .collect())
}

/// Median of the values (average of the two middle values for even counts).
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Predicts each missing outcome by the median observed outcome of its
/// group. No interval is produced.
pub fn predict_median_baseline(ds: &Dataset, group_key: &str) -> Result<Vec<PredictionWithInterval>> {
    let groups = ds.groups(group_key)?;
    let y = ds.outcome();
    let mut medians = vec![None; ds.n()];
    for (level, rows) in &groups {
        let mut obs: Vec<f64> = rows.iter().filter_map(|&i| y[i]).collect();
        let med = median(&mut obs);
        for &i in rows {
            if y[i].is_none() && med.is_none() {
                return Err(Error::Degenerate(format!(
                    "group `{level}` of `{group_key}` has no observed outcome"
                )));
            }
            medians[i] = med;
        }
    }
    Ok(ds
        .missing_rows()
        .into_iter()
        .map(|i| PredictionWithInterval {
            row: i,
            row_id: ds.row_ids()[i].clone(),
            y_hat: medians[i].expect("checked above"),
            v_within: None,
            v_between: None,
            total_var: None,
            lower: None,
            upper: None,
            df: None,
        })
        .collect())
}
