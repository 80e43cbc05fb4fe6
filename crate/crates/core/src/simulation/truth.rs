use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::covariates::generate_covariates;
use super::metrics::Grouping;
use super::{ScenarioConfig, FIRST_ACTIVITY, LOG_REVENUE, REGION, SECTOR, SIZE};
use crate::data::{encode_design, Column, Dataset, DesignSpec};
use crate::error::{Error, Result};
use crate::selection::{heckman_ml, SolverOptions};
use crate::stats::{norm_cdf, RngStream};

/// Stream id reserved for study-level randomness (covariates, seed outcome,
/// truth draw); replications use ids 0..N.
const STUDY_STREAM: u64 = u64::MAX;

/// Known generating model for the synthetic seed dataset on which the truth
/// is calibrated.
///
/// Outcome: `intercept + Σ slope·x + Σ level effect + ε` with ε ~ N(0, σ²),
/// level effects drawn from N(0, sd²). Selection: `a + Σ slope·(x − mean x) +
/// Σ fixed level effect + Σ random level effect + εˢ ≥ 0`, with `a` solved so
/// that the expected observed share hits `observed_share`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedModel {
    pub intercept: f64,
    pub slopes: BTreeMap<String, f64>,
    pub level_sd: BTreeMap<String, f64>,
    pub sigma_eps: f64,
    pub rho: f64,
    pub selection_slopes: BTreeMap<String, f64>,
    pub selection_levels: BTreeMap<String, Vec<f64>>,
    pub selection_level_sd: BTreeMap<String, f64>,
    pub observed_share: f64,
}

impl Default for SeedModel {
    fn default() -> Self {
        let map = |pairs: &[(&str, f64)]| pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        Self {
            intercept: -10.4,
            slopes: map(&[(LOG_REVENUE, 1.0)]),
            level_sd: map(&[(SECTOR, 2.5), (REGION, 0.3), (FIRST_ACTIVITY, 0.3)]),
            sigma_eps: 1.5,
            rho: -0.3,
            selection_slopes: map(&[(LOG_REVENUE, 0.32)]),
            selection_levels: [(SIZE.to_string(), vec![1.0, 0.4, -0.5, -1.1])].into_iter().collect(),
            selection_level_sd: map(&[(REGION, 0.2), (FIRST_ACTIVITY, 0.2)]),
            observed_share: 0.39,
        }
    }
}

impl SeedModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_eps > 0.0) || !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::InvalidArgument("seed model needs σ > 0 and |ρ| < 1".into()));
        }
        if !(self.observed_share > 0.0 && self.observed_share < 1.0) {
            return Err(Error::InvalidArgument("observed_share must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

fn continuous<'a>(ds: &'a Dataset, name: &str) -> Result<&'a [f64]> {
    match ds.column(name) {
        Some(Column::Continuous(v)) => Ok(v),
        Some(_) => Err(Error::Schema(format!("`{name}` is not continuous"))),
        None => Err(Error::Schema(format!("no covariate `{name}`"))),
    }
}

fn categorical<'a>(ds: &'a Dataset, name: &str) -> Result<(&'a [String], &'a [u32])> {
    match ds.column(name) {
        Some(Column::Categorical { levels, codes }) => Ok((levels, codes)),
        Some(_) => Err(Error::Schema(format!("`{name}` is not categorical"))),
        None => Err(Error::Schema(format!("no covariate `{name}`"))),
    }
}

fn add_random_levels<R: Rng + ?Sized>(
    ds: &Dataset,
    sds: &BTreeMap<String, f64>,
    index: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    for (name, sd) in sds {
        let (levels, codes) = categorical(ds, name)?;
        let effects: Vec<f64> = (0..levels.len())
            .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        for (v, &c) in index.iter_mut().zip(codes) {
            *v += effects[c as usize];
        }
    }
    Ok(())
}

/// Intercept `a` with mean Φ(a + offset_i) = share.
fn solve_intercept(offsets: &[f64], share: f64) -> f64 {
    let share_at = |a: f64| offsets.iter().map(|o| norm_cdf(a + o)).sum::<f64>() / offsets.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if share_at(mid) < share {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Attaches an outcome generated by `model` to `covariates`, with missingness
/// from the latent-threshold selection rule.
pub fn generate_seed_dataset<R: Rng + ?Sized>(
    covariates: &Dataset,
    model: &SeedModel,
    rng: &mut R,
) -> Result<Dataset> {
    model.validate()?;
    let n = covariates.n();
    let mut xb = vec![model.intercept; n];
    for (name, slope) in &model.slopes {
        for (v, x) in xb.iter_mut().zip(continuous(covariates, name)?) {
            *v += slope * x;
        }
    }
    add_random_levels(covariates, &model.level_sd, &mut xb, rng)?;

    let mut zs = vec![0.0; n];
    for (name, slope) in &model.selection_slopes {
        let x = continuous(covariates, name)?;
        let mean = x.iter().sum::<f64>() / n as f64;
        for (v, x) in zs.iter_mut().zip(x) {
            *v += slope * (x - mean);
        }
    }
    for (name, effects) in &model.selection_levels {
        let (levels, codes) = categorical(covariates, name)?;
        if effects.len() != levels.len() {
            return Err(Error::InvalidArgument(format!(
                "seed model gives {} effects for the {} levels of `{name}`",
                effects.len(),
                levels.len()
            )));
        }
        for (v, &c) in zs.iter_mut().zip(codes) {
            *v += effects[c as usize];
        }
    }
    add_random_levels(covariates, &model.selection_level_sd, &mut zs, rng)?;
    let a = solve_intercept(&zs, model.observed_share);

    let (rho, sigma) = (model.rho, model.sigma_eps);
    let tail = (1.0 - rho * rho).sqrt();
    let outcome = (0..n)
        .map(|i| {
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            let y = xb[i] + sigma * (rho * e1 + tail * e2);
            (a + zs[i] + e1 >= 0.0).then_some(y)
        })
        .collect();
    covariates.with_outcome(outcome)
}

/// The fixed truth every replication is generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCalibration {
    pub outcome_names: Vec<String>,
    pub selection_names: Vec<String>,
    /// Maximum-likelihood outcome coefficients on the seed data.
    pub beta_hat: Vec<f64>,
    pub beta_se: Vec<f64>,
    /// True outcome coefficients: one draw from N(β̂, se²).
    pub beta_star: Vec<f64>,
    /// True selection coefficients, taken from the fit unchanged.
    pub beta_s_hat: Vec<f64>,
    pub sigma_eps_hat: f64,
    pub rho_hat: f64,
    pub loglik: f64,
    pub n_rows: usize,
    pub n_observed: usize,
}

impl TruthCalibration {
    /// True value of the named outcome coefficient.
    pub fn beta(&self, name: &str) -> Option<f64> {
        self.outcome_names.iter().position(|n| n == name).map(|k| self.beta_star[k])
    }

    /// (name, value) pairs of all true outcome coefficients.
    pub fn theta_true(&self) -> Vec<(String, f64)> {
        self.outcome_names.iter().cloned().zip(self.beta_star.iter().copied()).collect()
    }
}

/// Elementwise draw from N(β̂, se²).
pub fn draw_beta_star<R: Rng + ?Sized>(beta_hat: &[f64], se: &[f64], rng: &mut R) -> Vec<f64> {
    beta_hat
        .iter()
        .zip(se)
        .map(|(b, s)| b + s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

/// Fits the selection model by maximum likelihood on `seed_ds` and fixes the
/// simulation truth: β* drawn once around β̂, βˢ kept as estimated.
pub fn calibrate_truth<R: Rng + ?Sized>(
    seed_ds: &Dataset,
    spec: &DesignSpec,
    rng: &mut R,
) -> Result<TruthCalibration> {
    let fit = heckman_ml(seed_ds, spec, None, &SolverOptions::default())?;
    if !fit.converged {
        return Err(Error::NotConverged {
            stage: "truth calibration",
            iterations: fit.iterations,
        });
    }
    let beta_se = fit.beta_std_errors();
    let beta_star = draw_beta_star(&fit.beta, &beta_se, rng);
    Ok(TruthCalibration {
        outcome_names: fit.outcome_names.clone(),
        selection_names: fit.selection_names.clone(),
        beta_hat: fit.beta.clone(),
        beta_se,
        beta_star,
        beta_s_hat: fit.beta_s.clone(),
        sigma_eps_hat: fit.sigma_eps,
        rho_hat: fit.rho,
        loglik: fit.loglik,
        n_rows: seed_ds.n(),
        n_observed: fit.n_observed,
    })
}

/// Rows of `ds` whose level of some categorical covariate in `spec` has no
/// observed outcome; such levels cannot be estimated from the seed data.
fn drop_unobserved_levels(ds: Dataset, spec: &DesignSpec) -> Dataset {
    let y = ds.outcome();
    let mut alive = vec![true; ds.n()];
    for name in spec.referenced() {
        if let Some(Column::Categorical { levels, codes }) = ds.column(&name) {
            let mut seen = vec![false; levels.len()];
            for (i, &c) in codes.iter().enumerate() {
                seen[c as usize] |= y[i].is_some();
            }
            for (i, &c) in codes.iter().enumerate() {
                alive[i] &= seen[c as usize];
            }
        }
    }
    let keep: Vec<usize> = (0..ds.n()).filter(|&i| alive[i]).collect();
    if keep.len() == ds.n() {
        return ds;
    }
    log::warn!(
        "dropping {} seed rows whose level has no observed outcome",
        ds.n() - keep.len()
    );
    ds.select_rows(&keep)
}

/// Everything fixed across the replications of a study: the covariates, the
/// calibrated truth and the linear predictors it implies.
#[derive(Debug, Clone)]
pub struct Study {
    pub covariates: Dataset,
    pub seed_data: Dataset,
    pub truth: TruthCalibration,
    /// X β* for every row.
    pub outcome_index: Vec<f64>,
    /// Xˢ β̂ˢ for every row.
    pub selection_index: Vec<f64>,
    /// Level code of every row in the grouping covariate.
    pub group_codes: Vec<u32>,
    pub group_levels: Vec<String>,
    pub group_key: String,
}

impl Study {
    /// Calibrates on `seed_ds` (whose covariates are reused by every
    /// replication) with the truth draw taken from `rng`. Rows in levels
    /// without any observed outcome are removed first.
    pub fn from_seed<R: Rng + ?Sized>(
        seed_ds: Dataset,
        spec: &DesignSpec,
        group_key: &str,
        rng: &mut R,
    ) -> Result<Self> {
        let seed_ds = drop_unobserved_levels(seed_ds, spec);
        let truth = calibrate_truth(&seed_ds, spec, rng)?;
        Self::with_truth(seed_ds, spec, group_key, truth)
    }

    /// Uses a given truth; its coefficient names must match the encoding of
    /// `seed_ds` under `spec`.
    pub fn with_truth(seed_ds: Dataset, spec: &DesignSpec, group_key: &str, truth: TruthCalibration) -> Result<Self> {
        let rows = seed_ds.all_rows();
        let x = encode_design(&seed_ds, &spec.outcome_covariates, &rows)?;
        let xs = encode_design(&seed_ds, &spec.selection_covariates, &rows)?;
        if x.column_names != truth.outcome_names || xs.column_names != truth.selection_names {
            return Err(Error::InvalidArgument(
                "truth coefficients do not match the covariate encoding".into(),
            ));
        }
        let index = |m: &DMatrix<f64>, b: &[f64]| -> Vec<f64> {
            (m * DVector::from_column_slice(b)).iter().copied().collect()
        };
        let (levels, codes) = categorical(&seed_ds, group_key)?;
        Ok(Self {
            outcome_index: index(&x.values, &truth.beta_star),
            selection_index: index(&xs.values, &truth.beta_s_hat),
            group_codes: codes.to_vec(),
            group_levels: levels.to_vec(),
            group_key: group_key.to_string(),
            covariates: seed_ds.with_outcome(vec![None; seed_ds.n()])?,
            seed_data: seed_ds,
            truth,
        })
    }

    pub fn n(&self) -> usize {
        self.covariates.n()
    }

    /// Rows grouped by the study's grouping covariate, for per-group metrics.
    pub fn grouping(&self) -> Grouping {
        Grouping {
            key: self.group_key.clone(),
            levels: self.group_levels.clone(),
            codes: self.group_codes.clone(),
        }
    }
}

/// Builds the synthetic study described by `cfg`: covariates from the
/// profile, a seed outcome from the seed model, and the calibrated truth.
pub fn prepare_study(cfg: &ScenarioConfig) -> Result<Study> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed, STUDY_STREAM);
    let covariates = generate_covariates(cfg.n_rows, &cfg.profile, &mut root.child(0).rng())?;
    let seed_ds = generate_seed_dataset(&covariates, &cfg.seed_model, &mut root.child(1).rng())?;
    Study::from_seed(seed_ds, &cfg.spec, &cfg.group_key, &mut root.child(2).rng())
}

/// Builds a study on a user-supplied seed dataset (e.g. real covariates with
/// a partly observed outcome), using `cfg`'s spec, grouping and seed.
pub fn prepare_study_from(seed_ds: Dataset, cfg: &ScenarioConfig) -> Result<Study> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed, STUDY_STREAM);
    Study::from_seed(seed_ds, &cfg.spec, &cfg.group_key, &mut root.child(2).rng())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_se_keeps_estimate() {
        let b = [1.0, -2.0, 0.5];
        let star = draw_beta_star(&b, &[0.0; 3], &mut RngStream::new(3, 3).rng());
        assert_eq!(star, b.to_vec());
    }

    #[test]
    fn intercept_hits_share() {
        let offsets: Vec<f64> = (0..100).map(|i| (i as f64 - 50.0) / 25.0).collect();
        let a = solve_intercept(&offsets, 0.39);
        let share = offsets.iter().map(|o| norm_cdf(a + o)).sum::<f64>() / 100.0;
        assert!((share - 0.39).abs() < 1e-9);
    }
}
