use std::cell::OnceCell;
use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_parameters, evaluate_predictions, MetricsReport};
use super::truth::{prepare_study, Study};
use super::{Mechanism, ScenarioConfig, SelectionRule};
use crate::data::{check_common_support, encode_design, Dataset};
use crate::error::{Error, Result};
use crate::imputation::{
    impute, impute_heckman_single_with_fit, impute_mi_heckman_ml_with_fit, Method, MethodConfig,
};
use crate::par;
use crate::pooling::{
    fit_per_imputation, pool_rubin, predict_combine, predict_median_baseline, PredictionWithInterval, ALPHA,
};
use crate::selection::{heckman_ml_from_data, HeckmanMLFit, SelectionData, SolverOptions};
use crate::stats::{norm_cdf, t_critical, RngStream};

/// One coefficient estimate from one method in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub estimate: f64,
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
    pub truth: f64,
    /// Whether the 95% interval contains the truth.
    pub hit: bool,
}

/// One prediction of a deleted outcome, with its pre-deletion value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    /// Row index in the study covariates.
    pub row: usize,
    pub y_hat: f64,
    pub truth: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl PredictionRecord {
    pub fn hit(&self) -> Option<bool> {
        Some(self.lower? <= self.truth && self.truth <= self.upper?)
    }

    pub fn length(&self) -> Option<f64> {
        Some(self.upper? - self.lower?)
    }
}

/// Outcome of one method on one replication. A failed method carries the
/// error message and no records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: Method,
    pub failure: Option<String>,
    pub params: Vec<ParamRecord>,
    pub predictions: Vec<PredictionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    /// Share of rows whose outcome was deleted.
    pub missing_rate: f64,
    /// Rows removed by the common-support check before analysis.
    pub n_dropped: usize,
    pub methods: Vec<MethodRun>,
}

/// Replication records and their aggregate metrics.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub results: Vec<ReplicationResult>,
    pub report: MetricsReport,
}

/// Generates the complete outcome for every study row and deletes it
/// according to the scenario's mechanism. Returns the post-deletion dataset
/// and the complete outcome.
pub fn generate_replication<R: Rng + ?Sized>(
    study: &Study,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<(Dataset, Vec<f64>)> {
    let n = study.n();
    let sigma = cfg.sigma2_eps.sqrt();
    let xb = &study.outcome_index;
    let (y, observed): (Vec<f64>, Vec<bool>) = if cfg.mechanism.is_heckman() {
        let rho = cfg.rho;
        let tail = (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|i| {
                let e1: f64 = rng.sample(StandardNormal);
                let e2: f64 = rng.sample(StandardNormal);
                let z = study.selection_index[i];
                let observed = match cfg.selection_rule {
                    SelectionRule::Latent => z + e1 >= 0.0,
                    SelectionRule::Probability => norm_cdf(z) >= 0.5,
                };
                (xb[i] + sigma * (rho * e1 + tail * e2), observed)
            })
            .unzip()
    } else {
        let y: Vec<f64> = (0..n)
            .map(|i| xb[i] + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let k = study.group_levels.len();
        let (mut sum, mut count) = (vec![0.0; k], vec![0usize; k]);
        for (yi, &g) in y.iter().zip(&study.group_codes) {
            sum[g as usize] += yi;
            count[g as usize] += 1;
        }
        let observed = (0..n)
            .map(|i| {
                let g = study.group_codes[i] as usize;
                let dev = sum[g] / count[g] as f64 - y[i];
                rng.random::<f64>() < norm_cdf(cfg.c + cfg.slope * dev)
            })
            .collect();
        (y, observed)
    };
    let outcome = y.iter().zip(&observed).map(|(&v, &o)| o.then_some(v)).collect();
    Ok((study.covariates.with_outcome(outcome)?, y))
}

type SharedMl = std::result::Result<(SelectionData, Arc<HeckmanMLFit>), String>;

struct Context<'a> {
    cfg: &'a ScenarioConfig,
    ds: Dataset,
    /// Study row index of each analysed row.
    kept: Vec<usize>,
    y_true: Vec<f64>,
    theta_true: HashMap<&'a str, f64>,
    ml: OnceCell<SharedMl>,
}

impl Context<'_> {
    /// Maximum-likelihood fit shared by the methods built on it.
    fn ml(&self) -> std::result::Result<&(SelectionData, Arc<HeckmanMLFit>), String> {
        self.ml
            .get_or_init(|| {
                let data = SelectionData::new(&self.ds, &self.cfg.spec).map_err(|e| e.to_string())?;
                let fit = heckman_ml_from_data(&data, None, &SolverOptions::default()).map_err(|e| e.to_string())?;
                if !fit.converged {
                    return Err(Error::NotConverged {
                        stage: "selection model",
                        iterations: fit.iterations,
                    }
                    .to_string());
                }
                Ok((data, Arc::new(fit)))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn predictions(&self, preds: Vec<PredictionWithInterval>) -> Vec<PredictionRecord> {
        preds
            .into_iter()
            .map(|p| {
                let row = self.kept[p.row];
                PredictionRecord {
                    row,
                    y_hat: p.y_hat,
                    truth: self.y_true[row],
                    lower: p.lower,
                    upper: p.upper,
                }
            })
            .collect()
    }

    fn param(&self, name: &str, estimate: f64, variance: f64, (lower, upper): (f64, f64)) -> Option<ParamRecord> {
        let truth = *self.theta_true.get(name)?;
        Some(ParamRecord {
            name: name.to_string(),
            estimate,
            variance,
            lower,
            upper,
            truth,
            hit: lower <= truth && truth <= upper,
        })
    }

    fn analyse(
        &self,
        method: Method,
        rng: RngStream,
    ) -> std::result::Result<(Vec<ParamRecord>, Vec<PredictionRecord>), String> {
        let (ds, spec) = (&self.ds, &self.cfg.spec);
        if method == Method::Median {
            let preds = predict_median_baseline(ds, &self.cfg.group_key).map_err(|e| e.to_string())?;
            return Ok((Vec::new(), self.predictions(preds)));
        }
        let opts = &self.cfg.options;
        let mcfg = MethodConfig {
            method,
            m: opts.m,
            donors: opts.donors,
            trees: opts.trees,
            tree: opts.tree,
            rng,
        };
        let imps = match method {
            Method::Hml => {
                let (data, fit) = self.ml()?;
                impute_heckman_single_with_fit(ds, spec, data, fit.clone(), &mcfg)
            }
            Method::MIHml => {
                let (data, fit) = self.ml()?;
                impute_mi_heckman_ml_with_fit(ds, spec, data, fit.clone(), &mcfg)
            }
            _ => impute(ds, spec, &mcfg),
        }
        .map_err(|e| e.to_string())?;
        let inner = || -> Result<(Vec<ParamRecord>, Vec<PredictionRecord>)> {
            let fits = fit_per_imputation(&imps, spec)?;
            let params = if let [fit] = fits.as_slice() {
                let t = t_critical(fit.residual_df as f64, ALPHA);
                fit.column_names
                    .iter()
                    .enumerate()
                    .filter_map(|(k, name)| {
                        let (b, v) = (fit.beta[k], fit.covariance[(k, k)]);
                        let half = t * v.sqrt();
                        self.param(name, b, v, (b - half, b + half))
                    })
                    .collect()
            } else {
                let pooled = pool_rubin(&fits)?;
                pooled
                    .column_names
                    .iter()
                    .enumerate()
                    .filter_map(|(k, name)| {
                        self.param(
                            name,
                            pooled.theta_hat[k],
                            pooled.total_var[k],
                            pooled.confidence_interval(k, ALPHA),
                        )
                    })
                    .collect()
            };
            let design = encode_design(ds, &spec.outcome_covariates, &ds.all_rows())?;
            let targets = design.select_rows(&ds.missing_rows());
            let preds = predict_combine(&imps, &fits, &targets)?;
            Ok((params, self.predictions(preds)))
        };
        inner().map_err(|e| e.to_string())
    }
}

fn failed_all(cfg: &ScenarioConfig, replication: usize, missing_rate: f64, message: String) -> ReplicationResult {
    ReplicationResult {
        replication,
        missing_rate,
        n_dropped: 0,
        methods: cfg
            .methods
            .iter()
            .map(|&method| MethodRun {
                method,
                failure: Some(message.clone()),
                params: Vec::new(),
                predictions: Vec::new(),
            })
            .collect(),
    }
}

/// Generates replication `r` and applies every configured method to it.
/// Method failures are recorded, never propagated.
pub fn run_replication(study: &Study, cfg: &ScenarioConfig, r: usize) -> ReplicationResult {
    let stream = RngStream::new(cfg.seed, r as u64);
    let (ds_full, y_true) = match generate_replication(study, cfg, &mut stream.child(0).rng()) {
        Ok(v) => v,
        Err(e) => return failed_all(cfg, r, f64::NAN, e.to_string()),
    };
    let missing_rate = ds_full.n_missing() as f64 / ds_full.n() as f64;
    let (ds, dropped) = match check_common_support(&ds_full, &cfg.spec) {
        Ok(v) => v,
        Err(e) => return failed_all(cfg, r, missing_rate, e.to_string()),
    };
    let mut alive = vec![true; ds_full.n()];
    for d in &dropped.dropped {
        alive[d.index] = false;
    }
    let ctx = Context {
        cfg,
        ds,
        kept: (0..ds_full.n()).filter(|&i| alive[i]).collect(),
        y_true,
        theta_true: study
            .truth
            .outcome_names
            .iter()
            .map(String::as_str)
            .zip(study.truth.beta_star.iter().copied())
            .collect(),
        ml: OnceCell::new(),
    };
    let methods = cfg
        .methods
        .iter()
        .map(|&method| {
            let slot = Method::ALL.iter().position(|&m| m == method).expect("listed") as u64;
            match ctx.analyse(method, stream.child(1 + slot)) {
                Ok((params, predictions)) => MethodRun {
                    method,
                    failure: None,
                    params,
                    predictions,
                },
                Err(message) => {
                    log::debug!("replication {r}: {method} failed: {message}");
                    MethodRun {
                        method,
                        failure: Some(message),
                        params: Vec::new(),
                        predictions: Vec::new(),
                    }
                }
            }
        })
        .collect();
    ReplicationResult {
        replication: r,
        missing_rate,
        n_dropped: dropped.len(),
        methods,
    }
}

/// Runs every replication of `cfg` against an already prepared study and
/// aggregates the metrics. Replications run in parallel when enabled; the
/// output does not depend on scheduling.
pub fn run_scenario_in(study: &Study, cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    if cfg.mechanism == Mechanism::NonHeckman && study.group_key != cfg.group_key {
        return Err(Error::InvalidArgument(format!(
            "study groups rows by `{}` but the scenario asks for `{}`",
            study.group_key, cfg.group_key
        )));
    }
    let results = par::map_indexed(cfg.replications, |r| run_replication(study, cfg, r));
    let report = MetricsReport {
        label: cfg.label(),
        mechanism: cfg.mechanism,
        rho: cfg.rho,
        sigma2_eps: cfg.sigma2_eps,
        replications: cfg.replications,
        mean_missing_rate: {
            let rates: Vec<f64> = results.iter().map(|r| r.missing_rate).filter(|v| v.is_finite()).collect();
            rates.iter().sum::<f64>() / rates.len().max(1) as f64
        },
        params: evaluate_parameters(&results, &study.truth.theta_true()),
        predictions: evaluate_predictions(&results, None),
    };
    Ok(ScenarioOutput { results, report })
}

/// Prepares the synthetic study described by `cfg` and runs it.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(Study, ScenarioOutput)> {
    let study = prepare_study(cfg)?;
    let out = run_scenario_in(&study, cfg)?;
    Ok((study, out))
}
