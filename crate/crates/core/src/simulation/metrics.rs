use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::run::{PredictionRecord, ReplicationResult};
use super::Mechanism;
use crate::data::{Column, Dataset};
use crate::error::{Error, Result};
use crate::imputation::Method;

/// Performance of one estimator of one scalar parameter across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    /// Replications contributing.
    pub n: usize,
    /// Mean estimate.
    pub mean: f64,
    /// Mean of (θ̂ − θ).
    pub bias: f64,
    /// Mean of (θ̂ − θ)/θ in percent; absent when θ = 0.
    pub rbias: Option<f64>,
    /// Root mean of the estimated variances.
    pub se_m: f64,
    /// Sample standard deviation of the estimates; needs two replications.
    pub se_e: Option<f64>,
    /// (SE_m / SE_e − 1) in percent.
    pub re_se: Option<f64>,
    /// Percent of intervals containing θ.
    pub cr: f64,
    /// sqrt(Σ(θ̂ − θ)² / (N − 1)); needs two replications.
    pub rmse: Option<f64>,
}

/// Aggregates per-replication estimates, variances and interval hits of one
/// parameter with true value `theta`. Returns `None` for no replications.
pub fn parameter_summary(estimates: &[f64], variances: &[f64], hits: &[bool], theta: f64) -> Option<ParamSummary> {
    let n = estimates.len();
    if n == 0 || variances.len() != n || hits.len() != n {
        return None;
    }
    let nf = n as f64;
    let mean = estimates.iter().sum::<f64>() / nf;
    let bias = mean - theta;
    let rbias = (theta != 0.0).then(|| estimates.iter().map(|e| (e - theta) / theta).sum::<f64>() / nf * 100.0);
    let se_m = (variances.iter().sum::<f64>() / nf).sqrt();
    let (se_e, rmse) = if n >= 2 {
        let ss: f64 = estimates.iter().map(|e| (e - mean).powi(2)).sum();
        let sq: f64 = estimates.iter().map(|e| (e - theta).powi(2)).sum();
        (Some((ss / (nf - 1.0)).sqrt()), Some((sq / (nf - 1.0)).sqrt()))
    } else {
        (None, None)
    };
    let re_se = se_e.filter(|&s| s > 0.0).map(|s| (se_m / s - 1.0) * 100.0);
    let cr = hits.iter().filter(|&&h| h).count() as f64 / nf * 100.0;
    Some(ParamSummary {
        n,
        mean,
        bias,
        rbias,
        se_m,
        se_e,
        re_se,
        cr,
        rmse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMetrics {
    pub method: Method,
    pub parameter: String,
    pub truth: f64,
    /// Replications in which the method failed.
    pub n_failed: usize,
    /// Absent when the method never produced this parameter.
    pub summary: Option<ParamSummary>,
}

fn methods_in(results: &[ReplicationResult]) -> Vec<Method> {
    let mut out = Vec::new();
    for r in results {
        for run in &r.methods {
            if !out.contains(&run.method) {
                out.push(run.method);
            }
        }
    }
    out
}

/// Parameter metrics for every method and every `(name, θ)` in `theta_true`.
/// Failed replications are excluded and counted.
pub fn evaluate_parameters(results: &[ReplicationResult], theta_true: &[(String, f64)]) -> Vec<ParamMetrics> {
    let mut out = Vec::new();
    for method in methods_in(results) {
        let runs: Vec<_> = results
            .iter()
            .filter_map(|r| r.methods.iter().find(|m| m.method == method))
            .collect();
        let n_failed = runs.iter().filter(|r| r.failure.is_some()).count();
        let mut by_name: BTreeMap<&str, (Vec<f64>, Vec<f64>, Vec<(f64, f64)>)> = BTreeMap::new();
        for run in runs.iter().filter(|r| r.failure.is_none()) {
            for p in &run.params {
                let e = by_name.entry(p.name.as_str()).or_default();
                e.0.push(p.estimate);
                e.1.push(p.variance);
                e.2.push((p.lower, p.upper));
            }
        }
        if by_name.is_empty() {
            // Methods that estimate no coefficients (the median baseline).
            continue;
        }
        for (name, theta) in theta_true {
            let summary = by_name.get(name.as_str()).and_then(|(est, var, ci)| {
                let hits: Vec<bool> = ci.iter().map(|&(l, u)| l <= *theta && *theta <= u).collect();
                parameter_summary(est, var, &hits, *theta)
            });
            out.push(ParamMetrics {
                method,
                parameter: name.clone(),
                truth: *theta,
                n_failed,
                summary,
            });
        }
    }
    out
}

/// Assignment of study rows to the levels of a categorical covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub key: String,
    pub levels: Vec<String>,
    /// Level code of every study row.
    pub codes: Vec<u32>,
}

impl Grouping {
    pub fn from_dataset(ds: &Dataset, key: &str) -> Result<Self> {
        match ds.column(key) {
            Some(Column::Categorical { levels, codes }) => Ok(Self {
                key: key.to_string(),
                levels: levels.clone(),
                codes: codes.clone(),
            }),
            Some(Column::Continuous(_)) => Err(Error::InvalidArgument(format!("`{key}` is not categorical"))),
            None => Err(Error::InvalidArgument(format!("no covariate `{key}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredMetrics {
    pub method: Method,
    /// Level of the grouping covariate, or `None` for all rows.
    pub group: Option<String>,
    /// Replications contributing at least one prediction.
    pub n_reps: usize,
    pub n_failed: usize,
    pub n_predictions: usize,
    /// Predictions left out of RE because the true value is zero.
    pub n_zero_excluded: usize,
    /// Mean over replications of the mean |Ŷ − Y| / |Y|, in percent.
    pub re: Option<f64>,
    /// Root of the mean over replications of the mean squared error.
    pub rmse: Option<f64>,
    /// Mean over replications of the percent of intervals covering Y.
    pub cr: Option<f64>,
    /// Mean over replications of the mean interval length.
    pub pi: Option<f64>,
}

#[derive(Default)]
struct PredAccumulator {
    n_reps: usize,
    n_predictions: usize,
    n_zero: usize,
    re: (f64, usize),
    mse: f64,
    cr: f64,
    pi: f64,
    all_intervals: bool,
}

impl PredAccumulator {
    fn new() -> Self {
        Self {
            all_intervals: true,
            ..Self::default()
        }
    }

    fn add<'a>(&mut self, records: impl Iterator<Item = &'a PredictionRecord>) {
        let (mut n, mut nz, mut re, mut se, mut hits, mut len) = (0usize, 0usize, 0.0, 0.0, 0usize, 0.0);
        for p in records {
            n += 1;
            let err = p.y_hat - p.truth;
            se += err * err;
            if p.truth == 0.0 {
                nz += 1;
            } else {
                re += err.abs() / p.truth.abs();
            }
            match (p.hit(), p.length()) {
                (Some(h), Some(l)) => {
                    hits += h as usize;
                    len += l;
                }
                _ => self.all_intervals = false,
            }
        }
        if n == 0 {
            return;
        }
        let nf = n as f64;
        self.n_reps += 1;
        self.n_predictions += n;
        self.n_zero += nz;
        if n > nz {
            self.re.0 += re / (n - nz) as f64 * 100.0;
            self.re.1 += 1;
        }
        self.mse += se / nf;
        self.cr += hits as f64 / nf * 100.0;
        self.pi += len / nf;
    }

    fn finish(self, method: Method, group: Option<String>, n_failed: usize) -> PredMetrics {
        let reps = self.n_reps as f64;
        let some = self.n_reps > 0;
        let intervals = some && self.all_intervals;
        PredMetrics {
            method,
            group,
            n_reps: self.n_reps,
            n_failed,
            n_predictions: self.n_predictions,
            n_zero_excluded: self.n_zero,
            re: (self.re.1 > 0).then(|| self.re.0 / self.re.1 as f64),
            rmse: some.then(|| (self.mse / reps).sqrt()),
            cr: intervals.then(|| self.cr / reps),
            pi: intervals.then(|| self.pi / reps),
        }
    }
}

/// Prediction metrics per method over all predicted rows, or per level of
/// `group_by` when given. Failed replications are excluded and counted.
pub fn evaluate_predictions(results: &[ReplicationResult], group_by: Option<&Grouping>) -> Vec<PredMetrics> {
    let mut out = Vec::new();
    for method in methods_in(results) {
        let runs: Vec<_> = results
            .iter()
            .filter_map(|r| r.methods.iter().find(|m| m.method == method))
            .collect();
        let n_failed = runs.iter().filter(|r| r.failure.is_some()).count();
        let ok: Vec<_> = runs.iter().filter(|r| r.failure.is_none()).collect();
        match group_by {
            None => {
                let mut acc = PredAccumulator::new();
                for run in &ok {
                    acc.add(run.predictions.iter());
                }
                out.push(acc.finish(method, None, n_failed));
            }
            Some(g) => {
                let mut accs: Vec<PredAccumulator> = g.levels.iter().map(|_| PredAccumulator::new()).collect();
                for run in &ok {
                    for (code, acc) in accs.iter_mut().enumerate() {
                        acc.add(run.predictions.iter().filter(|p| g.codes[p.row] as usize == code));
                    }
                }
                for (level, acc) in g.levels.iter().zip(accs) {
                    if acc.n_reps > 0 {
                        out.push(acc.finish(method, Some(level.clone()), n_failed));
                    }
                }
            }
        }
    }
    out
}

/// Aggregate results of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub mechanism: Mechanism,
    pub rho: f64,
    pub sigma2_eps: f64,
    pub replications: usize,
    pub mean_missing_rate: f64,
    pub params: Vec<ParamMetrics>,
    pub predictions: Vec<PredMetrics>,
}

impl MetricsReport {
    pub fn param(&self, method: Method, name: &str) -> Option<&ParamSummary> {
        self.params
            .iter()
            .find(|p| p.method == method && p.parameter == name)
            .and_then(|p| p.summary.as_ref())
    }

    pub fn prediction(&self, method: Method) -> Option<&PredMetrics> {
        self.predictions.iter().find(|p| p.method == method && p.group.is_none())
    }
}
