//! Single and multiple imputation of a missing outcome: regression
//! prediction, selection-model draws, predictive mean matching, random-forest
//! hot deck, and proper multiple imputation under the selection model.

mod forest;
mod heckman;
mod linear;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use forest::{impute_mi_rf, RegressionTree, TreeOptions};
pub use heckman::{
    impute_heckman_single, impute_heckman_single_with_fit, impute_mi_heckman_2step,
    impute_mi_heckman_ml, impute_mi_heckman_ml_with_fit,
};
pub use linear::{impute_lm_single, impute_mi_pmm, posterior_draw_linear};

use crate::data::{encode_design, DesignMatrix, DesignSpec, Dataset};
use crate::error::{Error, Result};
use crate::par;
use crate::selection::{Heckman2StepFit, HeckmanMLFit, OlsFit};
use crate::stats::RngStream;

/// Analysis methods compared in the simulation study. `Median` is a
/// prediction-only baseline and cannot impute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Median,
    LM,
    Hml,
    MIPmm,
    MIRF,
    MIHml,
    MIH2Step,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Median,
        Method::LM,
        Method::MIPmm,
        Method::MIRF,
        Method::Hml,
        Method::MIHml,
        Method::MIH2Step,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Median => "Median",
            Method::LM => "LM",
            Method::Hml => "Hml",
            Method::MIPmm => "MIPmm",
            Method::MIRF => "MIRF",
            Method::MIHml => "MIHml",
            Method::MIH2Step => "MIH2Step",
        }
    }

    /// Produces several completed datasets.
    pub fn is_multiple(self) -> bool {
        matches!(self, Method::MIPmm | Method::MIRF | Method::MIHml | Method::MIH2Step)
    }

    /// Produces completed datasets at all.
    pub fn is_imputation(self) -> bool {
        self != Method::Median
    }

    /// Uses the selection (missingness) equation.
    pub fn uses_selection_model(self) -> bool {
        matches!(self, Method::Hml | Method::MIHml | Method::MIH2Step)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown method `{s}` (expected one of {})",
                    Method::ALL.map(|m| m.name()).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    /// Number of imputations; single-imputation methods always use one.
    pub m: usize,
    /// Donor pool size for predictive mean matching.
    pub donors: usize,
    pub trees: usize,
    pub tree: TreeOptions,
    pub rng: RngStream,
}

impl MethodConfig {
    pub fn new(method: Method, rng: RngStream) -> Self {
        Self {
            method,
            m: 5,
            donors: 5,
            trees: 10,
            tree: TreeOptions::default(),
            rng,
        }
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    /// Number of completed datasets the method produces.
    pub fn effective_m(&self) -> usize {
        if self.method.is_multiple() {
            self.m
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        if self.donors == 0 {
            return Err(Error::InvalidArgument("donor pool must hold at least one row".into()));
        }
        if self.trees == 0 {
            return Err(Error::InvalidArgument("forest needs at least one tree".into()));
        }
        if self.tree.min_leaf == 0 {
            return Err(Error::InvalidArgument("minimum leaf size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Parameters that generated one completed dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterDraw {
    pub beta: Vec<f64>,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub beta_lambda: Option<f64>,
    pub beta_s: Option<Vec<f64>>,
}

/// The fitted model an imputation was derived from.
#[derive(Debug, Clone)]
pub enum SourceFit {
    Ols(Box<OlsFit>),
    HeckmanMl(Arc<HeckmanMLFit>),
    TwoStep(Box<Heckman2StepFit>),
    /// Hot-deck forest: no parametric fit.
    Forest,
}

#[derive(Debug, Clone)]
pub struct ImputationSet {
    pub completed: Vec<Dataset>,
    pub draws: Vec<ParameterDraw>,
    pub method: MethodConfig,
    pub source_fit: SourceFit,
    pub spec: DesignSpec,
    /// Rows whose outcome was observed in the source dataset.
    pub observed_rows: Vec<usize>,
    /// Rows that were imputed.
    pub missing_rows: Vec<usize>,
}

impl ImputationSet {
    pub fn m(&self) -> usize {
        self.completed.len()
    }

    /// Imputed values of completed dataset `j`, aligned with `missing_rows`.
    pub fn imputed_values(&self, j: usize) -> Vec<f64> {
        let y = self.completed[j].outcome();
        self.missing_rows
            .iter()
            .map(|&i| y[i].expect("completed datasets have no missing outcome"))
            .collect()
    }
}

/// Runs the configured imputation method.
pub fn impute(ds: &Dataset, spec: &DesignSpec, cfg: &MethodConfig) -> Result<ImputationSet> {
    match cfg.method {
        Method::Median => Err(Error::InvalidArgument(
            "the median baseline predicts directly and does not impute".into(),
        )),
        Method::LM => impute_lm_single(ds, spec, cfg),
        Method::Hml => impute_heckman_single(ds, spec, cfg),
        Method::MIPmm => impute_mi_pmm(ds, spec, cfg),
        Method::MIRF => impute_mi_rf(ds, spec, cfg),
        Method::MIHml => impute_mi_heckman_ml(ds, spec, cfg),
        Method::MIH2Step => impute_mi_heckman_2step(ds, spec, cfg),
    }
}

/// Outcome design split by missingness.
pub(crate) struct OutcomeData {
    pub design: DesignMatrix,
    pub x_obs: DMatrix<f64>,
    pub x_mis: DMatrix<f64>,
    pub y_obs: Vec<f64>,
    pub missing_rows: Vec<usize>,
}

impl OutcomeData {
    pub fn new(ds: &Dataset, spec: &DesignSpec) -> Result<Self> {
        let design = encode_design(ds, &spec.outcome_covariates, &ds.all_rows())?;
        let observed_rows = ds.observed_rows();
        let missing_rows = ds.missing_rows();
        if observed_rows.is_empty() {
            return Err(Error::Degenerate("no observed outcomes to impute from".into()));
        }
        Ok(Self {
            x_obs: design.values.select_rows(&observed_rows),
            x_mis: design.values.select_rows(&missing_rows),
            y_obs: ds.observed_outcome(),
            design,
            missing_rows,
        })
    }
}

/// Runs `m` imputations, each on its own child stream, in index order, and
/// assembles the completed datasets.
pub(crate) fn run_imputations<F>(
    ds: &Dataset,
    spec: &DesignSpec,
    cfg: &MethodConfig,
    source_fit: SourceFit,
    missing_rows: &[usize],
    one: F,
) -> Result<ImputationSet>
where
    F: Fn(usize, &mut rand_chacha::ChaCha12Rng) -> Result<(Vec<f64>, ParameterDraw)> + Sync + Send,
{
    cfg.validate()?;
    let m = cfg.effective_m();
    let results = par::map_indexed(m, |j| {
        let mut rng = cfg.rng.child(j as u64).rng();
        one(j, &mut rng)
    });
    let mut completed = Vec::with_capacity(m);
    let mut draws = Vec::with_capacity(m);
    for r in results {
        let (values, draw) = r?;
        completed.push(fill(ds, missing_rows, &values)?);
        draws.push(draw);
    }
    Ok(ImputationSet {
        completed,
        draws,
        method: cfg.clone(),
        source_fit,
        spec: spec.clone(),
        observed_rows: ds.observed_rows(),
        missing_rows: missing_rows.to_vec(),
    })
}

fn fill(ds: &Dataset, missing_rows: &[usize], values: &[f64]) -> Result<Dataset> {
    debug_assert_eq!(missing_rows.len(), values.len());
    let mut y = ds.outcome().to_vec();
    for (&i, &v) in missing_rows.iter().zip(values) {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("imputed value for row {}", ds.row_ids()[i])));
        }
        y[i] = Some(v);
    }
    ds.with_outcome(y)
}
