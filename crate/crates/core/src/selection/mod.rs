//! Probit selection, least squares outcome, and Heckman's two-step and
//! full-information maximum likelihood selection-model estimators.

pub(crate) mod ml;
pub(crate) mod ols;
pub(crate) mod optim;
pub(crate) mod probit;
pub(crate) mod two_step;

use nalgebra::DMatrix;

pub use ml::{
    conditional_moments, heckman_loglik_grad, heckman_ml, heckman_ml_from_data, HeckmanLikelihood,
    HeckmanMLFit, HeckmanParams,
};
pub use ols::{fit_ols, fit_wls, OlsFit};
pub use optim::{bfgs_maximize, fd_hessian, BfgsOutcome};
pub use probit::{fit_probit, probit_loglik, ProbitFit};
pub use two_step::{heckman_two_step, two_step_from_data, Heckman2StepFit, LAMBDA_COLUMN};

use crate::data::{encode_design, DesignMatrix, DesignSpec, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative objective change below which the iteration may stop.
    pub rel_tol: f64,
    /// Gradient sup-norm tolerance, scaled by 1 + |loglik|.
    pub grad_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-10,
            grad_tol: 1e-8,
        }
    }
}

/// Both design matrices over every row, plus the outcome split.
#[derive(Debug, Clone)]
pub struct SelectionData {
    /// Outcome design on all rows (n x p).
    pub outcome_design: DesignMatrix,
    /// Selection design on all rows (n x q).
    pub selection_design: DesignMatrix,
    /// Outcome design restricted to observed rows (n1 x p).
    pub x_obs: DMatrix<f64>,
    /// Observed outcome values, aligned with `observed_rows`.
    pub y_obs: Vec<f64>,
    pub observed_rows: Vec<usize>,
    pub missing_rows: Vec<usize>,
    /// Missingness indicator R for all rows.
    pub indicator: Vec<f64>,
    /// Whether the selection equation has a covariate set distinct from the
    /// outcome equation.
    pub exclusion_restriction: bool,
}

impl SelectionData {
    pub fn new(ds: &Dataset, spec: &DesignSpec) -> Result<Self> {
        let all = ds.all_rows();
        let outcome_design = encode_design(ds, &spec.outcome_covariates, &all)?;
        let selection_design = encode_design(ds, &spec.selection_covariates, &all)?;
        let observed_rows = ds.observed_rows();
        let missing_rows = ds.missing_rows();
        if observed_rows.is_empty() || missing_rows.is_empty() {
            return Err(Error::Degenerate(
                "selection models need both observed and missing outcomes".into(),
            ));
        }
        let x_obs = outcome_design.values.select_rows(&observed_rows);
        crate::linalg::check_full_rank(&x_obs, &outcome_design.column_names)?;
        Ok(Self {
            x_obs,
            y_obs: ds.observed_outcome(),
            indicator: ds.indicator(),
            exclusion_restriction: spec.exclusion_restriction_holds(),
            outcome_design,
            selection_design,
            observed_rows,
            missing_rows,
        })
    }

    pub fn n(&self) -> usize {
        self.indicator.len()
    }

    pub fn n_observed(&self) -> usize {
        self.observed_rows.len()
    }

    pub fn p(&self) -> usize {
        self.outcome_design.ncols()
    }

    pub fn q(&self) -> usize {
        self.selection_design.ncols()
    }

    /// Selection design restricted to observed rows.
    pub fn xs_obs(&self) -> DMatrix<f64> {
        self.selection_design.values.select_rows(&self.observed_rows)
    }
}
