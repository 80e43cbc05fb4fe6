//! Monte Carlo comparison of imputation methods: synthetic covariates, a
//! calibrated data-generating truth, four missingness mechanisms, per-method
//! analysis of every replication and the aggregate performance metrics.

mod covariates;
mod metrics;
mod run;
mod truth;

use serde::{Deserialize, Serialize};

use crate::data::DesignSpec;
use crate::error::{Error, Result};
use crate::imputation::{Method, TreeOptions};

pub use covariates::{generate_covariates, CategoricalProfile, ContinuousProfile, CovariateProfile};
pub use metrics::{
    evaluate_parameters, evaluate_predictions, parameter_summary, Grouping, MetricsReport, ParamMetrics,
    ParamSummary, PredMetrics,
};
pub use run::{
    generate_replication, run_replication, run_scenario, run_scenario_in, MethodRun,
    ParamRecord, PredictionRecord, ReplicationResult, ScenarioOutput,
};
pub use truth::{
    calibrate_truth, draw_beta_star, generate_seed_dataset, prepare_study, prepare_study_from, SeedModel, Study,
    TruthCalibration,
};

/// Column names used by the default synthetic profile.
pub const SECTOR: &str = "Sector";
pub const REGION: &str = "Region";
pub const FIRST_ACTIVITY: &str = "FirstActivity";
pub const SIZE: &str = "Size";
pub const LOG_REVENUE: &str = "LogRevenue";
pub const OUTCOME: &str = "Y";
pub const ID: &str = "id";

/// How the outcome goes missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    /// Heckman selection with uncorrelated errors.
    #[serde(rename = "MAR")]
    Mar,
    /// Heckman selection with moderately correlated errors.
    LightMNAR,
    /// Heckman selection with strongly correlated errors.
    HeavyMNAR,
    /// Bernoulli selection driven by the outcome's deviation from its group mean.
    NonHeckman,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [
        Mechanism::Mar,
        Mechanism::LightMNAR,
        Mechanism::HeavyMNAR,
        Mechanism::NonHeckman,
    ];

    /// Error correlation used by this mechanism (0 for the non-Heckman one).
    pub fn default_rho(self) -> f64 {
        match self {
            Mechanism::Mar | Mechanism::NonHeckman => 0.0,
            Mechanism::LightMNAR => -0.3,
            Mechanism::HeavyMNAR => -0.6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Mar => "MAR",
            Mechanism::LightMNAR => "LightMNAR",
            Mechanism::HeavyMNAR => "HeavyMNAR",
            Mechanism::NonHeckman => "NonHeckman",
        }
    }

    pub fn is_heckman(self) -> bool {
        self != Mechanism::NonHeckman
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(&key))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mechanism `{s}`")))
    }
}

/// Rule turning the selection index into the response indicator under the
/// Heckman mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SelectionRule {
    /// R = 1 iff x'βˢ + εˢ ≥ 0. The error correlation acts only through this rule.
    #[default]
    Latent,
    /// R = 1 iff Φ(x'βˢ) ≥ 0.5: deterministic, so ρ has no effect on which
    /// rows go missing. Offered for comparison only.
    Probability,
}

/// Settings shared by every imputation method in a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOptions {
    /// Imputations per multiple-imputation method.
    pub m: usize,
    /// Donor pool size for predictive mean matching.
    pub donors: usize,
    /// Trees per random-forest imputation.
    pub trees: usize,
    pub tree: TreeOptions,
}

impl Default for MethodOptions {
    fn default() -> Self {
        Self {
            m: 5,
            donors: 5,
            trees: 10,
            tree: TreeOptions::default(),
        }
    }
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub mechanism: Mechanism,
    /// Correlation of outcome and selection errors; ignored by the non-Heckman mechanism.
    pub rho: f64,
    /// Outcome error variance.
    pub sigma2_eps: f64,
    /// Intercept of the non-Heckman response probability.
    pub c: f64,
    /// Coefficient on the group-mean deviation in the non-Heckman response probability.
    pub slope: f64,
    pub replications: usize,
    pub n_rows: usize,
    /// Master seed; every random number in the study derives from it.
    pub seed: u64,
    pub methods: Vec<Method>,
    pub options: MethodOptions,
    pub spec: DesignSpec,
    /// Grouping covariate for the median baseline and the non-Heckman deviation.
    pub group_key: String,
    pub selection_rule: SelectionRule,
    pub profile: CovariateProfile,
    pub seed_model: SeedModel,
}

impl ScenarioConfig {
    /// Desk-scale defaults for `mechanism` with error variance `sigma2_eps`.
    pub fn new(mechanism: Mechanism, sigma2_eps: f64) -> Self {
        Self {
            mechanism,
            rho: mechanism.default_rho(),
            sigma2_eps,
            c: -0.5,
            slope: 0.45,
            replications: 200,
            n_rows: 2000,
            seed: 20_240_601,
            methods: Method::ALL.to_vec(),
            options: MethodOptions::default(),
            spec: default_spec(),
            group_key: SECTOR.to_string(),
            selection_rule: SelectionRule::Latent,
            profile: CovariateProfile::default(),
            seed_model: SeedModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if !(self.sigma2_eps > 0.0 && self.sigma2_eps.is_finite()) {
            return bad("sigma2_eps must be positive");
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return bad("rho must lie strictly between -1 and 1");
        }
        if !self.c.is_finite() || !self.slope.is_finite() {
            return bad("c and slope must be finite");
        }
        if self.n_rows < 10 {
            return bad("n_rows must be at least 10");
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        if self.options.m == 0 || self.options.trees == 0 || self.options.donors == 0 {
            return bad("m, trees and donors must be positive");
        }
        if self.spec.outcome_covariates.is_empty() || self.spec.selection_covariates.is_empty() {
            return bad("both equations need covariates");
        }
        Ok(())
    }

    /// Short label such as `HeavyMNAR/s2=1`.
    pub fn label(&self) -> String {
        format!("{}/s2={}", self.mechanism, self.sigma2_eps)
    }
}

/// Equations used by the desk study: the outcome on sector, revenue, first
/// activity and region; selection on revenue, first activity, region and size.
pub fn default_spec() -> DesignSpec {
    DesignSpec::new(
        &[SECTOR, LOG_REVENUE, FIRST_ACTIVITY, REGION],
        &[LOG_REVENUE, FIRST_ACTIVITY, REGION, SIZE],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mechanism_parses_loosely() {
        assert_eq!("heavy-mnar".parse::<Mechanism>().unwrap(), Mechanism::HeavyMNAR);
        assert_eq!("MAR".parse::<Mechanism>().unwrap(), Mechanism::Mar);
        assert!("mcar".parse::<Mechanism>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ScenarioConfig::new(Mechanism::HeavyMNAR, 1.0);
        assert!(cfg.validate().is_ok());
        cfg.rho = 1.0;
        assert!(cfg.validate().is_err());
        cfg.rho = 0.0;
        cfg.replications = 0;
        assert!(cfg.validate().is_err());
    }
}
