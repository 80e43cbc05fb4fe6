use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::{FIRST_ACTIVITY, ID, LOG_REVENUE, OUTCOME, REGION, SECTOR, SIZE};
use crate::data::{Column, Dataset, Variable, VariableSchema};
use crate::error::{Error, Result};

/// A categorical covariate drawn independently from fixed level weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalProfile {
    pub name: String,
    pub levels: Vec<String>,
    /// Unnormalised sampling weights, one per level.
    pub weights: Vec<f64>,
}

impl CategoricalProfile {
    /// Levels `{prefix}01..` with weights proportional to 1/k^exponent.
    pub fn zipf(name: &str, prefix: &str, n_levels: usize, exponent: f64) -> Self {
        let width = n_levels.to_string().len().max(2);
        Self {
            name: name.to_string(),
            levels: (1..=n_levels).map(|k| format!("{prefix}{k:0width$}")).collect(),
            weights: (1..=n_levels).map(|k| (k as f64).powf(-exponent)).collect(),
        }
    }

    pub fn with_weights(name: &str, levels: &[&str], weights: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            levels: levels.iter().map(|s| s.to_string()).collect(),
            weights: weights.to_vec(),
        }
    }
}

/// A normal covariate clipped to `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousProfile {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

/// Marginal distributions of the synthetic covariates. Covariates are drawn
/// independently of each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateProfile {
    pub categorical: Vec<CategoricalProfile>,
    pub continuous: Vec<ContinuousProfile>,
}

impl Default for CovariateProfile {
    /// Shaped after a corporate emissions register: 40 Zipf-weighted sectors,
    /// 8 regions, 4 first-activity classes, 4 size classes and log revenue.
    fn default() -> Self {
        Self {
            categorical: vec![
                CategoricalProfile::zipf(SECTOR, "S", 40, 1.0),
                CategoricalProfile::with_weights(
                    REGION,
                    &["R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8"],
                    &[0.26, 0.2, 0.16, 0.12, 0.09, 0.07, 0.06, 0.04],
                ),
                CategoricalProfile::with_weights(
                    FIRST_ACTIVITY,
                    &["F1", "F2", "F3", "F4"],
                    &[0.35, 0.3, 0.2, 0.15],
                ),
                CategoricalProfile::with_weights(SIZE, &["L", "M", "S", "U"], &[0.25, 0.3, 0.3, 0.15]),
            ],
            continuous: vec![ContinuousProfile {
                name: LOG_REVENUE.to_string(),
                mean: 21.38,
                sd: 2.5,
                min: 11.34,
                max: 26.97,
            }],
        }
    }
}

impl CovariateProfile {
    pub fn validate(&self) -> Result<()> {
        for c in &self.categorical {
            if c.levels.is_empty() || c.levels.len() != c.weights.len() {
                return Err(Error::InvalidArgument(format!(
                    "`{}` needs one weight per level",
                    c.name
                )));
            }
            if c.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || c.weights.iter().sum::<f64>() <= 0.0 {
                return Err(Error::InvalidArgument(format!("`{}` has invalid weights", c.name)));
            }
        }
        for c in &self.continuous {
            if !(c.sd >= 0.0 && c.min <= c.max && c.mean.is_finite()) {
                return Err(Error::InvalidArgument(format!("`{}` has an invalid distribution", c.name)));
            }
        }
        Ok(())
    }

    fn schema(&self) -> Result<VariableSchema> {
        let mut vars = vec![Variable::id(ID)];
        for c in &self.categorical {
            let levels: Vec<&str> = c.levels.iter().map(String::as_str).collect();
            vars.push(Variable::categorical(&c.name, &levels));
        }
        for c in &self.continuous {
            vars.push(Variable::continuous(&c.name));
        }
        vars.push(Variable::outcome(OUTCOME));
        VariableSchema::new(vars)
    }
}

/// Draws `n_rows` complete covariate records; the outcome column is all missing.
/// Categorical variables are drawn first in profile order, then continuous ones,
/// each column in row order.
pub fn generate_covariates<R: Rng + ?Sized>(
    n_rows: usize,
    profile: &CovariateProfile,
    rng: &mut R,
) -> Result<Dataset> {
    profile.validate()?;
    let mut columns = Vec::new();
    for c in &profile.categorical {
        let dist = WeightedIndex::new(&c.weights)
            .map_err(|e| Error::InvalidArgument(format!("`{}`: {e}", c.name)))?;
        let codes: Vec<u32> = (0..n_rows).map(|_| dist.sample(rng) as u32).collect();
        columns.push((
            c.name.clone(),
            Column::Categorical {
                levels: c.levels.clone(),
                codes,
            },
        ));
    }
    for c in &profile.continuous {
        let dist = Normal::new(c.mean, c.sd)
            .map_err(|e| Error::InvalidArgument(format!("`{}`: {e}", c.name)))?;
        let values: Vec<f64> = (0..n_rows).map(|_| dist.sample(rng).clamp(c.min, c.max)).collect();
        columns.push((c.name.clone(), Column::Continuous(values)));
    }
    let width = n_rows.to_string().len();
    let row_ids = (0..n_rows).map(|i| format!("c{:0width$}", i + 1)).collect();
    Dataset::from_columns(profile.schema()?, row_ids, columns, vec![None; n_rows])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RngStream;

    #[test]
    fn default_profile_shape() {
        let ds = generate_covariates(500, &CovariateProfile::default(), &mut RngStream::new(1, 0).rng()).unwrap();
        assert_eq!(ds.n(), 500);
        assert_eq!(ds.n_observed(), 0);
        match ds.column(SECTOR).unwrap() {
            Column::Categorical { levels, codes } => {
                assert_eq!(levels.len(), 40);
                assert!(codes.iter().all(|&c| c < 40));
            }
            Column::Continuous(_) => panic!("sector must be categorical"),
        }
        match ds.column(LOG_REVENUE).unwrap() {
            Column::Continuous(v) => assert!(v.iter().all(|x| (11.34..=26.97).contains(x))),
            Column::Categorical { .. } => panic!("revenue must be continuous"),
        }
    }

    #[test]
    fn rejects_mismatched_weights() {
        let mut p = CovariateProfile::default();
        p.categorical[0].weights.pop();
        assert!(generate_covariates(10, &p, &mut RngStream::new(1, 0).rng()).is_err());
    }
}
