use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::failure::Failure;

/// A job file: top-level run settings plus one section per concern. Every
/// field is optional; command-line flags override the file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    pub seed: Option<u64>,
    /// Worker threads; 0 or absent uses all available cores.
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub keep_raw: bool,
    pub data: Option<DataSection>,
    pub model: Option<ModelSection>,
    pub methods: MethodsSection,
    pub simulation: SimulationSection,
    pub validate: Option<ValidateSection>,
    pub report: ReportSection,
}

/// Input CSV and its variable roster. Categorical levels are inferred from
/// the file (sorted), so the reference level is the first in sort order
/// that occurs in the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    pub outcome: String,
    pub id: Option<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub continuous: Vec<String>,
    /// Categorical covariate defining peer groups for the median baseline.
    pub group_key: Option<String>,
}

/// Equations, either listed directly or chosen by stepwise AIC from candidates.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub outcome: Vec<String>,
    pub selection: Vec<String>,
    pub stepwise: bool,
    /// Candidates for the outcome equation when `stepwise` is set (defaults to `outcome`).
    pub outcome_candidates: Vec<String>,
    /// Candidates for the selection equation when `stepwise` is set (defaults to `selection`).
    pub selection_candidates: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodsSection {
    /// Method names; empty means all seven.
    pub names: Vec<String>,
    pub m: usize,
    pub donors: usize,
    pub trees: usize,
    pub min_leaf: usize,
}

impl Default for MethodsSection {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            m: 5,
            donors: 5,
            trees: 10,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub mechanisms: Vec<String>,
    pub sigma2: Vec<f64>,
    pub replications: usize,
    pub n_rows: usize,
    pub c: f64,
    pub slope: f64,
    /// `latent` (default) or `probability`.
    pub selection_rule: String,
    /// Calibrate on the `[data]` CSV instead of a synthetic seed dataset.
    pub seed_from_data: bool,
    /// Also emit per-group prediction metrics.
    pub group_metrics: bool,
    /// Coefficients to report; empty reports all.
    pub parameters: Vec<String>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            mechanisms: vec![
                "MAR".into(),
                "LightMNAR".into(),
                "HeavyMNAR".into(),
                "NonHeckman".into(),
            ],
            sigma2: vec![1.0, 2.5, 4.0],
            replications: 200,
            n_rows: 2000,
            c: -0.5,
            slope: 0.45,
            selection_rule: "latent".into(),
            seed_from_data: false,
            group_metrics: false,
            parameters: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    /// An `estimates.csv` written by `impute`.
    pub estimates: PathBuf,
    /// Later-reported values.
    pub reported: PathBuf,
    /// Join column in the reported file.
    #[serde(default = "default_key")]
    pub key: String,
    /// Value column in the reported file.
    #[serde(default = "default_value")]
    pub value: String,
}

fn default_key() -> String {
    "row_id".into()
}

fn default_value() -> String {
    "value".into()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Directory holding `params_metrics.csv` and `pred_metrics.csv`
    /// (defaults to the output directory).
    pub input: Option<PathBuf>,
    /// Coefficient shown in the parameter table.
    pub parameter: Option<String>,
}

impl JobConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::config(format!("config {}: {e}", path.display())))
    }

    pub fn require_seed(&self, command: &str) -> Result<u64, Failure> {
        self.seed
            .ok_or_else(|| Failure::config(format!("`{command}` needs a seed (--seed or `seed` in the config)")))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("selmi-out"))
    }
}
