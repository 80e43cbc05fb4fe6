use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments or configuration.
    Config,
    /// Input data that cannot be used as given.
    Data,
    /// An estimator or sampler failed numerically.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("row {row}, column `{column}`: unknown level `{level}`")]
    UnknownLevel {
        row: usize,
        column: String,
        level: String,
    },
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("schema: {0}")]
    Schema(String),
    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("exclusion restriction violated: selection and outcome equations use the same covariates")]
    ExclusionRestriction,
    #[error("probit separation: coefficient magnitude {max_abs:.3e} exceeds 1e3")]
    Separation { max_abs: f64 },
    #[error("{stage} did not converge after {iterations} iterations")]
    NotConverged { stage: &'static str, iterations: usize },
    #[error("covariance matrix is indefinite beyond the jitter budget")]
    Indefinite,
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::Schema(_) => ErrorClass::Config,
            Error::Io { .. }
            | Error::MalformedRow { .. }
            | Error::UnknownLevel { .. }
            | Error::NonNumeric { .. }
            | Error::RankDeficient { .. }
            | Error::Degenerate(_)
            | Error::ExclusionRestriction => ErrorClass::Data,
            Error::Separation { .. }
            | Error::NotConverged { .. }
            | Error::Indefinite
            | Error::Singular(_)
            | Error::NonFinite(_) => ErrorClass::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
