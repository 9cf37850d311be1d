use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    Dimension {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value at position {index} in {context}")]
    NonFinite { context: &'static str, index: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("root not bracketed: f({lo}) = {f_lo} and f({hi}) = {f_hi} have the same sign")]
    NotBracketed {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible: kernel matrix has rank {rank} but {features} features were requested")]
    Infeasible { rank: usize, features: usize },

    #[error("variance factor is singular at M/n = 1")]
    Singularity,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(
        "feature index {index} at line {line} exceeds the declared feature count {n_features}"
    )]
    FeatureBounds {
        line: usize,
        index: usize,
        n_features: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("label {0:?} is not among the known classes")]
    UnknownLabel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
