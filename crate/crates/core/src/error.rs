use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("malformed input: {0}")]
    Structure(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("column `{column}` contains non-finite values")]
    NonFinite { column: String },

    #[error("column `{column}` has zero variance")]
    ZeroVariance { column: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("insufficient data coverage at test locations")]
    InsufficientCoverage,

    #[error("direction undecidable: {0}")]
    Undecidable(String),

    #[error("basis function `{function}` is not finite at y = {location}")]
    BasisNotFinite { function: String, location: f64 },

    #[error("kernel matrix factorization failed after {attempts} attempts (last ridge {ridge})")]
    Factorization { attempts: usize, ridge: f64 },

    #[error("score estimation failed at step {step} on columns {columns:?}: {source}")]
    ScoreStep {
        step: usize,
        columns: Vec<String>,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("outside model domain: {0}")]
    Domain(String),

    #[error("no decided pairs to score")]
    NoDecisions,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
