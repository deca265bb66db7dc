use thiserror::Error;

/// Errors produced by the library and mapped onto CLI exit codes.
#[derive(Debug, Error)]
pub enum BgpcError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("enumeration budget exceeded: {needed} support cells requested, cap is {cap}")]
    Budget { needed: u128, cap: u64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("inconsistent measurements: {0}")]
    Inconsistent(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl BgpcError {
    /// True for refusals that stem from a budget or feasibility limit rather
    /// than malformed input.
    pub fn is_refusal(&self) -> bool {
        matches!(self, BgpcError::Budget { .. } | BgpcError::Infeasible(_))
    }
}

pub type Result<T> = std::result::Result<T, BgpcError>;
