//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("labeled data set is empty")]
    EmptyLabeledSet,

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("copula parameter out of domain: {context}")]
    ParamOutOfDomain { context: String },

    #[error("point lies on the boundary of the unit hypercube (coordinate {index}: {value})")]
    BoundaryPoint { index: usize, value: f64 },

    #[error("optimizer failed to converge: {context}")]
    NonConvergence { context: String },

    #[error("cross-validation fold {fold} failed for candidate {candidate}: {source}")]
    FoldFitFailure {
        fold: usize,
        candidate: String,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical failure: {context}")]
    Numerical { context: String },

    #[error("invalid configuration: {context}")]
    InvalidConfig { context: String },

    #[error("data error at row {row}, column {column}: {context}")]
    Data {
        row: usize,
        column: String,
        context: String,
    },

    #[error("model artifact error: {context}")]
    Artifact { context: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }

    pub fn dim(context: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
        }
    }

    pub fn domain(context: impl Into<String>) -> Self {
        Error::ParamOutOfDomain {
            context: context.into(),
        }
    }

    pub fn numerical(context: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
        }
    }

    pub fn config(context: impl Into<String>) -> Self {
        Error::InvalidConfig {
            context: context.into(),
        }
    }
}
