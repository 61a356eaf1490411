//! Semi-supervised regression by copula-based candidate models combined with
//! cross-validated model averaging.
//!
//! The response is predicted from covariates through a copula representation
//! of the regression function: rescaled empirical CDFs estimate the margins
//! (pooling unlabeled covariate rows), candidate copula families are fitted
//! by pseudo maximum likelihood, and the candidates' predictions are averaged
//! with weights minimizing a cross-validated error-ambiguity criterion solved
//! as a simplex-constrained quadratic program. A simulation benchmark
//! reproduces the reference experiments at desk scale.

// Indexed loops in the numerical kernels mirror the matrix algebra.
#![allow(clippy::needless_range_loop)]

pub mod artifact;
pub mod averaging;
pub mod copula;
pub mod data;
pub mod error;
pub mod margins;
pub mod mle;
pub mod regression;
pub mod simbench;
pub mod stats;

mod optim;

pub use data::Dataset;
pub use error::{Error, Result};
pub use margins::{fit_margins, pseudo_observations, MarginSet, PseudoObservations};
