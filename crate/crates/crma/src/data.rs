//! Semi-supervised data container.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A semi-supervised sample: `n` labeled rows `(Y_i, X_i)` plus `N` unlabeled
/// covariate rows. The unlabeled block may be empty, in which case every
/// estimator degenerates to its purely supervised form.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    labeled_y: DVector<f64>,
    labeled_x: DMatrix<f64>,
    unlabeled_x: DMatrix<f64>,
}

impl Dataset {
    /// Builds a dataset, validating shapes and finiteness.
    pub fn new(
        labeled_y: DVector<f64>,
        labeled_x: DMatrix<f64>,
        unlabeled_x: DMatrix<f64>,
    ) -> Result<Self> {
        if labeled_y.is_empty() || labeled_x.nrows() == 0 {
            return Err(Error::EmptyLabeledSet);
        }
        if labeled_y.len() != labeled_x.nrows() {
            return Err(Error::dim(format!(
                "labeled_y has {} rows but labeled_x has {}",
                labeled_y.len(),
                labeled_x.nrows()
            )));
        }
        if labeled_x.ncols() == 0 {
            return Err(Error::dim("labeled_x must have at least one column"));
        }
        if unlabeled_x.nrows() > 0 && unlabeled_x.ncols() != labeled_x.ncols() {
            return Err(Error::dim(format!(
                "labeled_x has {} columns but unlabeled_x has {}",
                labeled_x.ncols(),
                unlabeled_x.ncols()
            )));
        }
        if labeled_y.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("labeled_y"));
        }
        if labeled_x.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("labeled_x"));
        }
        if unlabeled_x.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("unlabeled_x"));
        }
        // Normalize an empty unlabeled block to the labeled width so that
        // ncols() is meaningful regardless of how the caller built it.
        let unlabeled_x = if unlabeled_x.nrows() == 0 {
            DMatrix::zeros(0, labeled_x.ncols())
        } else {
            unlabeled_x
        };
        Ok(Self {
            labeled_y,
            labeled_x,
            unlabeled_x,
        })
    }

    /// Convenience constructor without unlabeled rows.
    pub fn supervised(labeled_y: DVector<f64>, labeled_x: DMatrix<f64>) -> Result<Self> {
        let p = labeled_x.ncols();
        Self::new(labeled_y, labeled_x, DMatrix::zeros(0, p))
    }

    /// Number of labeled observations `n`.
    pub fn num_labeled(&self) -> usize {
        self.labeled_y.len()
    }

    /// Number of unlabeled observations `N`.
    pub fn num_unlabeled(&self) -> usize {
        self.unlabeled_x.nrows()
    }

    /// Covariate dimension `p`.
    pub fn num_covariates(&self) -> usize {
        self.labeled_x.ncols()
    }

    pub fn labeled_y(&self) -> &DVector<f64> {
        &self.labeled_y
    }

    pub fn labeled_x(&self) -> &DMatrix<f64> {
        &self.labeled_x
    }

    pub fn unlabeled_x(&self) -> &DMatrix<f64> {
        &self.unlabeled_x
    }

    /// The labeled-to-unlabeled ratio `n / N` (infinite when `N = 0`).
    pub fn rho(&self) -> f64 {
        self.num_labeled() as f64 / self.num_unlabeled() as f64
    }

    /// A copy with the unlabeled block dropped (the supervised pipeline).
    pub fn without_unlabeled(&self) -> Dataset {
        Dataset {
            labeled_y: self.labeled_y.clone(),
            labeled_x: self.labeled_x.clone(),
            unlabeled_x: DMatrix::zeros(0, self.num_covariates()),
        }
    }

    /// Retains the given labeled and unlabeled row indices, preserving order.
    /// Used by cross-fitting to exclude a fold.
    pub fn subset(&self, labeled_keep: &[usize], unlabeled_keep: &[usize]) -> Result<Dataset> {
        let p = self.num_covariates();
        if labeled_keep.is_empty() {
            return Err(Error::EmptyLabeledSet);
        }
        let y = DVector::from_iterator(
            labeled_keep.len(),
            labeled_keep.iter().map(|&i| self.labeled_y[i]),
        );
        let mut lx = DMatrix::zeros(labeled_keep.len(), p);
        for (r, &i) in labeled_keep.iter().enumerate() {
            lx.row_mut(r).copy_from(&self.labeled_x.row(i));
        }
        let mut ux = DMatrix::zeros(unlabeled_keep.len(), p);
        for (r, &i) in unlabeled_keep.iter().enumerate() {
            ux.row_mut(r).copy_from(&self.unlabeled_x.row(i));
        }
        Dataset::new(y, lx, ux)
    }
}
