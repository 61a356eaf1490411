//! Per-candidate regression prediction: the self-normalized weighted average
//! of the labeled responses with copula-density weights,
//! `sum_i Y_i c(u0_i, u(x)) / sum_i c(u0_i, u(x))`, evaluated through a
//! log-sum-exp so peaked densities cannot overflow.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::copula::{PreparedCopula, RowEvaluator, RowScratch};
use crate::error::{Error, Result};
use crate::margins::MarginSet;
use crate::mle::FittedCandidate;

/// A fitted candidate together with everything prediction needs: the margin
/// set for transforming queries, the labeled responses, and their cached
/// response-margin values `u0`.
pub struct CandidateRegressor {
    fitted: FittedCandidate,
    margins: Arc<MarginSet>,
    labeled_y: Arc<Vec<f64>>,
    u0: Vec<f64>,
    evaluator: RowEvaluator,
}

/// Reusable prediction buffers; create one per worker thread.
pub struct PredictScratch {
    query_u: Vec<f64>,
    log_weights: Vec<f64>,
    rows: RowScratch,
}

impl CandidateRegressor {
    pub fn new(
        fitted: FittedCandidate,
        margins: Arc<MarginSet>,
        labeled_y: Arc<Vec<f64>>,
    ) -> Result<Self> {
        if fitted.family.dim() != margins.num_covariates() + 1 {
            return Err(Error::dim(format!(
                "family dimension {} does not match {} covariates + response",
                fitted.family.dim(),
                margins.num_covariates()
            )));
        }
        if labeled_y.len() != margins.num_labeled() {
            return Err(Error::dim(
                "labeled responses must match the margin set's labeled count",
            ));
        }
        let u0: Vec<f64> = labeled_y.iter().map(|&y| margins.response_cdf(y)).collect();
        debug_assert!(u0.iter().all(|&u| u > 0.0 && u < 1.0));
        let prepared = PreparedCopula::new(&fitted.family, &fitted.theta_hat)?;
        let evaluator = prepared.row_evaluator(&u0);
        Ok(Self {
            fitted,
            margins,
            labeled_y,
            u0,
            evaluator,
        })
    }

    pub fn fitted(&self) -> &FittedCandidate {
        &self.fitted
    }

    pub fn margins(&self) -> &Arc<MarginSet> {
        &self.margins
    }

    pub fn labeled_y(&self) -> &Arc<Vec<f64>> {
        &self.labeled_y
    }

    pub fn response_margin_values(&self) -> &[f64] {
        &self.u0
    }

    pub fn num_covariates(&self) -> usize {
        self.margins.num_covariates()
    }

    pub fn make_scratch(&self) -> PredictScratch {
        PredictScratch {
            query_u: vec![0.0; self.num_covariates()],
            log_weights: vec![0.0; self.labeled_y.len()],
            rows: self.evaluator.make_scratch(),
        }
    }

    /// Prediction at a single covariate vector.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut scratch = self.make_scratch();
        self.predict_with_scratch(x, &mut scratch)
    }

    /// Prediction reusing caller-owned buffers (bit-identical to `predict`).
    pub fn predict_with_scratch(&self, x: &[f64], scratch: &mut PredictScratch) -> Result<f64> {
        let p = self.num_covariates();
        if x.len() != p {
            return Err(Error::dim(format!(
                "query has {} coordinates, model expects {p}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("prediction query"));
        }
        for j in 0..p {
            scratch.query_u[j] = self.margins.interior_covariate_cdf(j, x[j]);
        }
        self.evaluator.query(
            &scratch.query_u,
            &mut scratch.rows,
            &mut scratch.log_weights,
        );

        let max_lw = scratch
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max_lw.is_finite() {
            return Err(Error::numerical(format!(
                "{}: all density weights vanished in log space at the query point",
                self.fitted.family.name()
            )));
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (&lw, &y) in scratch.log_weights.iter().zip(self.labeled_y.iter()) {
            let w = (lw - max_lw).exp();
            num += y * w;
            den += w;
        }
        let pred = num / den;
        if !pred.is_finite() {
            return Err(Error::numerical(format!(
                "{}: non-finite prediction",
                self.fitted.family.name()
            )));
        }
        Ok(pred)
    }

    /// Rowwise prediction over a query matrix, bit-identical to scalar calls.
    pub fn predict_batch(&self, xs: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut scratch = self.make_scratch();
        let mut row = vec![0.0; xs.ncols()];
        let mut out = Vec::with_capacity(xs.nrows());
        for i in 0..xs.nrows() {
            for (j, r) in row.iter_mut().enumerate() {
                *r = xs[(i, j)];
            }
            out.push(self.predict_with_scratch(&row, &mut scratch)?);
        }
        Ok(out)
    }
}
