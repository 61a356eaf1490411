//! Rescaled empirical marginal distribution functions.
//!
//! The response margin counts only labeled responses with denominator `n + 1`;
//! covariate margins count the pooled labeled and unlabeled rows with
//! denominator `n + N + 1`. The rescaled denominators keep every evaluation at
//! a sample point strictly inside (0, 1), which the copula log-likelihood
//! requires.

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Sorted-sample representation of the fitted margins. Immutable after
/// construction; CDF queries are binary searches.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginSet {
    response_sorted: Vec<f64>,
    covariate_sorted: Vec<Vec<f64>>,
    num_labeled: usize,
    num_pooled: usize,
}

/// Estimates the margins from a dataset: the response CDF from labeled rows,
/// the covariate CDFs from the pooled labeled + unlabeled rows.
pub fn fit_margins(data: &Dataset) -> Result<MarginSet> {
    let n = data.num_labeled();
    if n == 0 {
        return Err(Error::EmptyLabeledSet);
    }
    let pooled = n + data.num_unlabeled();
    let p = data.num_covariates();

    let mut response_sorted: Vec<f64> = data.labeled_y().iter().copied().collect();
    response_sorted.sort_unstable_by(f64::total_cmp);

    let mut covariate_sorted = Vec::with_capacity(p);
    for j in 0..p {
        let mut col = Vec::with_capacity(pooled);
        col.extend(data.labeled_x().column(j).iter().copied());
        col.extend(data.unlabeled_x().column(j).iter().copied());
        col.sort_unstable_by(f64::total_cmp);
        covariate_sorted.push(col);
    }

    Ok(MarginSet {
        response_sorted,
        covariate_sorted,
        num_labeled: n,
        num_pooled: pooled,
    })
}

fn count_le(sorted: &[f64], x: f64) -> usize {
    sorted.partition_point(|&t| t <= x)
}

impl MarginSet {
    /// Number of labeled rows `n` backing the response margin.
    pub fn num_labeled(&self) -> usize {
        self.num_labeled
    }

    /// Number of pooled rows `n + N` backing the covariate margins.
    pub fn num_pooled(&self) -> usize {
        self.num_pooled
    }

    pub fn num_covariates(&self) -> usize {
        self.covariate_sorted.len()
    }

    /// Rescaled empirical response CDF: `#{Y_i <= y} / (n + 1)`.
    pub fn response_cdf(&self, y: f64) -> f64 {
        count_le(&self.response_sorted, y) as f64 / (self.num_labeled + 1) as f64
    }

    /// Rescaled empirical covariate CDF over the pooled sample:
    /// `#{X_ij <= x} / (n + N + 1)` for column `j` (0-based).
    pub fn covariate_cdf(&self, j: usize, x: f64) -> Result<f64> {
        let col = self
            .covariate_sorted
            .get(j)
            .ok_or_else(|| Error::dim(format!("covariate index {j} out of range")))?;
        Ok(count_le(col, x) as f64 / (self.num_pooled + 1) as f64)
    }

    /// Covariate CDF clamped strictly inside (0, 1). Queries below the pooled
    /// minimum or above the maximum be given half the mass of a single
    /// observation so copula densities stay defined at arbitrary finite
    /// queries.
    pub(crate) fn interior_covariate_cdf(&self, j: usize, x: f64) -> f64 {
        let denom = (self.num_pooled + 1) as f64;
        let raw = count_le(&self.covariate_sorted[j], x) as f64 / denom;
        raw.clamp(0.5 / denom, 1.0 - 0.5 / denom)
    }

    /// Reassembles a margin set from its stored samples (artifact loading).
    pub fn from_parts(
        response_sorted: Vec<f64>,
        covariate_sorted: Vec<Vec<f64>>,
        num_labeled: usize,
        num_pooled: usize,
    ) -> Result<Self> {
        if num_labeled == 0 || response_sorted.len() != num_labeled {
            return Err(Error::dim("response sample length must equal n"));
        }
        if covariate_sorted.iter().any(|c| c.len() != num_pooled) {
            return Err(Error::dim("covariate sample length must equal n + N"));
        }
        let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] <= w[1]);
        if !sorted(&response_sorted) || !covariate_sorted.iter().all(|c| sorted(c)) {
            return Err(Error::dim("margin samples must be sorted"));
        }
        Ok(Self {
            response_sorted,
            covariate_sorted,
            num_labeled,
            num_pooled,
        })
    }

    pub fn response_sorted(&self) -> &[f64] {
        &self.response_sorted
    }

    pub fn covariate_sorted(&self, j: usize) -> &[f64] {
        &self.covariate_sorted[j]
    }
}

/// Pseudo-observations for likelihood fitting: row `i` holds
/// `(F̂₀(Y_i), F̂₁(X_i1), …, F̂_p(X_ip))`, stored row-major so each point is a
/// contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoObservations {
    values: Vec<f64>,
    num_points: usize,
    dim: usize,
}

/// Transforms the labeled rows of `data` through the fitted margins. The
/// margins must have been fitted on `data` or on a superset of it with a fold
/// excluded, so every entry lands strictly inside (0, 1).
pub fn pseudo_observations(margins: &MarginSet, data: &Dataset) -> Result<PseudoObservations> {
    let n = data.num_labeled();
    let p = data.num_covariates();
    if p != margins.num_covariates() {
        return Err(Error::dim(format!(
            "margins cover {} covariates but data has {}",
            margins.num_covariates(),
            p
        )));
    }
    let dim = p + 1;
    let mut values = Vec::with_capacity(n * dim);
    for i in 0..n {
        values.push(margins.response_cdf(data.labeled_y()[i]));
        for j in 0..p {
            values.push(margins.covariate_cdf(j, data.labeled_x()[(i, j)])?);
        }
    }
    debug_assert!(
        values.iter().all(|&u| u > 0.0 && u < 1.0),
        "pseudo-observations must be strictly interior; were the margins \
         fitted on a sample containing these rows?"
    );
    Ok(PseudoObservations {
        values,
        num_points: n,
        dim,
    })
}

impl PseudoObservations {
    pub fn num_points(&self) -> usize {
        self.num_points
    }

    /// Dimension `d = p + 1` of each point.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Point `i` as `(u_0, u_1, …, u_p)`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Column `j` copied out (column 0 is the response margin).
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.num_points)
            .map(|i| self.values[i * self.dim + j])
            .collect()
    }

    /// Builds pseudo-observations directly from a row-major buffer (tests and
    /// synthetic inputs). Every entry must lie strictly inside (0, 1).
    pub fn from_rows(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim < 2 || !values.len().is_multiple_of(dim) {
            return Err(Error::dim("rows must have equal width >= 2"));
        }
        if let Some(pos) = values
            .iter()
            .position(|&u| u.is_nan() || u <= 0.0 || u >= 1.0)
        {
            return Err(Error::BoundaryPoint {
                index: pos % dim,
                value: values[pos],
            });
        }
        let num_points = values.len() / dim;
        Ok(Self {
            values,
            num_points,
            dim,
        })
    }
}
