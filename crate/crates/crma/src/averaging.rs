//! Cross-validated model averaging: the criterion combines each candidate's
//! CV prediction error with an ambiguity reward that can be evaluated on
//! unlabeled rows, and the weights minimize it over the probability simplex.
//!
//! `C(w) = a'w + w'Bw` with
//! `a_m = n^{-1} ||mu_m^L - Y||^2 - (n+N)^{-1} mu_m' mu_m` and
//! `B = (n+N)^{-1} G'G`, `G` the matrix of cross-fitted candidate
//! predictions over all labeled and unlabeled rows. With `N = 0` the same
//! formulas give the purely supervised criterion.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::CopulaFamily;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::margins::{fit_margins, pseudo_observations, MarginSet};
use crate::mle::{bic, fit_candidate, FitOptions, FittedCandidate};
use crate::regression::CandidateRegressor;
use crate::stats::derive_seed;

// ---------------------------------------------------------------------------
// Cross-validation plan
// ---------------------------------------------------------------------------

/// Random near-equal partition of the labeled and unlabeled indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CVPlan {
    num_folds: usize,
    labeled_fold_of: Vec<usize>,
    unlabeled_fold_of: Vec<usize>,
    seed: u64,
}

/// Builds a `K`-fold plan over `n` labeled and `big_n` unlabeled rows,
/// deterministic given the seed. Fold sizes differ by at most one within
/// each part and every fold holds at least one labeled row.
pub fn make_cv_plan(n: usize, big_n: usize, k: usize, seed: u64) -> Result<CVPlan> {
    if k < 2 {
        return Err(Error::config("fold count K must be at least 2"));
    }
    if k > n {
        return Err(Error::config(format!(
            "fold count K = {k} exceeds the labeled count n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assign = |count: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(rng);
        let mut fold_of = vec![0usize; count];
        for (pos, &idx) in order.iter().enumerate() {
            fold_of[idx] = pos % k;
        }
        fold_of
    };
    let labeled_fold_of = assign(n, &mut rng);
    let unlabeled_fold_of = assign(big_n, &mut rng);
    Ok(CVPlan {
        num_folds: k,
        labeled_fold_of,
        unlabeled_fold_of,
        seed,
    })
}

impl CVPlan {
    pub fn num_folds(&self) -> usize {
        self.num_folds
    }

    pub fn labeled_fold_of(&self) -> &[usize] {
        &self.labeled_fold_of
    }

    pub fn unlabeled_fold_of(&self) -> &[usize] {
        &self.unlabeled_fold_of
    }

    fn labeled_in_fold(&self, fold: usize) -> Vec<usize> {
        (0..self.labeled_fold_of.len())
            .filter(|&i| self.labeled_fold_of[i] == fold)
            .collect()
    }

    fn labeled_outside_fold(&self, fold: usize) -> Vec<usize> {
        (0..self.labeled_fold_of.len())
            .filter(|&i| self.labeled_fold_of[i] != fold)
            .collect()
    }

    fn unlabeled_in_fold(&self, fold: usize) -> Vec<usize> {
        (0..self.unlabeled_fold_of.len())
            .filter(|&i| self.unlabeled_fold_of[i] == fold)
            .collect()
    }

    fn unlabeled_outside_fold(&self, fold: usize) -> Vec<usize> {
        (0..self.unlabeled_fold_of.len())
            .filter(|&i| self.unlabeled_fold_of[i] != fold)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Cross-fitted predictions
// ---------------------------------------------------------------------------

/// The `(n+N) x M` matrix of cross-fitted predictions: rows `0..n` are the
/// labeled points, rows `n..n+N` the unlabeled ones, each predicted by the
/// model fitted with its own fold excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct CVPredictions {
    mu: DMatrix<f64>,
    num_labeled: usize,
}

impl CVPredictions {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mu
    }

    pub fn num_labeled(&self) -> usize {
        self.num_labeled
    }

    pub fn num_models(&self) -> usize {
        self.mu.ncols()
    }

    pub fn from_matrix(mu: DMatrix<f64>, num_labeled: usize) -> Result<Self> {
        if num_labeled > mu.nrows() {
            return Err(Error::dim("labeled count exceeds prediction rows"));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("cross-fitted predictions"));
        }
        Ok(Self { mu, num_labeled })
    }
}

/// Refits every candidate on each fold's retained rows (margins rebuilt from
/// the retained labeled and unlabeled rows) and predicts the held-out fold.
pub fn cross_fit(
    data: &Dataset,
    families: &[CopulaFamily],
    plan: &CVPlan,
    opts: &FitOptions,
) -> Result<CVPredictions> {
    let n = data.num_labeled();
    let big_n = data.num_unlabeled();
    let m = families.len();
    if families.is_empty() {
        return Err(Error::config("candidate set is empty"));
    }
    if plan.labeled_fold_of.len() != n || plan.unlabeled_fold_of.len() != big_n {
        return Err(Error::dim("CV plan does not match the dataset dimensions"));
    }

    struct FoldData {
        fold: usize,
        margins: Arc<MarginSet>,
        pseudo: crate::margins::PseudoObservations,
        train_y: Arc<Vec<f64>>,
        labeled_rows: Vec<usize>,
        unlabeled_rows: Vec<usize>,
    }

    let mut folds = Vec::with_capacity(plan.num_folds);
    for fold in 0..plan.num_folds {
        let keep_l = plan.labeled_outside_fold(fold);
        let keep_u = plan.unlabeled_outside_fold(fold);
        let sub = data.subset(&keep_l, &keep_u)?;
        let margins = fit_margins(&sub)?;
        let pseudo = pseudo_observations(&margins, &sub)?;
        folds.push(FoldData {
            fold,
            margins: Arc::new(margins),
            pseudo,
            train_y: Arc::new(sub.labeled_y().iter().copied().collect()),
            labeled_rows: plan.labeled_in_fold(fold),
            unlabeled_rows: plan.unlabeled_in_fold(fold),
        });
    }

    struct Block {
        col: usize,
        labeled: Vec<(usize, f64)>,
        unlabeled: Vec<(usize, f64)>,
    }

    let pairs: Vec<(usize, usize)> = (0..plan.num_folds)
        .flat_map(|f| (0..m).map(move |c| (f, c)))
        .collect();
    let blocks: Vec<Result<Block>> = pairs
        .par_iter()
        .map(|&(f, c)| -> Result<Block> {
            let fold = &folds[f];
            let family = &families[c];
            let mut fold_opts = *opts;
            fold_opts.seed = derive_seed(opts.seed, (f * m + c + 1) as u64);
            let run = || -> Result<Block> {
                let fit = fit_candidate(family, &fold.pseudo, &fold_opts)?;
                let reg = CandidateRegressor::new(fit, fold.margins.clone(), fold.train_y.clone())?;
                let mut scratch = reg.make_scratch();
                let p = data.num_covariates();
                let mut row = vec![0.0; p];
                let mut labeled = Vec::with_capacity(fold.labeled_rows.len());
                for &i in &fold.labeled_rows {
                    for (j, r) in row.iter_mut().enumerate() {
                        *r = data.labeled_x()[(i, j)];
                    }
                    labeled.push((i, reg.predict_with_scratch(&row, &mut scratch)?));
                }
                let mut unlabeled = Vec::with_capacity(fold.unlabeled_rows.len());
                for &i in &fold.unlabeled_rows {
                    for (j, r) in row.iter_mut().enumerate() {
                        *r = data.unlabeled_x()[(i, j)];
                    }
                    unlabeled.push((i, reg.predict_with_scratch(&row, &mut scratch)?));
                }
                Ok(Block {
                    col: c,
                    labeled,
                    unlabeled,
                })
            };
            run().map_err(|e| Error::FoldFitFailure {
                fold: fold.fold,
                candidate: family.name().to_string(),
                source: Box::new(e),
            })
        })
        .collect();

    let mut mu = DMatrix::zeros(n + big_n, m);
    for block in blocks {
        let block = block?;
        for (i, v) in block.labeled {
            mu[(i, block.col)] = v;
        }
        for (i, v) in block.unlabeled {
            mu[(n + i, block.col)] = v;
        }
    }
    CVPredictions::from_matrix(mu, n)
}

// ---------------------------------------------------------------------------
// Weight criterion
// ---------------------------------------------------------------------------

/// Coefficients of the weight criterion `C(w) = a'w + w'Bw`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionTerms {
    a: DVector<f64>,
    b: DMatrix<f64>,
}

impl CriterionTerms {
    pub fn linear(&self) -> &DVector<f64> {
        &self.a
    }

    pub fn quadratic(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn num_models(&self) -> usize {
        self.a.len()
    }

    pub fn from_parts(a: DVector<f64>, b: DMatrix<f64>) -> Result<Self> {
        if b.nrows() != a.len() || b.ncols() != a.len() {
            return Err(Error::dim("criterion parts have mismatched dimensions"));
        }
        Ok(Self { a, b })
    }
}

/// Assembles the criterion from cross-fitted predictions and the labeled
/// responses.
pub fn criterion_terms(cv: &CVPredictions, y: &DVector<f64>) -> Result<CriterionTerms> {
    let n = cv.num_labeled();
    let total = cv.matrix().nrows();
    let m = cv.num_models();
    if y.len() != n {
        return Err(Error::dim(format!(
            "labeled responses have length {}, expected {n}",
            y.len()
        )));
    }
    let mu = cv.matrix();
    let mut a = DVector::zeros(m);
    for c in 0..m {
        let mut sq_err = 0.0;
        for i in 0..n {
            let d = mu[(i, c)] - y[i];
            sq_err += d * d;
        }
        let mut self_gram = 0.0;
        for i in 0..total {
            self_gram += mu[(i, c)] * mu[(i, c)];
        }
        a[c] = sq_err / n as f64 - self_gram / total as f64;
    }
    let mut b = DMatrix::zeros(m, m);
    for c1 in 0..m {
        for c2 in c1..m {
            let mut dot = 0.0;
            for i in 0..total {
                dot += mu[(i, c1)] * mu[(i, c2)];
            }
            let v = dot / total as f64;
            b[(c1, c2)] = v;
            b[(c2, c1)] = v;
        }
    }
    CriterionTerms::from_parts(a, b)
}

/// Evaluates `C(w) = a'w + w'Bw`.
pub fn evaluate_criterion(t: &CriterionTerms, w: &WeightVector) -> f64 {
    let m = t.num_models();
    let w = w.as_slice();
    debug_assert_eq!(w.len(), m);
    let mut value = 0.0;
    for i in 0..m {
        value += t.a[i] * w[i];
        let mut row = 0.0;
        for j in 0..m {
            row += t.b[(i, j)] * w[j];
        }
        value += w[i] * row;
    }
    value
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::dim("weight vector must be nonempty"));
        }
        if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::domain("weights must be finite and nonnegative"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::domain(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self(w))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn one_hot(m: usize, index: usize) -> Self {
        let mut w = vec![0.0; m];
        w[index] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Euclidean projection onto the probability simplex (sorted-threshold
/// method).
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    let mut rho = 0;
    for (j, &x) in sorted.iter().enumerate() {
        cumsum += x;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if x - candidate > 0.0 {
            tau = candidate;
            rho = j + 1;
        }
    }
    debug_assert!(rho > 0);
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

fn criterion_gradient(t: &CriterionTerms, w: &[f64], out: &mut [f64]) {
    let m = w.len();
    for i in 0..m {
        let mut g = t.a[i];
        for j in 0..m {
            g += 2.0 * t.b[(i, j)] * w[j];
        }
        out[i] = g;
    }
}

fn quad_value(t: &CriterionTerms, w: &[f64]) -> f64 {
    let m = w.len();
    let mut value = 0.0;
    for i in 0..m {
        value += t.a[i] * w[i];
        let mut row = 0.0;
        for j in 0..m {
            row += t.b[(i, j)] * w[j];
        }
        value += w[i] * row;
    }
    value
}

/// KKT fixed-point residual: `||w - P(w - grad)||_inf`.
fn kkt_residual(t: &CriterionTerms, w: &[f64]) -> f64 {
    let mut g = vec![0.0; w.len()];
    criterion_gradient(t, w, &mut g);
    let shifted: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - gi).collect();
    let proj = project_simplex(&shifted);
    w.iter()
        .zip(&proj)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

const KKT_TOL: f64 = 1e-8;
const MAX_QP_ITERS: usize = 100_000;

/// Minimizes `C(w)` over the simplex: accelerated projected gradient from
/// the uniform start, then an active-set polish that solves the reduced KKT
/// system exactly. Deterministic.
pub fn solve_weights(t: &CriterionTerms) -> Result<WeightVector> {
    let m = t.num_models();
    if m == 0 {
        return Err(Error::dim("criterion has no models"));
    }
    if m == 1 {
        return WeightVector::new(vec![1.0]);
    }
    // PSD guard: the Gram construction makes B PSD; a materially negative
    // eigenvalue signals an upstream fault.
    let scale = t.b.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let eig = nalgebra::SymmetricEigen::new(t.b.clone());
    let min_eig = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -1e-8 * scale.max(1.0) {
        return Err(Error::numerical(format!(
            "criterion quadratic part has negative eigenvalue {min_eig}"
        )));
    }
    let max_eig = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);

    let mut w = vec![1.0 / m as f64; m];
    if max_eig > 0.0 {
        let step = 1.0 / (2.0 * max_eig);
        let mut v = w.clone();
        let mut momentum = 1.0f64;
        let mut g = vec![0.0; m];
        let mut f_prev = quad_value(t, &w);
        for iter in 0..MAX_QP_ITERS {
            criterion_gradient(t, &v, &mut g);
            let cand: Vec<f64> = v.iter().zip(&g).map(|(vi, gi)| vi - step * gi).collect();
            let w_next = project_simplex(&cand);
            let f_next = quad_value(t, &w_next);
            if f_next > f_prev {
                // Function-value restart of the momentum sequence.
                momentum = 1.0;
                v = w.clone();
                criterion_gradient(t, &v, &mut g);
                let cand: Vec<f64> = v.iter().zip(&g).map(|(vi, gi)| vi - step * gi).collect();
                let w_restart = project_simplex(&cand);
                let f_restart = quad_value(t, &w_restart);
                if f_restart <= f_prev {
                    w = w_restart;
                    f_prev = f_restart;
                }
            } else {
                let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
                let blend = (momentum - 1.0) / next_momentum;
                v = w_next
                    .iter()
                    .zip(&w)
                    .map(|(nw, ow)| nw + blend * (nw - ow))
                    .collect();
                momentum = next_momentum;
                w = w_next;
                f_prev = f_next;
            }
            if iter.is_multiple_of(16) && kkt_residual(t, &w) < 0.5 * KKT_TOL {
                break;
            }
        }
    } else {
        // B = 0: linear objective, minimized at a vertex (lowest index wins
        // ties).
        let mut best = 0;
        for i in 1..m {
            if t.a[i] < t.a[best] {
                best = i;
            }
        }
        w = WeightVector::one_hot(m, best).0;
    }

    if let Some(polished) = active_set_polish(t, &w) {
        if quad_value(t, &polished) <= quad_value(t, &w) + 1e-14 {
            w = polished;
        }
    }

    let residual = kkt_residual(t, &w);
    if residual > 1e-6 {
        return Err(Error::numerical(format!(
            "simplex QP did not reach the KKT tolerance (residual {residual:.3e})"
        )));
    }

    // Clean tiny negative round-off and renormalize.
    for x in w.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let sum: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= sum;
    }
    WeightVector::new(w)
}

/// Solves the equality-constrained QP on the active support exactly and
/// exchanges support members until the full KKT conditions hold.
fn active_set_polish(t: &CriterionTerms, w: &[f64]) -> Option<Vec<f64>> {
    let m = w.len();
    let mut support: Vec<usize> = (0..m).filter(|&i| w[i] > 1e-10).collect();
    if support.is_empty() {
        return None;
    }
    let mut g = vec![0.0; m];
    for _ in 0..4 * m + 8 {
        let s = support.len();
        // KKT system: [2B_SS 1; 1' 0] [w_S; lambda] = [-a_S; 1]
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        let mut rhs = DVector::zeros(s + 1);
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                kkt[(r, c)] = 2.0 * t.b[(i, j)];
            }
            kkt[(r, s)] = 1.0;
            kkt[(s, r)] = 1.0;
            rhs[r] = -t.a[i];
        }
        rhs[s] = 1.0;
        let sol = kkt.lu().solve(&rhs)?;
        let w_s: Vec<f64> = (0..s).map(|r| sol[r]).collect();
        if let Some(neg) = (0..s).min_by(|&a, &b| w_s[a].total_cmp(&w_s[b])) {
            if w_s[neg] < -1e-12 {
                if support.len() == 1 {
                    return None;
                }
                support.remove(neg);
                continue;
            }
        }
        let mut full = vec![0.0; m];
        for (r, &i) in support.iter().enumerate() {
            full[i] = w_s[r].max(0.0);
        }
        let sum: f64 = full.iter().sum();
        if sum <= 0.0 {
            return None;
        }
        for x in full.iter_mut() {
            *x /= sum;
        }
        // Check the off-support optimality: gradients must not undercut the
        // support's shared multiplier.
        criterion_gradient(t, &full, &mut g);
        let lambda = support.iter().map(|&i| g[i]).sum::<f64>() / support.len() as f64;
        let violator = (0..m)
            .filter(|i| !support.contains(i))
            .min_by(|&a, &b| g[a].total_cmp(&g[b]));
        match violator {
            Some(j) if g[j] < lambda - 1e-12 => {
                support.push(j);
                support.sort_unstable();
            }
            _ => return Some(full),
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Baseline weighting schemes
// ---------------------------------------------------------------------------

/// Smoothed-BIC weights `w_m proportional to exp(-BIC_m / 2)`, computed with
/// a max shift for stability.
pub fn sbic_weights(fits: &[FittedCandidate], n: usize) -> Result<WeightVector> {
    if fits.is_empty() {
        return Err(Error::dim("candidate list is empty"));
    }
    let bics: Vec<f64> = fits.iter().map(|f| bic(f, n)).collect();
    let min_bic = bics.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = bics.iter().map(|&b| (-(b - min_bic) / 2.0).exp()).collect();
    let sum: f64 = raw.iter().sum();
    WeightVector::new(raw.into_iter().map(|x| x / sum).collect())
}

/// One-hot weight at the smallest BIC; ties break to the lowest index.
pub fn bic_select(fits: &[FittedCandidate], n: usize) -> Result<WeightVector> {
    if fits.is_empty() {
        return Err(Error::dim("candidate list is empty"));
    }
    let bics: Vec<f64> = fits.iter().map(|f| bic(f, n)).collect();
    let mut best = 0;
    for i in 1..bics.len() {
        if bics[i] < bics[best] {
            best = i;
        }
    }
    Ok(WeightVector::one_hot(bics.len(), best))
}

/// Equal weights `1/M`.
pub fn equal_weights(m: usize) -> Result<WeightVector> {
    if m == 0 {
        return Err(Error::dim("candidate list is empty"));
    }
    Ok(WeightVector::uniform(m))
}

// ---------------------------------------------------------------------------
// The averaged model
// ---------------------------------------------------------------------------

/// Weighting scheme for the averaged predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// Cross-validated error-ambiguity weights (the proposed method).
    Crma,
    /// Smoothed BIC averaging.
    Sbic,
    /// BIC model selection (one-hot).
    Bicms,
    /// Equal weights.
    Ewma,
}

impl WeightScheme {
    pub fn name(&self) -> &'static str {
        match self {
            WeightScheme::Crma => "crma",
            WeightScheme::Sbic => "sbic",
            WeightScheme::Bicms => "bicms",
            WeightScheme::Ewma => "ewma",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "crma" => Ok(WeightScheme::Crma),
            "sbic" => Ok(WeightScheme::Sbic),
            "bicms" => Ok(WeightScheme::Bicms),
            "ewma" => Ok(WeightScheme::Ewma),
            other => Err(Error::config(format!("unknown weight scheme `{other}`"))),
        }
    }
}

/// Candidate regressors fitted on the full data plus their averaging
/// weights.
pub struct AveragedModel {
    regressors: Vec<CandidateRegressor>,
    weights: WeightVector,
    scheme: WeightScheme,
    num_folds: usize,
}

impl AveragedModel {
    pub fn from_parts(
        regressors: Vec<CandidateRegressor>,
        weights: WeightVector,
        scheme: WeightScheme,
        num_folds: usize,
    ) -> Result<Self> {
        if regressors.is_empty() || regressors.len() != weights.len() {
            return Err(Error::dim(
                "weights and candidate regressors must have equal nonzero length",
            ));
        }
        Ok(Self {
            regressors,
            weights,
            scheme,
            num_folds,
        })
    }

    pub fn candidates(&self) -> &[CandidateRegressor] {
        &self.regressors
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn num_folds(&self) -> usize {
        self.num_folds
    }

    pub fn num_covariates(&self) -> usize {
        self.regressors[0].num_covariates()
    }

    /// The averaged prediction `sum_m w_m mu_m(x)`; candidates at zero
    /// weight are skipped.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut value = 0.0;
        for (reg, &w) in self.regressors.iter().zip(self.weights.as_slice()) {
            if w == 0.0 {
                continue;
            }
            value += w * reg.predict(x)?;
        }
        Ok(value)
    }

    /// Rowwise averaged predictions.
    pub fn predict_batch(&self, xs: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; xs.nrows()];
        for (reg, &w) in self.regressors.iter().zip(self.weights.as_slice()) {
            if w == 0.0 {
                continue;
            }
            let preds = reg.predict_batch(xs)?;
            for (o, p) in out.iter_mut().zip(preds) {
                *o += w * p;
            }
        }
        Ok(out)
    }
}

/// Fits candidates on the full data and selects weights per the scheme.
/// The CRMA scheme runs the cross-fitting pipeline; the baselines reuse the
/// full-data fits.
pub fn fit_model_average(
    data: &Dataset,
    families: &[CopulaFamily],
    num_folds: usize,
    opts: &FitOptions,
    scheme: WeightScheme,
) -> Result<AveragedModel> {
    if families.is_empty() {
        return Err(Error::config("candidate set is empty"));
    }
    let margins = Arc::new(fit_margins(data)?);
    let pseudo = pseudo_observations(&margins, data)?;
    let fits: Vec<FittedCandidate> = families
        .par_iter()
        .enumerate()
        .map(|(c, family)| {
            let mut fit_opts = *opts;
            fit_opts.seed = derive_seed(opts.seed, 0x46554C4C ^ c as u64);
            fit_candidate(family, &pseudo, &fit_opts)
        })
        .collect::<Result<_>>()?;

    let n = data.num_labeled();
    let weights = match scheme {
        WeightScheme::Ewma => equal_weights(families.len())?,
        WeightScheme::Sbic => sbic_weights(&fits, n)?,
        WeightScheme::Bicms => bic_select(&fits, n)?,
        WeightScheme::Crma => {
            let plan = make_cv_plan(
                n,
                data.num_unlabeled(),
                num_folds,
                derive_seed(opts.seed, 0x43565F504C414E),
            )?;
            let cv = cross_fit(data, families, &plan, opts)?;
            let terms = criterion_terms(&cv, data.labeled_y())?;
            solve_weights(&terms)?
        }
    };

    let labeled_y: Arc<Vec<f64>> = Arc::new(data.labeled_y().iter().copied().collect());
    let regressors = fits
        .into_iter()
        .map(|fit| CandidateRegressor::new(fit, margins.clone(), labeled_y.clone()))
        .collect::<Result<Vec<_>>>()?;
    AveragedModel::from_parts(regressors, weights, scheme, num_folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::{CopulaParams, FamilyKind};

    #[test]
    fn cv_plan_sizes() {
        let plan = make_cv_plan(10, 0, 5, 1).unwrap();
        for fold in 0..5 {
            assert_eq!(plan.labeled_in_fold(fold).len(), 2);
        }
        let plan = make_cv_plan(10, 20, 5, 1).unwrap();
        for fold in 0..5 {
            assert_eq!(plan.unlabeled_in_fold(fold).len(), 4);
        }
        // n = 7, K = 5: sizes (2,2,1,1,1) in some order.
        let plan = make_cv_plan(7, 0, 5, 3).unwrap();
        let mut sizes: Vec<usize> = (0..5).map(|f| plan.labeled_in_fold(f).len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 1, 1, 2, 2]);
    }

    #[test]
    fn cv_plan_is_deterministic_and_validates() {
        let a = make_cv_plan(13, 7, 4, 9).unwrap();
        let b = make_cv_plan(13, 7, 4, 9).unwrap();
        assert_eq!(a, b);
        assert!(make_cv_plan(3, 0, 5, 0).is_err());
        assert!(make_cv_plan(10, 0, 1, 0).is_err());
    }

    fn toy_terms(mu_rows: &[&[f64]], y: &[f64], n: usize) -> CriterionTerms {
        let rows = mu_rows.len();
        let cols = mu_rows[0].len();
        let flat: Vec<f64> = mu_rows.iter().flat_map(|r| r.iter().copied()).collect();
        let mu = DMatrix::from_row_slice(rows, cols, &flat);
        let cv = CVPredictions::from_matrix(mu, n).unwrap();
        criterion_terms(&cv, &DVector::from_vec(y.to_vec())).unwrap()
    }

    #[test]
    fn criterion_identical_columns_is_constant() {
        let t = toy_terms(
            &[&[1.0, 1.0], &[2.0, 2.0], &[0.5, 0.5], &[1.5, 1.5]],
            &[1.2, 1.8],
            2,
        );
        let values: Vec<f64> = [
            WeightVector::new(vec![1.0, 0.0]).unwrap(),
            WeightVector::new(vec![0.3, 0.7]).unwrap(),
            WeightVector::new(vec![0.5, 0.5]).unwrap(),
        ]
        .iter()
        .map(|w| evaluate_criterion(&t, w))
        .collect();
        for v in &values[1..] {
            assert!((v - values[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn criterion_single_model_is_cv_error() {
        // M = 1: C(1) = n^{-1} ||mu - y||^2.
        let t = toy_terms(&[&[1.0], &[3.0], &[2.0]], &[2.0, 2.0], 2);
        let w = WeightVector::new(vec![1.0]).unwrap();
        let expect = ((1.0f64 - 2.0).powi(2) + (3.0f64 - 2.0).powi(2)) / 2.0;
        // a_1 + B_11 = expect - g + g where g is the self-gram term.
        assert!((evaluate_criterion(&t, &w) - expect).abs() < 1e-12);
    }

    #[test]
    fn criterion_matches_error_ambiguity_decomposition() {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(2..6);
            let big_n = rng.random_range(0..5);
            let m = rng.random_range(1..4);
            let total = n + big_n;
            let mu = DMatrix::from_fn(total, m, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let y = DVector::from_fn(n, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let cv = CVPredictions::from_matrix(mu.clone(), n).unwrap();
            let t = criterion_terms(&cv, &y).unwrap();
            let mut raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.01).collect();
            let s: f64 = raw.iter().sum();
            raw.iter_mut().for_each(|x| *x /= s);
            let w = WeightVector::new(raw.clone()).unwrap();

            // Direct error-ambiguity form.
            let mut direct = 0.0;
            for c in 0..m {
                let mut err = 0.0;
                for i in 0..n {
                    err += (mu[(i, c)] - y[i]).powi(2);
                }
                direct += raw[c] * err / n as f64;
            }
            for i in 0..total {
                let mut avg = 0.0;
                for c in 0..m {
                    avg += raw[c] * mu[(i, c)];
                }
                for c in 0..m {
                    direct -= raw[c] * (mu[(i, c)] - avg).powi(2) / total as f64;
                }
            }
            let quad = evaluate_criterion(&t, &w);
            assert!(
                (quad - direct).abs() < 1e-10,
                "quadratic {quad} vs direct {direct}"
            );
        }
    }

    #[test]
    fn solve_weights_symmetric_case() {
        // a = 0, B = I/2: uniform is optimal.
        let t = CriterionTerms::from_parts(
            DVector::from_vec(vec![0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]),
        )
        .unwrap();
        let w = solve_weights(&t).unwrap();
        assert!((w.as_slice()[0] - 0.5).abs() < 1e-9);
        assert!((w.as_slice()[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn solve_weights_prefers_cheap_vertex() {
        // a = (0, 10), B = I: the minimum sits at the first vertex.
        let t =
            CriterionTerms::from_parts(DVector::from_vec(vec![0.0, 10.0]), DMatrix::identity(2, 2))
                .unwrap();
        let w = solve_weights(&t).unwrap();
        // Grid check at 1e-3 steps confirms the vertex.
        let mut grid_best = f64::INFINITY;
        let mut grid_arg = 0.0;
        for k in 0..=1000 {
            let w1 = k as f64 / 1000.0;
            let wv = WeightVector::new(vec![w1, 1.0 - w1]).unwrap();
            let v = evaluate_criterion(&t, &wv);
            if v < grid_best {
                grid_best = v;
                grid_arg = w1;
            }
        }
        assert!((grid_arg - 1.0).abs() < 1e-9);
        assert!((w.as_slice()[0] - 1.0).abs() < 1e-8, "{:?}", w.as_slice());
        let solved = evaluate_criterion(&t, &w);
        assert!(solved <= grid_best + 1e-8);
    }

    #[test]
    fn solve_weights_beats_vertices_and_uniform() {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..25 {
            let m = rng.random_range(2..5);
            let g = DMatrix::from_fn(m + 2, m, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let b = DMatrix::from_fn(m, m, |i, j| g.column(i).dot(&g.column(j)) / (m + 2) as f64);
            let a = DVector::from_fn(m, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let t = CriterionTerms::from_parts(a, b).unwrap();
            let w = solve_weights(&t).unwrap();
            let solved = evaluate_criterion(&t, &w);
            for i in 0..m {
                let v = evaluate_criterion(&t, &WeightVector::one_hot(m, i));
                assert!(solved <= v + 1e-9, "vertex {i} better: {v} < {solved}");
            }
            let v = evaluate_criterion(&t, &WeightVector::uniform(m));
            assert!(solved <= v + 1e-9);
        }
    }

    #[test]
    fn solve_weights_rejects_indefinite() {
        let t = CriterionTerms::from_parts(
            DVector::from_vec(vec![0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        )
        .unwrap();
        assert!(matches!(solve_weights(&t), Err(Error::Numerical { .. })));
    }

    fn dummy_fit(kind: FamilyKind, loglik: f64, q_m: usize) -> FittedCandidate {
        FittedCandidate {
            family: CopulaFamily::new(kind, 2).unwrap(),
            theta_hat: CopulaParams::Archimedean { theta: 1.5 },
            loglik,
            q_m,
            converged: true,
        }
    }

    #[test]
    fn sbic_weight_arithmetic() {
        // Equal BICs give uniform weights.
        let fits = vec![
            dummy_fit(FamilyKind::Gumbel, 3.0, 1),
            dummy_fit(FamilyKind::Clayton, 3.0, 1),
        ];
        let w = sbic_weights(&fits, 50).unwrap();
        assert!((w.as_slice()[0] - 0.5).abs() < 1e-12);

        // BIC difference of 2: weights (1, e^{-1}) normalized.
        // BIC_m = -2 loglik + ln(n) q: make logliks differ by 1.
        let fits = vec![
            dummy_fit(FamilyKind::Gumbel, 4.0, 1),
            dummy_fit(FamilyKind::Clayton, 3.0, 1),
        ];
        let w = sbic_weights(&fits, 50).unwrap();
        let e1 = (-1.0f64).exp();
        assert!((w.as_slice()[0] - 1.0 / (1.0 + e1)).abs() < 1e-12);
        assert!((w.as_slice()[1] - e1 / (1.0 + e1)).abs() < 1e-12);

        // Dominance: a BIC smaller by 2 ln(1e6) takes everything.
        let fits = vec![
            dummy_fit(FamilyKind::Gumbel, 3.0 + (1e6f64).ln(), 1),
            dummy_fit(FamilyKind::Clayton, 3.0, 1),
        ];
        let w = sbic_weights(&fits, 50).unwrap();
        assert!(w.as_slice()[0] > 1.0 - 1e-5);
    }

    #[test]
    fn bic_select_tie_breaks_low_index() {
        let fits = vec![
            dummy_fit(FamilyKind::Gumbel, 1.0, 2),
            dummy_fit(FamilyKind::Clayton, 2.0, 1),
            dummy_fit(FamilyKind::Frank, 2.0, 1),
            dummy_fit(FamilyKind::Joe, 2.0, 1),
        ];
        // Candidates 1..3 share the minimal BIC; index 1 wins.
        let w = bic_select(&fits, 20).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
        // Single model gets weight one.
        let w = bic_select(&fits[..1], 20).unwrap();
        assert_eq!(w.as_slice(), &[1.0]);
    }

    #[test]
    fn equal_weights_sum_to_one() {
        let w = equal_weights(4).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.25, 0.25, 0.25]);
        assert_eq!(equal_weights(1).unwrap().as_slice(), &[1.0]);
        let w = equal_weights(7).unwrap();
        assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_onto_simplex() {
        let w = project_simplex(&[0.5, 0.5]);
        assert!((w[0] - 0.5).abs() < 1e-15);
        let w = project_simplex(&[2.0, 0.0]);
        assert_eq!(w, vec![1.0, 0.0]);
        let w = project_simplex(&[-1.0, -2.0, -3.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&x| x >= 0.0));
    }
}
