//! Pseudo maximum likelihood fitting of candidate copulas.
//!
//! Each candidate maximizes the copula log-likelihood over the
//! pseudo-observations, searched by Nelder-Mead in the unconstrained
//! transform space from several spread starting points (independence-
//! adjacent, moderate dependence, and a Kendall-tau moment match where the
//! family admits one). The reported log-likelihood is always recomputed with
//! the exact density at the returned parameters.
//!
//! The Student-t objective re-transforms every pseudo-observation through the
//! t quantile whenever `nu` moves, which is by far the dominant cost. Inside
//! the optimizer the quantiles are barycentric-interpolated over a fixed
//! Chebyshev grid in `1/nu` (exact values at the grid nodes); the final
//! reported log-likelihood and the convergence check use exact quantiles.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::ContinuousCDF;
use statrs::function::gamma::ln_gamma;

use crate::copula::{
    transform::project_positive_definite, CopulaFamily, CopulaParams, CorrelationStructure,
    FamilyKind, ParamSpace, PreparedCopula, STUDENT_T_NU_MAX, STUDENT_T_NU_MIN,
};
use crate::error::{Error, Result};
use crate::margins::PseudoObservations;
use crate::optim::NelderMead;
use crate::stats::kendall_tau;

/// Objective-change tolerance for the simplex search.
const FTOL: f64 = 1e-8;
/// Initial simplex displacement in unconstrained space.
const INITIAL_STEP: f64 = 0.25;
/// Mixture components below this proportion are frozen at their starting
/// parameters; their likelihood contribution is numerically invisible.
const MIX_FREEZE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_tolerance: 1e-3,
            restarts: 3,
            seed: 0,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        if self.gradient_tolerance.is_nan() || self.gradient_tolerance <= 0.0 {
            return Err(Error::config("gradient_tolerance must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::config("restarts must be at least 1"));
        }
        Ok(())
    }
}

/// A fitted candidate model.
#[derive(Debug, Clone)]
pub struct FittedCandidate {
    pub family: CopulaFamily,
    pub theta_hat: CopulaParams,
    pub loglik: f64,
    pub q_m: usize,
    pub converged: bool,
}

/// Sum of the copula log-density over the pseudo-observations.
pub fn pseudo_loglik(
    family: &CopulaFamily,
    params: &CopulaParams,
    u: &PseudoObservations,
) -> Result<f64> {
    if u.dim() != family.dim() {
        return Err(Error::dim(format!(
            "pseudo-observations have dimension {}, family has {}",
            u.dim(),
            family.dim()
        )));
    }
    let prepared = PreparedCopula::new(family, params)?;
    Ok(u.iter_points()
        .map(|p| prepared.log_density_unchecked(p))
        .sum())
}

/// Schwarz criterion for a fitted candidate on `n` observations.
pub fn bic(candidate: &FittedCandidate, n: usize) -> f64 {
    -2.0 * candidate.loglik + (n as f64).ln() * candidate.q_m as f64
}

/// Fits one candidate family by pseudo maximum likelihood.
pub fn fit_candidate(
    family: &CopulaFamily,
    u: &PseudoObservations,
    opts: &FitOptions,
) -> Result<FittedCandidate> {
    opts.validate()?;
    let q = family.param_count();
    if u.num_points() < q + 1 {
        return Err(Error::config(format!(
            "{} needs at least {} observations, got {}",
            family.name(),
            q + 1,
            u.num_points()
        )));
    }
    if u.dim() != family.dim() {
        return Err(Error::dim(format!(
            "pseudo-observations have dimension {}, family has {}",
            u.dim(),
            family.dim()
        )));
    }

    let space = ParamSpace::new(*family);
    let starts = starting_params(family, u, opts.restarts, opts.seed);
    let mut objective = CachedObjective::new(family, u);
    let nm = NelderMead {
        max_iterations: opts.max_iterations,
        ftol: FTOL,
        initial_step: INITIAL_STEP,
    };

    // Candidates: every restart's initial point and optimizer output, scored
    // by the exact log-likelihood so the winner dominates its start by
    // construction.
    struct Scored {
        params: CopulaParams,
        v: Vec<f64>,
        loglik: f64,
        nm_converged: bool,
    }
    let mut scored: Vec<Scored> = Vec::new();
    let mut any_finite_objective = false;
    for (start_nat, v0) in &starts {
        let out = nm.minimize(|v| objective.eval(v), v0);
        if out.value.is_finite() {
            any_finite_objective = true;
        }
        for (v, nm_converged) in [(v0.clone(), false), (out.x, out.converged)] {
            if let Ok(raw) = space.from_unconstrained(&v) {
                let params = freeze_dead_components(raw, start_nat);
                if let Ok(loglik) = pseudo_loglik(family, &params, u) {
                    if loglik.is_finite() {
                        scored.push(Scored {
                            params,
                            v,
                            loglik,
                            nm_converged,
                        });
                    }
                }
            }
        }
    }
    if scored.is_empty() || !any_finite_objective {
        return Err(Error::NonConvergence {
            context: format!(
                "{}: no restart produced a finite pseudo log-likelihood",
                family.name()
            ),
        });
    }
    let best = scored
        .into_iter()
        .max_by(|a, b| a.loglik.total_cmp(&b.loglik))
        .expect("nonempty");

    let grad_ok = gradient_max_norm(&space, family, u, &best.v)
        .map(|g| g < 10.0 * opts.gradient_tolerance)
        .unwrap_or(false);

    Ok(FittedCandidate {
        family: *family,
        theta_hat: best.params,
        loglik: best.loglik,
        q_m: q,
        converged: best.nm_converged && grad_ok,
    })
}

/// Central-difference gradient max-norm of the exact unconstrained
/// per-observation objective (mean negative log-likelihood).
fn gradient_max_norm(
    space: &ParamSpace,
    family: &CopulaFamily,
    u: &PseudoObservations,
    v: &[f64],
) -> Result<f64> {
    let n = u.num_points() as f64;
    let f = |v: &[f64]| -> f64 {
        space
            .from_unconstrained(v)
            .and_then(|p| pseudo_loglik(family, &p, u))
            .map(|ll| -ll / n)
            .unwrap_or(f64::INFINITY)
    };
    let mut work = v.to_vec();
    let mut max_abs: f64 = 0.0;
    for i in 0..v.len() {
        let h = 1e-5 * v[i].abs().max(1.0);
        work[i] = v[i] + h;
        let fp = f(&work);
        work[i] = v[i] - h;
        let fm = f(&work);
        work[i] = v[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::numerical("gradient check hit an infeasible point"));
        }
        max_abs = max_abs.max(((fp - fm) / (2.0 * h)).abs());
    }
    Ok(max_abs)
}

/// Replaces mixture components whose proportion fell below the freeze
/// threshold with their starting parameters.
fn freeze_dead_components(params: CopulaParams, start: &CopulaParams) -> CopulaParams {
    match (params, start) {
        (
            CopulaParams::Mixture {
                mut components,
                mix,
            },
            CopulaParams::Mixture {
                components: start_components,
                ..
            },
        ) => {
            for (k, w) in mix.iter().enumerate() {
                if *w < MIX_FREEZE_EPS {
                    components[k] = start_components[k].clone();
                }
            }
            CopulaParams::Mixture { components, mix }
        }
        (p, _) => p,
    }
}

// ---------------------------------------------------------------------------
// Starting points
// ---------------------------------------------------------------------------

/// Natural-domain starting points plus their unconstrained coordinates.
fn starting_params(
    family: &CopulaFamily,
    u: &PseudoObservations,
    restarts: usize,
    seed: u64,
) -> Vec<(CopulaParams, Vec<f64>)> {
    let space = ParamSpace::new(*family);
    let base = [
        base_start(family, u, StartKind::NearIndependence),
        base_start(family, u, StartKind::Moderate),
        base_start(family, u, StartKind::TauMatched),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(restarts);
    for r in 0..restarts {
        let params = base[r % 3].clone();
        let mut v = space
            .to_unconstrained(&params)
            .expect("starting points lie inside the transform domain");
        if r >= 3 {
            for x in v.iter_mut() {
                *x += 0.3 * normal_draw(&mut rng);
            }
        }
        let nat = space
            .from_unconstrained(&v)
            .expect("finite coordinates map back");
        out.push((nat, v));
    }
    out
}

fn normal_draw(rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::Distribution;
    rand_distr::StandardNormal.sample(rng)
}

#[derive(Clone, Copy)]
enum StartKind {
    NearIndependence,
    Moderate,
    TauMatched,
}

fn base_start(family: &CopulaFamily, u: &PseudoObservations, kind: StartKind) -> CopulaParams {
    let d = family.dim();
    match family.kind() {
        FamilyKind::Gaussian => CopulaParams::Gaussian {
            corr: start_corr(family, u, kind),
        },
        FamilyKind::StudentT => CopulaParams::StudentT {
            corr: start_corr(family, u, kind),
            nu: match kind {
                StartKind::NearIndependence => 20.0,
                StartKind::Moderate => 5.0,
                StartKind::TauMatched => 8.0,
            },
        },
        FamilyKind::Gumbel => CopulaParams::Archimedean {
            theta: match kind {
                StartKind::NearIndependence => 1.05,
                StartKind::Moderate => 2.0,
                StartKind::TauMatched => {
                    let tau = mean_pairwise_tau(u);
                    (1.0 / (1.0 - tau.clamp(0.0, 0.9))).clamp(1.01, 10.0)
                }
            },
        },
        FamilyKind::Clayton => CopulaParams::Archimedean {
            theta: match kind {
                StartKind::NearIndependence => 0.05,
                StartKind::Moderate => 1.0,
                StartKind::TauMatched => {
                    let tau = mean_pairwise_tau(u);
                    (2.0 * tau / (1.0 - tau)).clamp(0.05, 12.0)
                }
            },
        },
        FamilyKind::Frank => CopulaParams::Archimedean {
            theta: match kind {
                StartKind::NearIndependence => 0.5,
                StartKind::Moderate => 3.0,
                // No closed tau inversion; use a strong-dependence point.
                StartKind::TauMatched => {
                    if d == 2 && mean_pairwise_tau(u) < 0.0 {
                        -8.0
                    } else {
                        8.0
                    }
                }
            },
        },
        FamilyKind::Joe => CopulaParams::Archimedean {
            theta: match kind {
                StartKind::NearIndependence => 1.05,
                StartKind::Moderate => 2.0,
                // No closed tau inversion; use a strong-dependence point.
                StartKind::TauMatched => 3.0,
            },
        },
        FamilyKind::Mixture => CopulaParams::Mixture {
            components: family
                .mixture_components()
                .iter()
                .map(|f| base_start(f, u, kind))
                .collect(),
            mix: vec![1.0 / 6.0; 6],
        },
    }
}

fn start_corr(family: &CopulaFamily, u: &PseudoObservations, kind: StartKind) -> DMatrix<f64> {
    let d = family.dim();
    match family.corr_structure() {
        CorrelationStructure::Unstructured => match kind {
            StartKind::NearIndependence => DMatrix::identity(d, d),
            StartKind::Moderate => equicorrelation(d, 0.3),
            StartKind::TauMatched => {
                let cols: Vec<Vec<f64>> = (0..d).map(|j| u.column(j)).collect();
                let mut corr = DMatrix::identity(d, d);
                for i in 0..d {
                    for j in (i + 1)..d {
                        let tau = kendall_tau(&cols[i], &cols[j]);
                        let r = (std::f64::consts::FRAC_PI_2 * tau).sin().clamp(-0.95, 0.95);
                        corr[(i, j)] = r;
                        corr[(j, i)] = r;
                    }
                }
                project_positive_definite(corr)
            }
        },
        CorrelationStructure::Exchangeable => {
            let lower = -1.0 / (d as f64 - 1.0) + 1e-3;
            let r = match kind {
                StartKind::NearIndependence => 0.0,
                StartKind::Moderate => 0.3,
                StartKind::TauMatched => {
                    let tau = mean_pairwise_tau(u);
                    (std::f64::consts::FRAC_PI_2 * tau).sin().clamp(lower, 0.95)
                }
            };
            equicorrelation(d, r)
        }
    }
}

fn equicorrelation(d: usize, r: f64) -> DMatrix<f64> {
    let mut corr = DMatrix::from_element(d, d, r);
    corr.fill_diagonal(1.0);
    corr
}

fn mean_pairwise_tau(u: &PseudoObservations) -> f64 {
    let d = u.dim();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| u.column(j)).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..d {
        for j in (i + 1)..d {
            total += kendall_tau(&cols[i], &cols[j]);
            count += 1;
        }
    }
    total / count as f64
}

// ---------------------------------------------------------------------------
// Cached optimizer objective
// ---------------------------------------------------------------------------

/// Chebyshev-Gauss-Lobatto barycentric table of t quantiles over `w = 1/nu`.
struct ChebTable {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Node-major block of quantiles: `z[k * len + idx]`.
    z: Vec<f64>,
    len: usize,
}

const CHEB_POINTS: usize = 21;

impl ChebTable {
    fn new(u: &PseudoObservations) -> Self {
        let lo = 1.0 / STUDENT_T_NU_MAX;
        let hi = 1.0 / STUDENT_T_NU_MIN;
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let len = u.num_points() * u.dim();
        let mut nodes = Vec::with_capacity(CHEB_POINTS);
        let mut weights = Vec::with_capacity(CHEB_POINTS);
        let mut z = Vec::with_capacity(CHEB_POINTS * len);
        for k in 0..CHEB_POINTS {
            let angle = std::f64::consts::PI * k as f64 / (CHEB_POINTS - 1) as f64;
            let w = mid + half * angle.cos();
            nodes.push(w);
            let mut lambda = if k % 2 == 0 { 1.0 } else { -1.0 };
            if k == 0 || k == CHEB_POINTS - 1 {
                lambda *= 0.5;
            }
            weights.push(lambda);
            let dist = crate::copula::elliptical::t_distribution(1.0 / w);
            for p in u.iter_points() {
                for &ui in p {
                    z.push(dist.inverse_cdf(ui));
                }
            }
        }
        Self {
            nodes,
            weights,
            z,
            len,
        }
    }

    fn interpolate(&self, nu: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len);
        let w = 1.0 / nu;
        for (k, &node) in self.nodes.iter().enumerate() {
            if (w - node).abs() < 1e-14 {
                out.copy_from_slice(&self.z[k * self.len..(k + 1) * self.len]);
                return;
            }
        }
        let coeffs: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&node, &lambda)| lambda / (w - node))
            .collect();
        let denom: f64 = coeffs.iter().sum();
        out.fill(0.0);
        for (k, &c) in coeffs.iter().enumerate() {
            let block = &self.z[k * self.len..(k + 1) * self.len];
            for (o, &zv) in out.iter_mut().zip(block) {
                *o += c * zv;
            }
        }
        let inv = 1.0 / denom;
        for o in out.iter_mut() {
            *o *= inv;
        }
    }
}

enum ObjectiveKind {
    /// Per-point evaluation through the prepared density (Archimedean).
    Direct,
    /// Gaussian: the log-likelihood reduces to trace(precision * scatter).
    Gaussian { scatter: DMatrix<f64>, sum_z2: f64 },
    /// Student-t with quantile interpolation over nu.
    StudentT { table: ChebTable },
    /// Componentwise evaluation with the t block interpolated and dead
    /// components frozen.
    Mixture { table: ChebTable },
}

struct CachedObjective<'a> {
    family: CopulaFamily,
    space: ParamSpace,
    u: &'a PseudoObservations,
    kind: ObjectiveKind,
    zbuf: Vec<f64>,
    /// Reference blocks for the mixture freeze rule.
    freeze_reference: Option<CopulaParams>,
}

impl<'a> CachedObjective<'a> {
    fn new(family: &CopulaFamily, u: &'a PseudoObservations) -> Self {
        let kind = match family.kind() {
            FamilyKind::Gaussian => {
                let d = u.dim();
                let mut scatter = DMatrix::zeros(d, d);
                let mut sum_z2 = 0.0;
                for p in u.iter_points() {
                    let z: Vec<f64> = p
                        .iter()
                        .map(|&ui| crate::copula::elliptical::norm_quantile(ui))
                        .collect();
                    for i in 0..d {
                        for j in 0..d {
                            scatter[(i, j)] += z[i] * z[j];
                        }
                        sum_z2 += z[i] * z[i];
                    }
                }
                ObjectiveKind::Gaussian { scatter, sum_z2 }
            }
            FamilyKind::StudentT => ObjectiveKind::StudentT {
                table: ChebTable::new(u),
            },
            FamilyKind::Mixture => ObjectiveKind::Mixture {
                table: ChebTable::new(u),
            },
            _ => ObjectiveKind::Direct,
        };
        let freeze_reference = match family.kind() {
            FamilyKind::Mixture => Some(base_start(family, u, StartKind::Moderate)),
            _ => None,
        };
        Self {
            family: *family,
            space: ParamSpace::new(*family),
            u,
            kind,
            zbuf: vec![0.0; u.num_points() * u.dim()],
            freeze_reference,
        }
    }

    /// Mean negative pseudo log-likelihood per observation; +inf outside
    /// the domain.
    fn eval(&mut self, v: &[f64]) -> f64 {
        let params = match self.space.from_unconstrained(v) {
            Ok(p) => p,
            Err(_) => return f64::INFINITY,
        };
        let ll = match (&self.kind, &params) {
            (ObjectiveKind::Gaussian { scatter, sum_z2 }, CopulaParams::Gaussian { corr }) => {
                gaussian_loglik_from_scatter(corr, scatter, *sum_z2, self.u.num_points())
            }
            (ObjectiveKind::StudentT { table }, CopulaParams::StudentT { corr, nu }) => {
                table.interpolate(*nu, &mut self.zbuf);
                student_t_loglik_from_z(corr, *nu, &self.zbuf, self.u.dim())
            }
            (ObjectiveKind::Mixture { table }, CopulaParams::Mixture { .. }) => {
                let frozen = match &self.freeze_reference {
                    Some(start) => freeze_dead_components(params.clone(), start),
                    None => params.clone(),
                };
                mixture_loglik(&self.family, &frozen, self.u, table, &mut self.zbuf)
            }
            (ObjectiveKind::Direct, _) => match PreparedCopula::new(&self.family, &params) {
                Ok(prepared) => Some(
                    self.u
                        .iter_points()
                        .map(|p| prepared.log_density_unchecked(p))
                        .sum(),
                ),
                Err(_) => None,
            },
            _ => None,
        };
        match ll {
            Some(value) if value.is_finite() => -value / self.u.num_points() as f64,
            _ => f64::INFINITY,
        }
    }
}

fn gaussian_loglik_from_scatter(
    corr: &DMatrix<f64>,
    scatter: &DMatrix<f64>,
    sum_z2: f64,
    n: usize,
) -> Option<f64> {
    let chol = nalgebra::Cholesky::new(corr.clone())?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| f64::ln(*v)).sum::<f64>();
    let precision = chol.inverse();
    let d = corr.nrows();
    let mut trace = 0.0;
    for i in 0..d {
        for j in 0..d {
            trace += precision[(i, j)] * scatter[(j, i)];
        }
    }
    Some(-0.5 * (n as f64 * log_det + trace - sum_z2))
}

fn student_t_loglik_from_z(corr: &DMatrix<f64>, nu: f64, z: &[f64], d: usize) -> Option<f64> {
    let chol = nalgebra::Cholesky::new(corr.clone())?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| f64::ln(*v)).sum::<f64>();
    let precision = chol.inverse();
    let df = d as f64;
    let gamma_const = ln_gamma((nu + df) / 2.0) + (df - 1.0) * ln_gamma(nu / 2.0)
        - df * ln_gamma((nu + 1.0) / 2.0);
    let half_joint = 0.5 * (nu + df);
    let half_margin = 0.5 * (nu + 1.0);
    let n = z.len() / d;
    let mut total = n as f64 * (gamma_const - 0.5 * log_det);
    for row in z.chunks_exact(d) {
        let mut quad = 0.0;
        let mut margins = 0.0;
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += precision[(i, j)] * row[j];
            }
            quad += row[i] * acc;
            margins += (row[i] * row[i] / nu).ln_1p();
        }
        total += -half_joint * (quad / nu).ln_1p() + half_margin * margins;
    }
    Some(total)
}

fn mixture_loglik(
    family: &CopulaFamily,
    params: &CopulaParams,
    u: &PseudoObservations,
    table: &ChebTable,
    zbuf: &mut [f64],
) -> Option<f64> {
    let (components, mix) = match params {
        CopulaParams::Mixture { components, mix } => (components, mix),
        _ => return None,
    };
    let fams = family.mixture_components();
    let d = u.dim();

    // Prepared kernels for the live components; the t block (index 1) runs
    // on interpolated quantiles.
    let mut prepared: Vec<Option<PreparedCopula>> = Vec::with_capacity(6);
    let mut t_component: Option<crate::copula::elliptical::PreparedStudentT> = None;
    for (k, (f, p)) in fams.iter().zip(components).enumerate() {
        if mix[k] < MIX_FREEZE_EPS {
            prepared.push(None);
            continue;
        }
        if k == 1 {
            if let CopulaParams::StudentT { corr, nu } = p {
                let t = crate::copula::elliptical::PreparedStudentT::new(corr, *nu).ok()?;
                table.interpolate(*nu, zbuf);
                t_component = Some(t);
                prepared.push(None);
                continue;
            }
        }
        prepared.push(Some(PreparedCopula::new(f, p).ok()?));
    }
    let log_mix: Vec<f64> = mix.iter().map(|&w| w.ln()).collect();

    let mut total = 0.0;
    let mut terms = [f64::NEG_INFINITY; 6];
    for (i, point) in u.iter_points().enumerate() {
        terms.fill(f64::NEG_INFINITY);
        for k in 0..6 {
            if mix[k] < MIX_FREEZE_EPS {
                continue;
            }
            let ld = if k == 1 {
                t_component
                    .as_ref()?
                    .log_density_from_z(&zbuf[i * d..(i + 1) * d])
            } else {
                prepared[k].as_ref()?.log_density_unchecked(point)
            };
            terms[k] = log_mix[k] + ld;
        }
        let point_ll = crate::stats::log_sum_exp(&terms);
        if !point_ll.is_finite() {
            return None;
        }
        total += point_ll;
    }
    Some(total)
}
