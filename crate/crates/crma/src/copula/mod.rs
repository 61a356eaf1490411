//! Candidate copula families: Gaussian, Student-t, Gumbel, Clayton, Frank,
//! Joe, and a six-component mixture of these.
//!
//! All densities are evaluated in log space. A [`PreparedCopula`] validates
//! parameters once and caches whatever the family needs (Cholesky factors,
//! generator-derivative coefficients) so repeated evaluation stays cheap.

pub(crate) mod archimedean;
pub(crate) mod elliptical;
mod sample;
pub(crate) mod transform;

pub use archimedean::ArchKind;
pub use sample::sample;
pub use transform::ParamSpace;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::log_sum_exp;

/// Correlation parameterization for the elliptical families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CorrelationStructure {
    /// Full correlation matrix, `d(d-1)/2` free entries.
    #[default]
    Unstructured,
    /// A single shared off-diagonal correlation.
    Exchangeable,
}

/// Family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyKind {
    Gaussian,
    StudentT,
    Gumbel,
    Clayton,
    Frank,
    Joe,
    Mixture,
}

impl FamilyKind {
    /// The six base families, in the fixed order used by mixture components.
    pub const BASE: [FamilyKind; 6] = [
        FamilyKind::Gaussian,
        FamilyKind::StudentT,
        FamilyKind::Gumbel,
        FamilyKind::Clayton,
        FamilyKind::Frank,
        FamilyKind::Joe,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::Gaussian => "gaussian",
            FamilyKind::StudentT => "student_t",
            FamilyKind::Gumbel => "gumbel",
            FamilyKind::Clayton => "clayton",
            FamilyKind::Frank => "frank",
            FamilyKind::Joe => "joe",
            FamilyKind::Mixture => "mixture",
        }
    }

    pub fn parse(name: &str) -> Result<FamilyKind> {
        match name {
            "gaussian" => Ok(FamilyKind::Gaussian),
            "student_t" | "t" => Ok(FamilyKind::StudentT),
            "gumbel" => Ok(FamilyKind::Gumbel),
            "clayton" => Ok(FamilyKind::Clayton),
            "frank" => Ok(FamilyKind::Frank),
            "joe" => Ok(FamilyKind::Joe),
            "mixture" => Ok(FamilyKind::Mixture),
            other => Err(Error::config(format!("unknown copula family `{other}`"))),
        }
    }

    fn archimedean(&self) -> Option<ArchKind> {
        match self {
            FamilyKind::Gumbel => Some(ArchKind::Gumbel),
            FamilyKind::Clayton => Some(ArchKind::Clayton),
            FamilyKind::Frank => Some(ArchKind::Frank),
            FamilyKind::Joe => Some(ArchKind::Joe),
            _ => None,
        }
    }
}

/// A candidate copula family at a fixed dimension `d = p + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopulaFamily {
    kind: FamilyKind,
    dim: usize,
    corr_structure: CorrelationStructure,
}

impl CopulaFamily {
    pub fn new(kind: FamilyKind, dim: usize) -> Result<Self> {
        Self::with_structure(kind, dim, CorrelationStructure::Unstructured)
    }

    pub fn with_structure(
        kind: FamilyKind,
        dim: usize,
        corr_structure: CorrelationStructure,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::dim("copula dimension must be at least 2"));
        }
        Ok(Self {
            kind,
            dim,
            corr_structure,
        })
    }

    /// The paper's candidate set: the six base families plus their mixture.
    pub fn standard_set(dim: usize, corr_structure: CorrelationStructure) -> Result<Vec<Self>> {
        let mut out: Vec<Self> = FamilyKind::BASE
            .iter()
            .map(|&k| Self::with_structure(k, dim, corr_structure))
            .collect::<Result<_>>()?;
        out.push(Self::with_structure(
            FamilyKind::Mixture,
            dim,
            corr_structure,
        )?);
        Ok(out)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn corr_structure(&self) -> CorrelationStructure {
        self.corr_structure
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Component families of the mixture, in fixed order.
    pub fn mixture_components(&self) -> Vec<CopulaFamily> {
        FamilyKind::BASE
            .iter()
            .map(|&k| CopulaFamily {
                kind: k,
                dim: self.dim,
                corr_structure: self.corr_structure,
            })
            .collect()
    }

    fn corr_param_count(&self) -> usize {
        match self.corr_structure {
            CorrelationStructure::Unstructured => self.dim * (self.dim - 1) / 2,
            CorrelationStructure::Exchangeable => 1,
        }
    }

    /// Number of free parameters `q_m` under the active parameterization.
    pub fn param_count(&self) -> usize {
        match self.kind {
            FamilyKind::Gaussian => self.corr_param_count(),
            FamilyKind::StudentT => self.corr_param_count() + 1,
            FamilyKind::Gumbel | FamilyKind::Clayton | FamilyKind::Frank | FamilyKind::Joe => 1,
            FamilyKind::Mixture => {
                self.mixture_components()
                    .iter()
                    .map(|f| f.param_count())
                    .sum::<usize>()
                    + 5
            }
        }
    }

    /// Parameters at which the family reduces to the independence copula.
    /// Clayton and Frank use their continuous extension at `theta = 0`; the
    /// Student-t uses the `nu = inf` (Gaussian) limit with identity
    /// correlation, which is accepted for evaluation but not reachable by
    /// fitting.
    pub fn independence_params(&self) -> CopulaParams {
        match self.kind {
            FamilyKind::Gaussian => CopulaParams::Gaussian {
                corr: DMatrix::identity(self.dim, self.dim),
            },
            FamilyKind::StudentT => CopulaParams::StudentT {
                corr: DMatrix::identity(self.dim, self.dim),
                nu: f64::INFINITY,
            },
            FamilyKind::Gumbel | FamilyKind::Joe => CopulaParams::Archimedean { theta: 1.0 },
            FamilyKind::Clayton | FamilyKind::Frank => CopulaParams::Archimedean { theta: 0.0 },
            FamilyKind::Mixture => CopulaParams::Mixture {
                components: self
                    .mixture_components()
                    .iter()
                    .map(|f| f.independence_params())
                    .collect(),
                mix: vec![1.0 / 6.0; 6],
            },
        }
    }
}

/// Natural-domain parameters of a candidate copula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CopulaParams {
    Gaussian {
        corr: DMatrix<f64>,
    },
    StudentT {
        corr: DMatrix<f64>,
        nu: f64,
    },
    Archimedean {
        theta: f64,
    },
    /// Six component parameter blocks (base-family order) plus mixing
    /// proportions on the simplex.
    Mixture {
        components: Vec<CopulaParams>,
        mix: Vec<f64>,
    },
}

/// Degrees-of-freedom bounds for the Student-t candidate.
pub const STUDENT_T_NU_MIN: f64 = 2.1;
pub const STUDENT_T_NU_MAX: f64 = 50.0;

/// Below this `|theta|` Clayton and Frank evaluate as the independence copula
/// (removable singularity at the origin).
pub const ARCHIMEDEAN_INDEPENDENCE_EPS: f64 = 1e-8;

/// Validates that `params` lies in the domain of `family`.
pub fn validate_params(family: &CopulaFamily, params: &CopulaParams) -> Result<()> {
    let d = family.dim();
    match (family.kind(), params) {
        (FamilyKind::Gaussian, CopulaParams::Gaussian { corr }) => {
            elliptical::validate_correlation(corr, d)
        }
        (FamilyKind::StudentT, CopulaParams::StudentT { corr, nu }) => {
            elliptical::validate_correlation(corr, d)?;
            if *nu == f64::INFINITY || (STUDENT_T_NU_MIN..=STUDENT_T_NU_MAX).contains(nu) {
                Ok(())
            } else {
                Err(Error::domain(format!(
                    "student_t nu = {nu} outside [{STUDENT_T_NU_MIN}, {STUDENT_T_NU_MAX}]"
                )))
            }
        }
        (kind, CopulaParams::Archimedean { theta }) if kind.archimedean().is_some() => {
            archimedean::validate_theta(kind.archimedean().unwrap(), *theta, d)
        }
        (FamilyKind::Mixture, CopulaParams::Mixture { components, mix }) => {
            let fams = family.mixture_components();
            if components.len() != 6 || mix.len() != 6 {
                return Err(Error::domain(
                    "mixture must hold exactly six component blocks and proportions",
                ));
            }
            for (f, p) in fams.iter().zip(components) {
                validate_params(f, p)?;
            }
            if mix.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
                return Err(Error::domain("mixing proportions must lie in [0, 1]"));
            }
            let s: f64 = mix.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::domain(format!(
                    "mixing proportions sum to {s}, expected 1"
                )));
            }
            Ok(())
        }
        (kind, _) => Err(Error::domain(format!(
            "parameter block does not match family {}",
            kind.name()
        ))),
    }
}

pub(crate) enum Kernel {
    Gaussian(elliptical::PreparedGaussian),
    StudentT(elliptical::PreparedStudentT),
    Archimedean(archimedean::PreparedArchimedean),
    Mixture {
        components: Vec<Kernel>,
        log_mix: Vec<f64>,
    },
}

impl Kernel {
    fn log_density(&self, u: &[f64]) -> f64 {
        match self {
            Kernel::Gaussian(g) => g.log_density(u),
            Kernel::StudentT(t) => t.log_density(u),
            Kernel::Archimedean(a) => a.log_density(u),
            Kernel::Mixture {
                components,
                log_mix,
            } => {
                let mut terms = [f64::NEG_INFINITY; 6];
                for (k, (c, &lw)) in components.iter().zip(log_mix).enumerate() {
                    if lw > f64::NEG_INFINITY {
                        terms[k] = lw + c.log_density(u);
                    }
                }
                log_sum_exp(&terms[..components.len()])
            }
        }
    }
}

/// A validated copula with family-specific precomputations, ready for
/// repeated log-density evaluation. Immutable and safe to share across
/// threads.
pub struct PreparedCopula {
    dim: usize,
    kernel: Kernel,
}

impl PreparedCopula {
    pub fn new(family: &CopulaFamily, params: &CopulaParams) -> Result<Self> {
        validate_params(family, params)?;
        let kernel = build_kernel(family, params)?;
        Ok(Self {
            dim: family.dim(),
            kernel,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Log density at an interior point; the caller guarantees
    /// `u.len() == dim` and every coordinate strictly inside (0, 1).
    pub fn log_density_unchecked(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dim);
        self.kernel.log_density(u)
    }

    /// Validated log density.
    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        check_interior(u, self.dim)?;
        Ok(self.log_density_unchecked(u))
    }

    /// Builds an evaluator for `log c(u0_i, u_rest)` over a fixed column of
    /// response margin values, the shape needed by the regression estimator.
    /// Per-row transforms are cached here so each query costs O(n) plus one
    /// covariate transform.
    pub fn row_evaluator(&self, u0: &[f64]) -> RowEvaluator {
        RowEvaluator {
            inner: build_rows(&self.kernel, u0),
            num_rows: u0.len(),
            dim: self.dim,
        }
    }
}

fn build_rows(kernel: &Kernel, u0: &[f64]) -> RowKernel {
    match kernel {
        Kernel::Gaussian(g) => RowKernel::Gaussian(g.rows(u0)),
        Kernel::StudentT(t) => RowKernel::StudentT(t.rows(u0)),
        Kernel::Archimedean(a) => RowKernel::Archimedean(a.rows(u0)),
        Kernel::Mixture {
            components,
            log_mix,
        } => RowKernel::Mixture {
            children: components.iter().map(|c| build_rows(c, u0)).collect(),
            log_mix: log_mix.clone(),
        },
    }
}

enum RowKernel {
    Gaussian(elliptical::GaussianRows),
    StudentT(elliptical::StudentTRows),
    Archimedean(archimedean::ArchRows),
    Mixture {
        children: Vec<RowKernel>,
        log_mix: Vec<f64>,
    },
}

impl RowKernel {
    fn query_base(&self, u_rest: &[f64], qbuf: &mut Vec<f64>, out: &mut [f64]) {
        match self {
            RowKernel::Gaussian(g) => g.query(u_rest, qbuf, out),
            RowKernel::StudentT(t) => t.query(u_rest, qbuf, out),
            RowKernel::Archimedean(a) => a.query(u_rest, out),
            RowKernel::Mixture { .. } => unreachable!("mixtures are not nested"),
        }
    }
}

/// Reusable buffers for [`RowEvaluator::query`]; create one per worker
/// thread.
#[derive(Default)]
pub struct RowScratch {
    qbuf: Vec<f64>,
    child_out: Vec<f64>,
}

/// Evaluates `log c(u0_i, u_rest)` for every cached row `i` at once.
pub struct RowEvaluator {
    inner: RowKernel,
    num_rows: usize,
    dim: usize,
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl RowEvaluator {
    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn make_scratch(&self) -> RowScratch {
        RowScratch {
            qbuf: Vec::with_capacity(self.dim),
            child_out: vec![0.0; self.num_rows],
        }
    }

    /// Fills `out[i] = log c(u0_i, u_rest)`. `u_rest` carries the covariate
    /// coordinates (length `dim - 1`), strictly interior.
    pub fn query(&self, u_rest: &[f64], scratch: &mut RowScratch, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.num_rows);
        debug_assert_eq!(u_rest.len(), self.dim - 1);
        match &self.inner {
            RowKernel::Mixture { children, log_mix } => {
                out.fill(f64::NEG_INFINITY);
                scratch.child_out.resize(self.num_rows, 0.0);
                for (child, &lw) in children.iter().zip(log_mix) {
                    if lw == f64::NEG_INFINITY {
                        continue;
                    }
                    child.query_base(u_rest, &mut scratch.qbuf, &mut scratch.child_out);
                    for (o, &c) in out.iter_mut().zip(&scratch.child_out) {
                        *o = log_add_exp(*o, lw + c);
                    }
                }
            }
            base => base.query_base(u_rest, &mut scratch.qbuf, out),
        }
    }
}

fn build_kernel(family: &CopulaFamily, params: &CopulaParams) -> Result<Kernel> {
    match (family.kind(), params) {
        (FamilyKind::Gaussian, CopulaParams::Gaussian { corr }) => {
            Ok(Kernel::Gaussian(elliptical::PreparedGaussian::new(corr)?))
        }
        (FamilyKind::StudentT, CopulaParams::StudentT { corr, nu }) => {
            if nu.is_infinite() {
                // Gaussian limit.
                Ok(Kernel::Gaussian(elliptical::PreparedGaussian::new(corr)?))
            } else {
                Ok(Kernel::StudentT(elliptical::PreparedStudentT::new(
                    corr, *nu,
                )?))
            }
        }
        (kind, CopulaParams::Archimedean { theta }) if kind.archimedean().is_some() => {
            Ok(Kernel::Archimedean(archimedean::PreparedArchimedean::new(
                kind.archimedean().unwrap(),
                *theta,
                family.dim(),
            )?))
        }
        (FamilyKind::Mixture, CopulaParams::Mixture { components, mix }) => {
            let fams = family.mixture_components();
            let kernels: Vec<Kernel> = fams
                .iter()
                .zip(components)
                .map(|(f, p)| build_kernel(f, p))
                .collect::<Result<_>>()?;
            let log_mix = mix.iter().map(|&w| w.ln()).collect();
            Ok(Kernel::Mixture {
                components: kernels,
                log_mix,
            })
        }
        (kind, _) => Err(Error::domain(format!(
            "parameter block does not match family {}",
            kind.name()
        ))),
    }
}

pub(crate) fn check_interior(u: &[f64], dim: usize) -> Result<()> {
    if u.len() != dim {
        return Err(Error::dim(format!(
            "point has {} coordinates, copula dimension is {dim}",
            u.len()
        )));
    }
    for (i, &v) in u.iter().enumerate() {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::BoundaryPoint { index: i, value: v });
        }
    }
    Ok(())
}

/// Log of the copula density `log c(u; params)`.
pub fn log_density(family: &CopulaFamily, params: &CopulaParams, u: &[f64]) -> Result<f64> {
    PreparedCopula::new(family, params)?.log_density(u)
}

/// Copula density `c(u; params) = exp(log_density)`.
pub fn density(family: &CopulaFamily, params: &CopulaParams, u: &[f64]) -> Result<f64> {
    log_density(family, params, u).map(f64::exp)
}
