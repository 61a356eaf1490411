//! Mappings between natural parameter domains and unconstrained optimizer
//! space.
//!
//! Layouts (row vectors of free coordinates):
//! - correlations: Fisher-z per upper-triangle entry (row-major, i < j), or a
//!   single Fisher-z value for the exchangeable structure;
//! - Student-t `nu`: logit of the position inside `[NU_MIN, NU_MAX]`;
//! - Gumbel/Joe: `ln(theta - 1)`; Clayton and multivariate Frank: `ln theta`;
//!   bivariate Frank: identity with an excluded-origin guard;
//! - mixture: the six component blocks in base order followed by five
//!   multinomial logits relative to the last proportion.
//!
//! `from_unconstrained` always returns a point in the natural domain: a
//! tanh-mapped correlation matrix failing the Cholesky test is projected back
//! by eigenvalue clipping, and exponent arguments are capped so the result
//! stays finite.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

use super::{
    CopulaFamily, CopulaParams, CorrelationStructure, FamilyKind, STUDENT_T_NU_MAX,
    STUDENT_T_NU_MIN,
};

/// Exponent cap for log-scale transforms (theta up to ~1e13).
const EXP_CAP: f64 = 30.0;
/// Bivariate Frank cap; far beyond any dependence the data can express.
const FRANK_BIV_CAP: f64 = 200.0;
/// Multivariate Frank theta cap.
const FRANK_MULTI_CAP: f64 = 6.0; // ln scale: theta <= ~400
const FRANK_ORIGIN_GUARD: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ParamSpace {
    family: CopulaFamily,
}

impl ParamSpace {
    pub fn new(family: CopulaFamily) -> Self {
        Self { family }
    }

    pub fn family(&self) -> &CopulaFamily {
        &self.family
    }

    /// Number of unconstrained coordinates, equal to the family's free
    /// parameter count.
    pub fn num_free(&self) -> usize {
        self.family.param_count()
    }

    pub fn to_unconstrained(&self, params: &CopulaParams) -> Result<Vec<f64>> {
        super::validate_params(&self.family, params)?;
        let mut v = Vec::with_capacity(self.num_free());
        self.push_unconstrained(params, &mut v)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain(
                "parameters lie on the boundary of the transform domain",
            ));
        }
        Ok(v)
    }

    pub fn from_unconstrained(&self, v: &[f64]) -> Result<CopulaParams> {
        if v.len() != self.num_free() {
            return Err(Error::dim(format!(
                "expected {} unconstrained coordinates, got {}",
                self.num_free(),
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::non_finite("unconstrained parameter vector"));
        }
        let mut rest = v;
        let params = self.read_params(&self.family, &mut rest)?;
        debug_assert!(rest.is_empty());
        Ok(params)
    }

    fn push_unconstrained(&self, params: &CopulaParams, out: &mut Vec<f64>) -> Result<()> {
        push_family(&self.family, params, out)
    }

    fn read_params(&self, family: &CopulaFamily, rest: &mut &[f64]) -> Result<CopulaParams> {
        read_family(family, rest)
    }
}

fn take<'a>(rest: &mut &'a [f64], k: usize) -> &'a [f64] {
    let (head, tail) = rest.split_at(k);
    *rest = tail;
    head
}

fn push_corr(
    corr: &DMatrix<f64>,
    structure: CorrelationStructure,
    dim: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    match structure {
        CorrelationStructure::Unstructured => {
            for i in 0..dim {
                for j in (i + 1)..dim {
                    out.push(corr[(i, j)].atanh());
                }
            }
        }
        CorrelationStructure::Exchangeable => {
            let r = corr[(0, 1)];
            for i in 0..dim {
                for j in (i + 1)..dim {
                    if (corr[(i, j)] - r).abs() > 1e-9 {
                        return Err(Error::domain(
                            "matrix is not exchangeable: off-diagonal entries differ",
                        ));
                    }
                }
            }
            out.push(r.atanh());
        }
    }
    Ok(())
}

fn read_corr(
    structure: CorrelationStructure,
    dim: usize,
    rest: &mut &[f64],
) -> Result<DMatrix<f64>> {
    match structure {
        CorrelationStructure::Unstructured => {
            let k = dim * (dim - 1) / 2;
            let vals = take(rest, k);
            let mut corr = DMatrix::identity(dim, dim);
            let mut idx = 0;
            for i in 0..dim {
                for j in (i + 1)..dim {
                    let r = vals[idx].tanh();
                    corr[(i, j)] = r;
                    corr[(j, i)] = r;
                    idx += 1;
                }
            }
            Ok(project_positive_definite(corr))
        }
        CorrelationStructure::Exchangeable => {
            let v = take(rest, 1)[0];
            let lower = -1.0 / (dim as f64 - 1.0);
            let r = v.tanh().clamp(lower + 1e-6, 1.0 - 1e-9);
            let mut corr = DMatrix::from_element(dim, dim, r);
            corr.fill_diagonal(1.0);
            Ok(corr)
        }
    }
}

/// Clips eigenvalues away from zero and rescales to unit diagonal; a no-op
/// for matrices that are already positive definite.
pub(crate) fn project_positive_definite(corr: DMatrix<f64>) -> DMatrix<f64> {
    if nalgebra::Cholesky::new(corr.clone()).is_some() {
        return corr;
    }
    let dim = corr.nrows();
    let eig = SymmetricEigen::new(corr);
    let floor = 1e-6;
    let mut rebuilt: DMatrix<f64> = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let lambda = eig.eigenvalues[k].max(floor);
        let v = eig.eigenvectors.column(k);
        for i in 0..dim {
            for j in 0..dim {
                rebuilt[(i, j)] += lambda * v[i] * v[j];
            }
        }
    }
    let scale: Vec<f64> = (0..dim).map(|i| rebuilt[(i, i)].sqrt()).collect();
    for i in 0..dim {
        for j in 0..dim {
            rebuilt[(i, j)] /= scale[i] * scale[j];
        }
    }
    rebuilt.fill_diagonal(1.0);
    rebuilt
}

fn push_family(family: &CopulaFamily, params: &CopulaParams, out: &mut Vec<f64>) -> Result<()> {
    let dim = family.dim();
    match (family.kind(), params) {
        (FamilyKind::Gaussian, CopulaParams::Gaussian { corr }) => {
            push_corr(corr, family.corr_structure(), dim, out)
        }
        (FamilyKind::StudentT, CopulaParams::StudentT { corr, nu }) => {
            push_corr(corr, family.corr_structure(), dim, out)?;
            let frac = (nu - STUDENT_T_NU_MIN) / (STUDENT_T_NU_MAX - STUDENT_T_NU_MIN);
            out.push((frac / (1.0 - frac)).ln());
            Ok(())
        }
        (FamilyKind::Gumbel | FamilyKind::Joe, CopulaParams::Archimedean { theta }) => {
            out.push((theta - 1.0).ln());
            Ok(())
        }
        (FamilyKind::Clayton, CopulaParams::Archimedean { theta }) => {
            out.push(theta.ln());
            Ok(())
        }
        (FamilyKind::Frank, CopulaParams::Archimedean { theta }) => {
            if dim == 2 {
                out.push(*theta);
            } else {
                out.push(theta.ln());
            }
            Ok(())
        }
        (FamilyKind::Mixture, CopulaParams::Mixture { components, mix }) => {
            for (f, p) in family.mixture_components().iter().zip(components) {
                push_family(f, p, out)?;
            }
            let last = mix[5];
            if mix.iter().any(|&w| w <= 0.0) {
                return Err(Error::domain(
                    "mixing proportions must be strictly positive for the logit transform",
                ));
            }
            for &w in &mix[..5] {
                out.push((w / last).ln());
            }
            Ok(())
        }
        (kind, _) => Err(Error::domain(format!(
            "parameter block does not match family {}",
            kind.name()
        ))),
    }
}

fn read_family(family: &CopulaFamily, rest: &mut &[f64]) -> Result<CopulaParams> {
    let dim = family.dim();
    match family.kind() {
        FamilyKind::Gaussian => Ok(CopulaParams::Gaussian {
            corr: read_corr(family.corr_structure(), dim, rest)?,
        }),
        FamilyKind::StudentT => {
            let corr = read_corr(family.corr_structure(), dim, rest)?;
            let v = take(rest, 1)[0];
            let frac = 1.0 / (1.0 + (-v).exp());
            let nu = STUDENT_T_NU_MIN + (STUDENT_T_NU_MAX - STUDENT_T_NU_MIN) * frac;
            Ok(CopulaParams::StudentT { corr, nu })
        }
        FamilyKind::Gumbel | FamilyKind::Joe => {
            let v = take(rest, 1)[0];
            Ok(CopulaParams::Archimedean {
                theta: 1.0 + v.min(EXP_CAP).exp(),
            })
        }
        FamilyKind::Clayton => {
            let v = take(rest, 1)[0];
            Ok(CopulaParams::Archimedean {
                theta: v.min(EXP_CAP).exp(),
            })
        }
        FamilyKind::Frank => {
            let v = take(rest, 1)[0];
            let theta = if dim == 2 {
                let t = v.clamp(-FRANK_BIV_CAP, FRANK_BIV_CAP);
                if t.abs() < FRANK_ORIGIN_GUARD {
                    if t < 0.0 {
                        -FRANK_ORIGIN_GUARD
                    } else {
                        FRANK_ORIGIN_GUARD
                    }
                } else {
                    t
                }
            } else {
                v.min(FRANK_MULTI_CAP).exp()
            };
            Ok(CopulaParams::Archimedean { theta })
        }
        FamilyKind::Mixture => {
            let components = family
                .mixture_components()
                .iter()
                .map(|f| read_family(f, rest))
                .collect::<Result<Vec<_>>>()?;
            let logits = take(rest, 5);
            let mut ext = [0.0f64; 6];
            ext[..5].copy_from_slice(logits);
            let m = ext.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = ext.iter().map(|&x| (x - m).exp()).collect();
            let total: f64 = exps.iter().sum();
            let mix: Vec<f64> = exps.iter().map(|e| e / total).collect();
            Ok(CopulaParams::Mixture { components, mix })
        }
    }
}
