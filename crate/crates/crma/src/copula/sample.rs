//! Copula sampling, used as a test oracle and for simulation checks.
//!
//! Elliptical families draw correlated normals (or t variates) and map them
//! through their marginal CDFs; Archimedean families use the frailty
//! construction `u_i = psi(E_i / V)` with the family's mixing variable `V`
//! (Gamma for Clayton, positive stable for Gumbel, logarithmic for Frank,
//! Sibuya for Joe); the mixture picks a component per draw.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

use super::{
    validate_params, ArchKind, CopulaFamily, CopulaParams, FamilyKind, ARCHIMEDEAN_INDEPENDENCE_EPS,
};

const INTERIOR_EPS: f64 = 1e-15;

/// Draws `count` i.i.d. points from the copula, reproducibly for a given
/// seed. Returns a `count x d` matrix with every entry strictly inside (0, 1).
pub fn sample(
    family: &CopulaFamily,
    params: &CopulaParams,
    count: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    validate_params(family, params)?;
    let sampler = Sampler::build(family, params)?;
    let dim = family.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(count, dim);
    let mut point = vec![0.0; dim];
    for r in 0..count {
        sampler.sample_point(&mut rng, &mut point);
        for (c, &v) in point.iter().enumerate() {
            out[(r, c)] = v.clamp(INTERIOR_EPS, 1.0 - INTERIOR_EPS);
        }
    }
    Ok(out)
}

enum Sampler {
    Independence,
    Gaussian {
        chol_l: DMatrix<f64>,
    },
    StudentT {
        chol_l: DMatrix<f64>,
        nu: f64,
        chi2: ChiSquared<f64>,
        dist: StudentsT,
    },
    Clayton {
        alpha: f64,
        gamma: Gamma<f64>,
    },
    Gumbel {
        alpha: f64,
    },
    FrankBiv {
        theta: f64,
    },
    Frank {
        theta: f64,
        p: f64,
    },
    Joe {
        alpha: f64,
    },
    Mixture {
        components: Vec<Sampler>,
        cum: Vec<f64>,
    },
}

impl Sampler {
    fn build(family: &CopulaFamily, params: &CopulaParams) -> Result<Self> {
        match (family.kind(), params) {
            (FamilyKind::Gaussian, CopulaParams::Gaussian { corr }) => {
                let chol = nalgebra::Cholesky::new(corr.clone())
                    .ok_or_else(|| Error::domain("correlation must be positive definite"))?;
                Ok(Sampler::Gaussian { chol_l: chol.l() })
            }
            (FamilyKind::StudentT, CopulaParams::StudentT { corr, nu }) => {
                let chol = nalgebra::Cholesky::new(corr.clone())
                    .ok_or_else(|| Error::domain("correlation must be positive definite"))?;
                if nu.is_infinite() {
                    return Ok(Sampler::Gaussian { chol_l: chol.l() });
                }
                Ok(Sampler::StudentT {
                    chol_l: chol.l(),
                    nu: *nu,
                    chi2: ChiSquared::new(*nu)
                        .map_err(|e| Error::domain(format!("chi-squared({nu}): {e}")))?,
                    dist: super::elliptical::t_distribution(*nu),
                })
            }
            (kind, CopulaParams::Archimedean { theta }) => {
                let arch = kind
                    .archimedean()
                    .ok_or_else(|| Error::domain("parameter block does not match family"))?;
                let theta = *theta;
                match arch {
                    ArchKind::Clayton => {
                        if theta < ARCHIMEDEAN_INDEPENDENCE_EPS {
                            Ok(Sampler::Independence)
                        } else {
                            let alpha = 1.0 / theta;
                            Ok(Sampler::Clayton {
                                alpha,
                                gamma: Gamma::new(alpha, 1.0)
                                    .map_err(|e| Error::domain(format!("gamma: {e}")))?,
                            })
                        }
                    }
                    ArchKind::Gumbel => {
                        if theta < 1.0 + 1e-9 {
                            Ok(Sampler::Independence)
                        } else {
                            Ok(Sampler::Gumbel { alpha: 1.0 / theta })
                        }
                    }
                    ArchKind::Frank => {
                        if theta.abs() < ARCHIMEDEAN_INDEPENDENCE_EPS {
                            Ok(Sampler::Independence)
                        } else if family.dim() == 2 {
                            Ok(Sampler::FrankBiv { theta })
                        } else {
                            Ok(Sampler::Frank {
                                theta,
                                p: -f64::exp_m1(-theta),
                            })
                        }
                    }
                    ArchKind::Joe => {
                        if theta < 1.0 + 1e-9 {
                            Ok(Sampler::Independence)
                        } else {
                            Ok(Sampler::Joe { alpha: 1.0 / theta })
                        }
                    }
                }
            }
            (FamilyKind::Mixture, CopulaParams::Mixture { components, mix }) => {
                let comps = family
                    .mixture_components()
                    .iter()
                    .zip(components)
                    .map(|(f, p)| Sampler::build(f, p))
                    .collect::<Result<Vec<_>>>()?;
                let mut cum = Vec::with_capacity(6);
                let mut acc = 0.0;
                for &w in mix {
                    acc += w;
                    cum.push(acc);
                }
                cum[5] = 1.0;
                Ok(Sampler::Mixture {
                    components: comps,
                    cum,
                })
            }
            (kind, _) => Err(Error::domain(format!(
                "parameter block does not match family {}",
                kind.name()
            ))),
        }
    }

    fn sample_point(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let dim = out.len();
        match self {
            Sampler::Independence => {
                for o in out.iter_mut() {
                    *o = rng.random();
                }
            }
            Sampler::Gaussian { chol_l } => {
                let normal = Normal::standard();
                let eps: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                for i in 0..dim {
                    let mut z = 0.0;
                    for j in 0..=i {
                        z += chol_l[(i, j)] * eps[j];
                    }
                    out[i] = normal.cdf(z);
                }
            }
            Sampler::StudentT {
                chol_l,
                nu,
                chi2,
                dist,
            } => {
                let eps: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                let w: f64 = chi2.sample(rng);
                let scale = (nu / w).sqrt();
                for i in 0..dim {
                    let mut z = 0.0;
                    for j in 0..=i {
                        z += chol_l[(i, j)] * eps[j];
                    }
                    out[i] = dist.cdf(z * scale);
                }
            }
            Sampler::Clayton { alpha, gamma } => {
                let v: f64 = gamma.sample(rng).max(f64::MIN_POSITIVE);
                for o in out.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    // psi(t) = (1+t)^{-1/theta}
                    *o = (-alpha * (e / v).ln_1p()).exp();
                }
            }
            Sampler::Gumbel { alpha } => {
                let v = sample_positive_stable(*alpha, rng);
                for o in out.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    // psi(t) = exp(-t^{1/theta}), 1/theta = alpha
                    *o = (-(e / v).powf(*alpha)).exp();
                }
            }
            Sampler::FrankBiv { theta } => {
                // Conditional-distribution inversion.
                let u1: f64 = rng.random();
                let q: f64 = rng.random();
                let a = (-theta * u1).exp();
                let b = 1.0 + q * f64::exp_m1(-theta) / (a - q * (a - 1.0));
                out[0] = u1;
                out[1] = -b.ln() / theta;
            }
            Sampler::Frank { theta, p } => {
                let v = sample_logarithmic(*p, *theta, rng);
                let c = -f64::exp_m1(-theta); // 1 - e^{-theta}
                for o in out.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    // psi(t) = -ln(1 - c e^{-t}) / theta
                    *o = -(-c * (-e / v).exp()).ln_1p() / theta;
                }
            }
            Sampler::Joe { alpha } => {
                let v = sample_sibuya(*alpha, rng);
                for o in out.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    // psi(t) = 1 - (1 - e^{-t})^{1/theta}
                    let t = e / v;
                    *o = -f64::exp_m1(*alpha * (-f64::exp_m1(-t)).ln());
                }
            }
            Sampler::Mixture { components, cum } => {
                let x: f64 = rng.random();
                let k = cum.iter().position(|&c| x < c).unwrap_or(cum.len() - 1);
                components[k].sample_point(rng, out);
            }
        }
    }
}

/// Positive stable variate with Laplace transform `exp(-t^alpha)`,
/// `0 < alpha < 1` (Chambers-Mallows-Stuck / Kanter construction).
fn sample_positive_stable(alpha: f64, rng: &mut ChaCha8Rng) -> f64 {
    let theta: f64 = rng.random::<f64>() * std::f64::consts::PI;
    let w: f64 = Exp1.sample(rng);
    let s = theta.sin();
    let a = ((alpha * theta).sin().powf(alpha) * ((1.0 - alpha) * theta).sin().powf(1.0 - alpha)
        / s)
        .powf(1.0 / (1.0 - alpha));
    (a / w).powf((1.0 - alpha) / alpha)
}

/// Logarithmic(p) variate with `p = 1 - e^{-theta}` (Kemp's second
/// accelerated algorithm); ln(1-p) = -theta exactly.
fn sample_logarithmic(p: f64, theta: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random();
    if u1 > p {
        return 1.0;
    }
    let v: f64 = rng.random();
    let q = -f64::exp_m1(-v * theta); // 1 - (1-p)^v
    if u1 < q * q {
        let k = (1.0 + u1.ln() / q.ln()).floor();
        if k.is_finite() && k >= 1.0 {
            k
        } else {
            1.0
        }
    } else if u1 > q {
        1.0
    } else {
        2.0
    }
}

/// Sibuya(alpha) variate by inverting the closed-form survival function
/// `P(V > n) = Gamma(n+1-alpha) / (Gamma(1-alpha) Gamma(n+1))`.
fn sample_sibuya(alpha: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random::<f64>().max(1e-300);
    let ln_u = u.ln();
    let ln_surv = |n: f64| ln_gamma(n + 1.0 - alpha) - ln_gamma(1.0 - alpha) - ln_gamma(n + 1.0);
    if ln_surv(1.0) <= ln_u {
        return 1.0;
    }
    let mut lo = 1.0f64;
    let mut hi = 2.0f64;
    while ln_surv(hi) > ln_u {
        lo = hi;
        hi *= 2.0;
        if hi > 1e30 {
            return hi;
        }
    }
    while hi - lo > 1.0 {
        let mid = ((lo + hi) / 2.0).floor();
        if mid <= lo || mid >= hi {
            break;
        }
        if ln_surv(mid) <= ln_u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
