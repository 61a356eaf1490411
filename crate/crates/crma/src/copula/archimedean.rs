//! Archimedean copula densities (Gumbel, Clayton, Frank, Joe) in any
//! dimension.
//!
//! With generator `psi` and inverse `g = psi^{-1}`, the density at
//! `u = (u_1, …, u_d)` is `(-1)^d psi^(d)(t) * prod |g'(u_i)|` where
//! `t = sum g(u_i)`. Clayton has a closed-form product expression; for
//! Gumbel, Frank, and Joe the d-th generator derivative is
//! `(-1)^d psi^(d)(t) = prefactor * P_d(x)` with `P_d` a fixed-degree
//! polynomial with nonnegative coefficients obtained by differentiating the
//! previous order, so the coefficients follow an exact recursion:
//!
//! - Gumbel (`s = t^(1/theta)`):  `R_{m+1,k} = (m - alpha k) R_{m,k} + alpha R_{m,k-1}`
//! - Frank (`w = v/(1-v)`):       `P_{m+1,k} = k P_{m,k} + (k-1) P_{m,k-1}`
//! - Joe (`y = x/(1-x)`):         `P_{m+1,k} = k P_{m,k} + (k-1-alpha) P_{m,k-1}`
//!
//! Everything is evaluated in log space; the only exponentiations happen on
//! guarded ranges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ARCHIMEDEAN_INDEPENDENCE_EPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchKind {
    Gumbel,
    Clayton,
    Frank,
    Joe,
}

pub(crate) fn validate_theta(kind: ArchKind, theta: f64, dim: usize) -> Result<()> {
    if !theta.is_finite() {
        return Err(Error::domain("theta must be finite"));
    }
    let ok = match kind {
        ArchKind::Gumbel | ArchKind::Joe => theta >= 1.0,
        ArchKind::Clayton => theta >= 0.0,
        // The multivariate Frank generator is completely monotone only for
        // positive theta; negative dependence is available at d = 2.
        ArchKind::Frank => {
            if dim == 2 {
                true
            } else {
                theta >= 0.0
            }
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "theta = {theta} outside the {kind:?} domain for dimension {dim}"
        )))
    }
}

/// ln(1 - e^{-x}) for x > 0.
#[inline]
fn ln_one_minus_exp_neg(x: f64) -> f64 {
    (-f64::exp_m1(-x)).ln()
}

/// ln(sum_{k=1..K} c_k x^k) given log_x, with overflow/underflow guards.
#[inline]
fn eval_log_poly(coeffs: &[f64], log_coeffs: &[f64], log_x: f64) -> f64 {
    let deg = coeffs.len() as f64;
    if log_x.abs() * deg < 600.0 {
        let x = log_x.exp();
        let mut acc = 0.0f64;
        for &c in coeffs.iter().rev() {
            acc = acc.mul_add(x, c);
        }
        acc.ln() + log_x
    } else {
        // x is extreme; a single monomial dominates to double precision.
        let mut best = f64::NEG_INFINITY;
        for (i, &lc) in log_coeffs.iter().enumerate() {
            let v = lc + (i as f64 + 1.0) * log_x;
            if v > best {
                best = v;
            }
        }
        best
    }
}

fn gumbel_coeffs(alpha: f64, dim: usize) -> Vec<f64> {
    let mut c = vec![alpha];
    for m in 1..dim {
        let mut next = vec![0.0; m + 1];
        for k in 1..=m {
            next[k - 1] += (m as f64 - alpha * k as f64) * c[k - 1];
            next[k] += alpha * c[k - 1];
        }
        c = next;
    }
    c
}

fn frank_coeffs(dim: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for m in 1..dim {
        let mut next = vec![0.0; m + 1];
        for k in 1..=m {
            next[k - 1] += k as f64 * c[k - 1];
            next[k] += k as f64 * c[k - 1];
        }
        c = next;
    }
    c
}

fn joe_coeffs(alpha: f64, dim: usize) -> Vec<f64> {
    let mut c = vec![alpha];
    for m in 1..dim {
        let mut next = vec![0.0; m + 1];
        for k in 1..=m {
            next[k - 1] += k as f64 * c[k - 1];
            next[k] += (k as f64 - alpha) * c[k - 1];
        }
        c = next;
    }
    c
}

pub(crate) struct PreparedArchimedean {
    kind: ArchKind,
    theta: f64,
    alpha: f64,
    dim: usize,
    independence: bool,
    coeffs: Vec<f64>,
    log_coeffs: Vec<f64>,
    /// Clayton: sum ln(1+k theta); Frank (d>=3): ln(1-e^{-theta});
    /// Frank (d=2): ln|theta (1-e^{-theta})|.
    aux: f64,
}

impl PreparedArchimedean {
    pub(crate) fn new(kind: ArchKind, theta: f64, dim: usize) -> Result<Self> {
        validate_theta(kind, theta, dim)?;
        let independence = match kind {
            ArchKind::Clayton | ArchKind::Frank => theta.abs() < ARCHIMEDEAN_INDEPENDENCE_EPS,
            ArchKind::Gumbel | ArchKind::Joe => false,
        };
        let alpha = 1.0 / theta;
        let mut prepared = Self {
            kind,
            theta,
            alpha,
            dim,
            independence,
            coeffs: Vec::new(),
            log_coeffs: Vec::new(),
            aux: 0.0,
        };
        if independence {
            return Ok(prepared);
        }
        match kind {
            ArchKind::Clayton => {
                prepared.aux = (1..dim).map(|k| (1.0 + k as f64 * theta).ln()).sum();
            }
            ArchKind::Gumbel => {
                prepared.coeffs = gumbel_coeffs(alpha, dim);
            }
            ArchKind::Frank => {
                if dim == 2 {
                    prepared.aux = (theta * f64::exp_m1(-theta)).abs().ln();
                } else {
                    prepared.aux = ln_one_minus_exp_neg(theta);
                    prepared.coeffs = frank_coeffs(dim);
                }
            }
            ArchKind::Joe => {
                prepared.coeffs = joe_coeffs(alpha, dim);
            }
        }
        prepared.log_coeffs = prepared.coeffs.iter().map(|&c| c.ln()).collect();
        Ok(prepared)
    }

    pub(crate) fn log_density(&self, u: &[f64]) -> f64 {
        if self.independence {
            return 0.0;
        }
        let d = self.dim as f64;
        let theta = self.theta;
        match self.kind {
            ArchKind::Clayton => {
                let mut s = 0.0;
                let mut lsum = 0.0;
                for &ui in u {
                    let lu = ui.ln();
                    lsum += lu;
                    s += f64::exp_m1(-theta * lu);
                }
                self.aux - (1.0 + theta) * lsum - (d + self.alpha) * s.ln_1p()
            }
            ArchKind::Gumbel => {
                let mut m = f64::NEG_INFINITY;
                let mut h = 0.0;
                let mut lam = [0.0f64; 16];
                for (i, &ui) in u.iter().enumerate() {
                    let lu = ui.ln();
                    let l = (-lu).ln();
                    lam[i] = theta * l;
                    if lam[i] > m {
                        m = lam[i];
                    }
                    h += (theta - 1.0) * l - lu;
                }
                let tsum: f64 = lam[..u.len()].iter().map(|&a| (a - m).exp()).sum();
                let log_t = m + tsum.ln();
                let log_s = self.alpha * log_t;
                let core = eval_log_poly(&self.coeffs, &self.log_coeffs, log_s);
                let s = log_s.exp();
                if s == f64::INFINITY {
                    return f64::NEG_INFINITY;
                }
                -s - d * log_t + core + d * theta.ln() + h
            }
            ArchKind::Frank => {
                if self.dim == 2 {
                    let e0 = f64::exp_m1(-theta * u[0]);
                    let e1 = f64::exp_m1(-theta * u[1]);
                    let disc = -f64::exp_m1(-theta) - e0 * e1;
                    self.aux - theta * (u[0] + u[1]) - 2.0 * disc.abs().ln()
                } else {
                    let mut lg_sum = 0.0;
                    let mut u_sum = 0.0;
                    for &ui in u {
                        lg_sum += ln_one_minus_exp_neg(theta * ui);
                        u_sum += ui;
                    }
                    let ln_a = lg_sum - d * self.aux;
                    let one_minus_v =
                        (-f64::exp_m1(ln_a) + (ln_a - theta).exp()).max(f64::MIN_POSITIVE);
                    let ln_w = ln_a + self.aux - one_minus_v.ln();
                    let core = eval_log_poly(&self.coeffs, &self.log_coeffs, ln_w);
                    (d - 1.0) * theta.ln() - theta * u_sum - lg_sum + core
                }
            }
            ArchKind::Joe => {
                let mut sum_lx = 0.0;
                let mut h = 0.0;
                for &ui in u {
                    let lo = (1.0 - ui).ln();
                    let lx = (-f64::exp_m1(theta * lo)).ln();
                    sum_lx += lx;
                    h += (theta - 1.0) * lo - lx;
                }
                let one_minus_x = (-f64::exp_m1(sum_lx)).max(f64::MIN_POSITIVE);
                let ln_y = sum_lx - one_minus_x.ln();
                let core = eval_log_poly(&self.coeffs, &self.log_coeffs, ln_y);
                self.alpha * one_minus_x.ln() + core + d * theta.ln() + h
            }
        }
    }

    pub(crate) fn rows(&self, u0: &[f64]) -> ArchRows {
        if self.independence {
            return ArchRows::Independence { n: u0.len() };
        }
        let theta = self.theta;
        match self.kind {
            ArchKind::Clayton => ArchRows::Clayton {
                em0: u0.iter().map(|&u| f64::exp_m1(-theta * u.ln())).collect(),
                lnu0: u0.iter().map(|&u| u.ln()).collect(),
                theta,
                alpha: self.alpha,
                dim: self.dim,
                aux: self.aux,
            },
            ArchKind::Gumbel => ArchRows::Gumbel {
                a0: u0.iter().map(|&u| theta * (-u.ln()).ln()).collect(),
                h0: u0
                    .iter()
                    .map(|&u| {
                        let lu = u.ln();
                        (theta - 1.0) * (-lu).ln() - lu
                    })
                    .collect(),
                coeffs: self.coeffs.clone(),
                log_coeffs: self.log_coeffs.clone(),
                theta,
                alpha: self.alpha,
                dim: self.dim,
            },
            ArchKind::Frank if self.dim == 2 => ArchRows::FrankBiv {
                e0: u0.iter().map(|&u| f64::exp_m1(-theta * u)).collect(),
                u0: u0.to_vec(),
                neg_em1_theta: -f64::exp_m1(-theta),
                theta,
                aux: self.aux,
            },
            ArchKind::Frank => ArchRows::Frank {
                lg0: u0
                    .iter()
                    .map(|&u| ln_one_minus_exp_neg(theta * u))
                    .collect(),
                u0: u0.to_vec(),
                coeffs: self.coeffs.clone(),
                log_coeffs: self.log_coeffs.clone(),
                theta,
                ln_g1: self.aux,
                dim: self.dim,
            },
            ArchKind::Joe => ArchRows::Joe {
                lx0: u0
                    .iter()
                    .map(|&u| (-f64::exp_m1(theta * (1.0 - u).ln())).ln())
                    .collect(),
                h0: u0
                    .iter()
                    .map(|&u| {
                        let lo = (1.0 - u).ln();
                        let lx = (-f64::exp_m1(theta * lo)).ln();
                        (theta - 1.0) * lo - lx
                    })
                    .collect(),
                coeffs: self.coeffs.clone(),
                log_coeffs: self.log_coeffs.clone(),
                theta,
                alpha: self.alpha,
                dim: self.dim,
            },
        }
    }
}

/// Archimedean evaluation against a fixed response column.
pub(crate) enum ArchRows {
    Independence {
        n: usize,
    },
    Clayton {
        em0: Vec<f64>,
        lnu0: Vec<f64>,
        theta: f64,
        alpha: f64,
        dim: usize,
        aux: f64,
    },
    Gumbel {
        a0: Vec<f64>,
        h0: Vec<f64>,
        coeffs: Vec<f64>,
        log_coeffs: Vec<f64>,
        theta: f64,
        alpha: f64,
        dim: usize,
    },
    FrankBiv {
        e0: Vec<f64>,
        u0: Vec<f64>,
        neg_em1_theta: f64,
        theta: f64,
        aux: f64,
    },
    Frank {
        lg0: Vec<f64>,
        u0: Vec<f64>,
        coeffs: Vec<f64>,
        log_coeffs: Vec<f64>,
        theta: f64,
        ln_g1: f64,
        dim: usize,
    },
    Joe {
        lx0: Vec<f64>,
        h0: Vec<f64>,
        coeffs: Vec<f64>,
        log_coeffs: Vec<f64>,
        theta: f64,
        alpha: f64,
        dim: usize,
    },
}

impl ArchRows {
    pub(crate) fn query(&self, u_rest: &[f64], out: &mut [f64]) {
        match self {
            ArchRows::Independence { n } => {
                debug_assert_eq!(out.len(), *n);
                out.fill(0.0);
            }
            ArchRows::Clayton {
                em0,
                lnu0,
                theta,
                alpha,
                dim,
                aux,
            } => {
                let d = *dim as f64;
                let mut sq = 0.0;
                let mut lq = 0.0;
                for &uj in u_rest {
                    let lu = uj.ln();
                    lq += lu;
                    sq += f64::exp_m1(-theta * lu);
                }
                let expo = d + alpha;
                for ((o, &e0), &lu0) in out.iter_mut().zip(em0).zip(lnu0) {
                    *o = aux - (1.0 + theta) * (lu0 + lq) - expo * (e0 + sq).ln_1p();
                }
            }
            ArchRows::Gumbel {
                a0,
                h0,
                coeffs,
                log_coeffs,
                theta,
                alpha,
                dim,
            } => {
                let d = *dim as f64;
                let mut mq = f64::NEG_INFINITY;
                let mut hq = 0.0;
                let mut aq = [0.0f64; 16];
                for (j, &uj) in u_rest.iter().enumerate() {
                    let lu = uj.ln();
                    let l = (-lu).ln();
                    aq[j] = theta * l;
                    if aq[j] > mq {
                        mq = aq[j];
                    }
                    hq += (theta - 1.0) * l - lu;
                }
                let tq: f64 = aq[..u_rest.len()].iter().map(|&a| (a - mq).exp()).sum();
                let log_tq = mq + tq.ln();
                let const_part = d * theta.ln() + hq;
                for ((o, &a0i), &h0i) in out.iter_mut().zip(a0).zip(h0) {
                    let (hi, lo) = if a0i > log_tq {
                        (a0i, log_tq)
                    } else {
                        (log_tq, a0i)
                    };
                    let log_t = hi + (lo - hi).exp().ln_1p();
                    let log_s = alpha * log_t;
                    let s = log_s.exp();
                    if s == f64::INFINITY {
                        *o = f64::NEG_INFINITY;
                        continue;
                    }
                    let core = eval_log_poly(coeffs, log_coeffs, log_s);
                    *o = -s - d * log_t + core + const_part + h0i;
                }
            }
            ArchRows::FrankBiv {
                e0,
                u0,
                neg_em1_theta,
                theta,
                aux,
            } => {
                let u1 = u_rest[0];
                let e1 = f64::exp_m1(-theta * u1);
                for ((o, &e0i), &u0i) in out.iter_mut().zip(e0).zip(u0) {
                    let disc = neg_em1_theta - e0i * e1;
                    *o = aux - theta * (u0i + u1) - 2.0 * disc.abs().ln();
                }
            }
            ArchRows::Frank {
                lg0,
                u0,
                coeffs,
                log_coeffs,
                theta,
                ln_g1,
                dim,
            } => {
                let d = *dim as f64;
                let mut lgq = 0.0;
                let mut uq = 0.0;
                for &uj in u_rest {
                    lgq += ln_one_minus_exp_neg(theta * uj);
                    uq += uj;
                }
                let const_part = (d - 1.0) * theta.ln();
                for ((o, &lg0i), &u0i) in out.iter_mut().zip(lg0).zip(u0) {
                    let lg_sum = lg0i + lgq;
                    let ln_a = lg_sum - d * ln_g1;
                    let one_minus_v =
                        (-f64::exp_m1(ln_a) + (ln_a - theta).exp()).max(f64::MIN_POSITIVE);
                    let ln_w = ln_a + ln_g1 - one_minus_v.ln();
                    let core = eval_log_poly(coeffs, log_coeffs, ln_w);
                    *o = const_part - theta * (u0i + uq) - lg_sum + core;
                }
            }
            ArchRows::Joe {
                lx0,
                h0,
                coeffs,
                log_coeffs,
                theta,
                alpha,
                dim,
            } => {
                let d = *dim as f64;
                let mut lxq = 0.0;
                let mut hq = 0.0;
                for &uj in u_rest {
                    let lo = (1.0 - uj).ln();
                    let lx = (-f64::exp_m1(theta * lo)).ln();
                    lxq += lx;
                    hq += (theta - 1.0) * lo - lx;
                }
                let const_part = d * theta.ln() + hq;
                for ((o, &lx0i), &h0i) in out.iter_mut().zip(lx0).zip(h0) {
                    let sum_lx = lx0i + lxq;
                    let one_minus_x = (-f64::exp_m1(sum_lx)).max(f64::MIN_POSITIVE);
                    let ln_y = sum_lx - one_minus_x.ln();
                    let core = eval_log_poly(coeffs, log_coeffs, ln_y);
                    *o = alpha * one_minus_x.ln() + core + const_part + h0i;
                }
            }
        }
    }
}
