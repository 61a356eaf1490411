//! Shared test oracles, independent of the library's evaluation paths.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

// ---------------------------------------------------------------------------
// Truncated power-series (jet) arithmetic
// ---------------------------------------------------------------------------

/// Coefficients of a truncated Taylor expansion around a point; `c[k]` is the
/// coefficient of `eps^k`.
#[derive(Debug, Clone)]
pub struct Jet {
    pub c: Vec<f64>,
}

impl Jet {
    pub fn constant(v: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = v;
        Jet { c }
    }

    pub fn variable(v: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = v;
        if order >= 1 {
            c[1] = 1.0;
        }
        Jet { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn add(&self, other: &Jet) -> Jet {
        let c = self.c.iter().zip(&other.c).map(|(a, b)| a + b).collect();
        Jet { c }
    }

    pub fn add_const(&self, v: f64) -> Jet {
        let mut c = self.c.clone();
        c[0] += v;
        Jet { c }
    }

    pub fn scale(&self, v: f64) -> Jet {
        Jet {
            c: self.c.iter().map(|a| a * v).collect(),
        }
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        let n = self.c.len();
        let mut c = vec![0.0; n];
        for i in 0..n {
            for j in 0..(n - i) {
                c[i + j] += self.c[i] * other.c[j];
            }
        }
        Jet { c }
    }

    /// exp(a): b_0 = exp(a_0), k b_k = sum_{j=1..k} j a_j b_{k-j}.
    pub fn exp(&self) -> Jet {
        let n = self.c.len();
        let mut b = vec![0.0; n];
        b[0] = self.c[0].exp();
        for k in 1..n {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * self.c[j] * b[k - j];
            }
            b[k] = acc / k as f64;
        }
        Jet { c: b }
    }

    /// ln(a): b_0 = ln(a_0), b_k = (a_k - (1/k) sum_{j=1..k-1} j b_j a_{k-j}) / a_0.
    pub fn ln(&self) -> Jet {
        let n = self.c.len();
        let a0 = self.c[0];
        let mut b = vec![0.0; n];
        b[0] = a0.ln();
        for k in 1..n {
            let mut acc = 0.0;
            for j in 1..k {
                acc += j as f64 * b[j] * self.c[k - j];
            }
            b[k] = (self.c[k] - acc / k as f64) / a0;
        }
        Jet { c: b }
    }

    pub fn powf(&self, alpha: f64) -> Jet {
        self.ln().scale(alpha).exp()
    }

    /// k-th derivative value: k! * c[k].
    pub fn derivative(&self, k: usize) -> f64 {
        let mut fact = 1.0;
        for i in 2..=k {
            fact *= i as f64;
        }
        self.c[k] * fact
    }
}

// ---------------------------------------------------------------------------
// Archimedean density oracle via generator-composition differentiation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchFamily {
    Gumbel,
    Clayton,
    Frank,
    Joe,
}

/// Generator psi applied to a jet in t.
fn psi_jet(family: ArchFamily, theta: f64, t: &Jet) -> Jet {
    let alpha = 1.0 / theta;
    match family {
        // psi(t) = exp(-t^alpha)
        ArchFamily::Gumbel => t.powf(alpha).scale(-1.0).exp(),
        // psi(t) = (1 + t)^{-alpha}
        ArchFamily::Clayton => t.add_const(1.0).powf(-alpha),
        // psi(t) = -(1/theta) ln(1 - (1 - e^{-theta}) e^{-t})
        ArchFamily::Frank => {
            let c = 1.0 - (-theta).exp();
            t.scale(-1.0)
                .exp()
                .scale(-c)
                .add_const(1.0)
                .ln()
                .scale(-alpha)
        }
        // psi(t) = 1 - (1 - e^{-t})^alpha
        ArchFamily::Joe => t
            .scale(-1.0)
            .exp()
            .scale(-1.0)
            .add_const(1.0)
            .powf(alpha)
            .scale(-1.0)
            .add_const(1.0),
    }
}

/// Generator inverse as a first-order jet in u, giving its value and first
/// derivative.
fn generator_inverse_jet(family: ArchFamily, theta: f64, u: f64) -> (f64, f64) {
    let j = Jet::variable(u, 1);
    let alpha = 1.0 / theta;
    let out = match family {
        // (-ln u)^theta
        ArchFamily::Gumbel => j.ln().scale(-1.0).powf(theta),
        // u^{-theta} - 1
        ArchFamily::Clayton => j.powf(-theta).add_const(-1.0),
        // -ln((e^{-theta u} - 1) / (e^{-theta} - 1))
        ArchFamily::Frank => {
            let denom = (-theta).exp() - 1.0;
            j.scale(-theta)
                .exp()
                .add_const(-1.0)
                .scale(1.0 / denom)
                .ln()
                .scale(-1.0)
        }
        // -ln(1 - (1-u)^theta)
        ArchFamily::Joe => j
            .scale(-1.0)
            .add_const(1.0)
            .powf(theta)
            .scale(-1.0)
            .add_const(1.0)
            .ln()
            .scale(-1.0),
    };
    let _ = alpha;
    (out.c[0], out.c[1])
}

/// Independent density oracle: the mixed partial of
/// `C(u) = psi(sum_i psi^{-1}(u_i))` equals
/// `psi^{(d)}(t) * prod_i (psi^{-1})'(u_i)`, with `psi^{(d)}` taken from the
/// d-th Taylor coefficient of the generator composition.
pub fn arch_log_density_oracle(family: ArchFamily, theta: f64, u: &[f64]) -> f64 {
    let d = u.len();
    let mut t = 0.0;
    let mut log_dprod = 0.0;
    let mut sign = 1.0;
    for &ui in u {
        let (g, gp) = generator_inverse_jet(family, theta, ui);
        t += g;
        log_dprod += gp.abs().ln();
        sign *= gp.signum();
    }
    let jet = psi_jet(family, theta, &Jet::variable(t, d));
    let deriv = jet.derivative(d);
    let value = deriv * sign;
    debug_assert!(value > 0.0, "oracle density must be positive, got {value}");
    value.abs().ln() + log_dprod
}

// ---------------------------------------------------------------------------
// Bivariate copula CDF oracles
// ---------------------------------------------------------------------------

/// Standard bivariate normal CDF by Gauss-Legendre quadrature of
/// `int_{-inf}^{a} phi(z) Phi((b - rho z)/sqrt(1-rho^2)) dz`.
pub fn bivariate_normal_cdf(a: f64, b: f64, rho: f64) -> f64 {
    let normal = Normal::standard();
    let denom = (1.0 - rho * rho).sqrt();
    let lo = -9.0f64;
    if a <= lo {
        return 0.0;
    }
    // 64-point Gauss-Legendre nodes per panel, 24 panels.
    let (nodes, weights) = gauss_legendre_64();
    let panels = 24;
    let width = (a - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let left = lo + p as f64 * width;
        let mid = left + width / 2.0;
        let half = width / 2.0;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            let z = mid + half * x;
            total += w * half * normal.pdf(z) * normal.cdf((b - rho * z) / denom);
        }
    }
    total
}

/// Bivariate Gaussian copula CDF.
pub fn gaussian_copula_cdf(u: f64, v: f64, rho: f64) -> f64 {
    let normal = Normal::standard();
    bivariate_normal_cdf(normal.inverse_cdf(u), normal.inverse_cdf(v), rho)
}

/// Bivariate Clayton copula CDF (closed form).
pub fn clayton_copula_cdf(u: f64, v: f64, theta: f64) -> f64 {
    (u.powf(-theta) + v.powf(-theta) - 1.0).powf(-1.0 / theta)
}

/// Centered finite-difference mixed partial of a bivariate CDF.
pub fn mixed_partial(cdf: impl Fn(f64, f64) -> f64, u: f64, v: f64, h: f64) -> f64 {
    (cdf(u + h, v + h) - cdf(u + h, v - h) - cdf(u - h, v + h) + cdf(u - h, v - h)) / (4.0 * h * h)
}

fn gauss_legendre_64() -> (Vec<f64>, Vec<f64>) {
    // Nodes/weights computed by Newton iteration on Legendre polynomials.
    let n = 64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
