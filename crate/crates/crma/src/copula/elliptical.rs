//! Gaussian and Student-t copula densities.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub(crate) fn validate_correlation(corr: &DMatrix<f64>, dim: usize) -> Result<()> {
    if corr.nrows() != dim || corr.ncols() != dim {
        return Err(Error::domain(format!(
            "correlation matrix is {}x{}, expected {dim}x{dim}",
            corr.nrows(),
            corr.ncols()
        )));
    }
    for i in 0..dim {
        if (corr[(i, i)] - 1.0).abs() > 1e-9 {
            return Err(Error::domain("correlation diagonal must be 1"));
        }
        for j in 0..dim {
            let v = corr[(i, j)];
            if !v.is_finite() || v.abs() > 1.0 {
                return Err(Error::domain("correlation entries must lie in [-1, 1]"));
            }
            if (v - corr[(j, i)]).abs() > 1e-9 {
                return Err(Error::domain("correlation matrix must be symmetric"));
            }
        }
    }
    if nalgebra::Cholesky::new(corr.clone()).is_none() {
        return Err(Error::domain(
            "correlation matrix must be positive definite",
        ));
    }
    Ok(())
}

pub(crate) fn norm_quantile(p: f64) -> f64 {
    // Interior p guaranteed by the callers.
    Normal::standard().inverse_cdf(p)
}

pub(crate) fn t_distribution(nu: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, nu).expect("validated nu")
}

/// Inverse CDF and log-determinant pieces of the Gaussian copula.
pub(crate) struct PreparedGaussian {
    precision: DMatrix<f64>,
    log_det: f64,
    dim: usize,
}

impl PreparedGaussian {
    pub(crate) fn new(corr: &DMatrix<f64>) -> Result<Self> {
        let dim = corr.nrows();
        validate_correlation(corr, dim)?;
        let chol = nalgebra::Cholesky::new(corr.clone())
            .ok_or_else(|| Error::domain("correlation matrix must be positive definite"))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| f64::ln(*v)).sum::<f64>();
        let precision = chol.inverse();
        Ok(Self {
            precision,
            log_det,
            dim,
        })
    }

    pub(crate) fn log_density(&self, u: &[f64]) -> f64 {
        let d = self.dim;
        let mut z = [0.0f64; 16];
        for (zi, &ui) in z[..d].iter_mut().zip(u) {
            *zi = norm_quantile(ui);
        }
        let mut quad = 0.0;
        let mut norm2 = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.precision[(i, j)] * z[j];
            }
            quad += z[i] * row;
            norm2 += z[i] * z[i];
        }
        -0.5 * (self.log_det + quad - norm2)
    }

    pub(crate) fn rows(&self, u0: &[f64]) -> GaussianRows {
        let d = self.dim;
        // A = precision - I, split into response/covariate blocks.
        let a00 = self.precision[(0, 0)] - 1.0;
        let a0q: Vec<f64> = (1..d).map(|j| self.precision[(0, j)]).collect();
        let mut aqq = Vec::with_capacity((d - 1) * (d - 1));
        for i in 1..d {
            for j in 1..d {
                let mut v = self.precision[(i, j)];
                if i == j {
                    v -= 1.0;
                }
                aqq.push(v);
            }
        }
        let z0: Vec<f64> = u0.iter().map(|&u| norm_quantile(u)).collect();
        GaussianRows {
            z0,
            a00,
            a0q,
            aqq,
            log_det: self.log_det,
            dim: d,
        }
    }
}

/// Gaussian copula evaluation against a fixed response column.
pub(crate) struct GaussianRows {
    z0: Vec<f64>,
    a00: f64,
    a0q: Vec<f64>,
    aqq: Vec<f64>,
    log_det: f64,
    dim: usize,
}

impl GaussianRows {
    pub(crate) fn query(&self, u_rest: &[f64], qbuf: &mut Vec<f64>, out: &mut [f64]) {
        let q = self.dim - 1;
        debug_assert_eq!(u_rest.len(), q);
        debug_assert_eq!(out.len(), self.z0.len());
        qbuf.clear();
        qbuf.extend(u_rest.iter().map(|&u| norm_quantile(u)));
        let mut cross = 0.0;
        let mut quad_q = 0.0;
        for i in 0..q {
            cross += self.a0q[i] * qbuf[i];
            let mut row = 0.0;
            for j in 0..q {
                row += self.aqq[i * q + j] * qbuf[j];
            }
            quad_q += qbuf[i] * row;
        }
        let base = self.log_det + quad_q;
        for (o, &z0) in out.iter_mut().zip(&self.z0) {
            *o = -0.5 * (base + z0 * (self.a00 * z0 + 2.0 * cross));
        }
    }
}

/// Student-t copula with finite degrees of freedom.
pub(crate) struct PreparedStudentT {
    precision: DMatrix<f64>,
    log_det: f64,
    nu: f64,
    dim: usize,
    /// lgamma((nu+d)/2) + (d-1) lgamma(nu/2) - d lgamma((nu+1)/2)
    gamma_const: f64,
    dist: StudentsT,
}

impl PreparedStudentT {
    pub(crate) fn new(corr: &DMatrix<f64>, nu: f64) -> Result<Self> {
        let dim = corr.nrows();
        validate_correlation(corr, dim)?;
        if !nu.is_finite() || nu <= 2.0 {
            return Err(Error::domain(format!(
                "student_t nu = {nu} must be finite and > 2"
            )));
        }
        let chol = nalgebra::Cholesky::new(corr.clone())
            .ok_or_else(|| Error::domain("correlation matrix must be positive definite"))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| f64::ln(*v)).sum::<f64>();
        let precision = chol.inverse();
        let d = dim as f64;
        let gamma_const = ln_gamma((nu + d) / 2.0) + (d - 1.0) * ln_gamma(nu / 2.0)
            - d * ln_gamma((nu + 1.0) / 2.0);
        Ok(Self {
            precision,
            log_det,
            nu,
            dim,
            gamma_const,
            dist: t_distribution(nu),
        })
    }

    pub(crate) fn log_density_from_z(&self, z: &[f64]) -> f64 {
        let d = self.dim;
        let nu = self.nu;
        let mut quad = 0.0;
        let mut margin_sum = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.precision[(i, j)] * z[j];
            }
            quad += z[i] * row;
            margin_sum += (z[i] * z[i] / nu).ln_1p();
        }
        self.gamma_const - 0.5 * self.log_det - 0.5 * (nu + d as f64) * (quad / nu).ln_1p()
            + 0.5 * (nu + 1.0) * margin_sum
    }

    pub(crate) fn log_density(&self, u: &[f64]) -> f64 {
        let mut z = [0.0f64; 16];
        for (zi, &ui) in z[..self.dim].iter_mut().zip(u) {
            *zi = self.dist.inverse_cdf(ui);
        }
        self.log_density_from_z(&z[..self.dim])
    }

    pub(crate) fn rows(&self, u0: &[f64]) -> StudentTRows {
        let d = self.dim;
        let b00 = self.precision[(0, 0)];
        let b0q: Vec<f64> = (1..d).map(|j| self.precision[(0, j)]).collect();
        let mut bqq = Vec::with_capacity((d - 1) * (d - 1));
        for i in 1..d {
            for j in 1..d {
                bqq.push(self.precision[(i, j)]);
            }
        }
        let z0: Vec<f64> = u0.iter().map(|&u| self.dist.inverse_cdf(u)).collect();
        let l0: Vec<f64> = z0.iter().map(|&z| (z * z / self.nu).ln_1p()).collect();
        StudentTRows {
            z0,
            l0,
            b00,
            b0q,
            bqq,
            log_det: self.log_det,
            nu: self.nu,
            dim: d,
            gamma_const: self.gamma_const,
            dist: self.dist,
        }
    }
}

pub(crate) struct StudentTRows {
    z0: Vec<f64>,
    l0: Vec<f64>,
    b00: f64,
    b0q: Vec<f64>,
    bqq: Vec<f64>,
    log_det: f64,
    nu: f64,
    dim: usize,
    gamma_const: f64,
    dist: StudentsT,
}

impl StudentTRows {
    pub(crate) fn query(&self, u_rest: &[f64], qbuf: &mut Vec<f64>, out: &mut [f64]) {
        let q = self.dim - 1;
        let nu = self.nu;
        debug_assert_eq!(u_rest.len(), q);
        qbuf.clear();
        qbuf.extend(u_rest.iter().map(|&u| self.dist.inverse_cdf(u)));
        let mut cross = 0.0;
        let mut quad_q = 0.0;
        let mut lsum_q = 0.0;
        for i in 0..q {
            cross += self.b0q[i] * qbuf[i];
            let mut row = 0.0;
            for j in 0..q {
                row += self.bqq[i * q + j] * qbuf[j];
            }
            quad_q += qbuf[i] * row;
            lsum_q += (qbuf[i] * qbuf[i] / nu).ln_1p();
        }
        let c0 = self.gamma_const - 0.5 * self.log_det;
        let half_joint = 0.5 * (nu + self.dim as f64);
        let half_margin = 0.5 * (nu + 1.0);
        for ((o, &z0), &l0) in out.iter_mut().zip(&self.z0).zip(&self.l0) {
            let quad = quad_q + z0 * (self.b00 * z0 + 2.0 * cross);
            *o = c0 - half_joint * (quad / nu).ln_1p() + half_margin * (l0 + lsum_q);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr2(rho: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])
    }

    #[test]
    fn gaussian_identity_is_exact_zero() {
        let g = PreparedGaussian::new(&DMatrix::identity(4, 4)).unwrap();
        for u in [[0.1, 0.9, 0.5, 0.3], [0.01, 0.99, 0.6, 0.2]] {
            assert_eq!(g.log_density(&u), 0.0);
        }
    }

    #[test]
    fn gaussian_bivariate_matches_closed_form() {
        // log c(u, v) = -0.5 ln(1-r^2) - (r^2 (x^2+y^2) - 2 r x y) / (2 (1-r^2))
        let rho: f64 = 0.6;
        let g = PreparedGaussian::new(&corr2(rho)).unwrap();
        let (u, v) = (0.3, 0.8);
        let (x, y) = (norm_quantile(u), norm_quantile(v));
        let expect = -0.5 * (1.0 - rho * rho).ln()
            - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * (1.0 - rho * rho));
        let got = g.log_density(&[u, v]);
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn student_t_matches_direct_formula() {
        let rho: f64 = -0.4;
        let nu: f64 = 6.5;
        let t = PreparedStudentT::new(&corr2(rho), nu).unwrap();
        let dist = t_distribution(nu);
        let (u, v) = (0.25, 0.7);
        let (x, y) = (dist.inverse_cdf(u), dist.inverse_cdf(v));
        // c = f_{2,nu,R}(x,y) / (f_nu(x) f_nu(y))
        let det = 1.0 - rho * rho;
        let quad = (x * x - 2.0 * rho * x * y + y * y) / det;
        let log_joint = ln_gamma((nu + 2.0) / 2.0)
            - ln_gamma(nu / 2.0)
            - (nu * std::f64::consts::PI).ln()
            - 0.5 * det.ln()
            - (nu + 2.0) / 2.0 * (1.0 + quad / nu).ln();
        let log_margin = |z: f64| {
            ln_gamma((nu + 1.0) / 2.0)
                - ln_gamma(nu / 2.0)
                - 0.5 * (nu * std::f64::consts::PI).ln()
                - (nu + 1.0) / 2.0 * (1.0 + z * z / nu).ln()
        };
        let expect = log_joint - log_margin(x) - log_margin(y);
        let got = t.log_density(&[u, v]);
        assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
    }

    #[test]
    fn rows_match_pointwise_evaluation() {
        let corr = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, -0.2, 0.5, 1.0, 0.1, -0.2, 0.1, 1.0]);
        let u0 = [0.2, 0.5, 0.9];
        let u_rest = [0.35, 0.61];
        let mut qbuf = Vec::new();
        let mut out = vec![0.0; 3];

        let g = PreparedGaussian::new(&corr).unwrap();
        g.rows(&u0).query(&u_rest, &mut qbuf, &mut out);
        for (i, &o) in out.iter().enumerate() {
            let direct = g.log_density(&[u0[i], u_rest[0], u_rest[1]]);
            assert!((o - direct).abs() < 1e-12);
        }

        let t = PreparedStudentT::new(&corr, 4.2).unwrap();
        t.rows(&u0).query(&u_rest, &mut qbuf, &mut out);
        for (i, &o) in out.iter().enumerate() {
            let direct = t.log_density(&[u0[i], u_rest[0], u_rest[1]]);
            assert!((o - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_correlation() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 1.2, 1.2, 1.0]);
        assert!(PreparedGaussian::new(&bad).is_err());
        let not_pd =
            DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        assert!(PreparedGaussian::new(&not_pd).is_err());
    }
}
