//! Small numeric helpers shared across modules.

/// Deterministic sub-seed derivation (splitmix64 finalizer over
/// `master XOR tag * golden`), so independent pipeline stages never share
/// RNG streams.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// log(Σ exp(x_i)) computed with the max-shift. Returns -inf for an empty
/// slice or when every entry is -inf.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m; // empty, all -inf, or a +inf/NaN already dominates
    }
    let sum: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + sum.ln()
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the sample mean (unbiased variance, n >= 2).
pub fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Kendall's tau rank correlation, counting all pairs (ties contribute zero
/// to the numerator; denominator is the full pair count).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "kendall_tau: length mismatch");
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut concordant_minus_discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            let s = dx * dy;
            if s > 0.0 {
                concordant_minus_discordant += 1;
            } else if s < 0.0 {
                concordant_minus_discordant -= 1;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    concordant_minus_discordant as f64 / pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct() {
        let xs: [f64; 3] = [-1.0, 0.5, 2.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>();
        assert!((log_sum_exp(&xs) - direct.ln()).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let shifted = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((shifted - (-1000.0 + 2.0f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn kendall_perfect_orders() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(kendall_tau(&x, &y), 1.0);
        let rev: Vec<f64> = y.iter().rev().copied().collect();
        assert_eq!(kendall_tau(&x, &rev), -1.0);
    }

    #[test]
    fn standard_error_basics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        // var = 5/3, se = sqrt(5/12)
        assert!((standard_error(&xs) - (5.0f64 / 12.0).sqrt()).abs() < 1e-14);
    }
}
