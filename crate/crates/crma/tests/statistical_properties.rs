//! Monte-Carlo distributional checks: the sampling distribution of the
//! pseudo-MLE is approximately normal in the semi-supervised setting, and
//! the averaging method dominates its supervised counterpart on a strongly
//! nonlinear design.

use crma::copula::{sample, CopulaFamily, CopulaParams, FamilyKind};
use crma::mle::{fit_candidate, FitOptions};
use crma::simbench::{run_benchmark, BenchConfig, BenchMethod};
use crma::{fit_margins, pseudo_observations, Dataset};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Sampling-distribution sanity check for the pseudo-MLE: over 200
/// replications of Gaussian-copula data (rho = 0.5, n = 500, N = 4n), the
/// standardized rho estimates are close to normal.
#[test]
fn pseudo_mle_is_approximately_normal() {
    let n = 500usize;
    let big_n = 4 * n;
    let rho = 0.5;
    let fam = CopulaFamily::new(FamilyKind::Gaussian, 2).unwrap();
    let params = CopulaParams::Gaussian {
        corr: DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]),
    };
    let opts = FitOptions {
        restarts: 1,
        ..FitOptions::default()
    };

    let estimates: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|rep| {
            // Draw n labeled pairs plus N unlabeled covariate rows; the
            // uniform coordinates serve directly as raw data since only
            // ranks matter.
            let m = sample(&fam, &params, n + big_n, 77_000 + rep).unwrap();
            let y = DVector::from_iterator(n, m.column(0).iter().take(n).copied());
            let x = DMatrix::from_iterator(n, 1, m.column(1).iter().take(n).copied());
            let ux = DMatrix::from_iterator(big_n, 1, m.column(1).iter().skip(n).copied());
            let data = Dataset::new(y, x, ux).unwrap();
            let margins = fit_margins(&data).unwrap();
            let pseudo = pseudo_observations(&margins, &data).unwrap();
            let fit = fit_candidate(&fam, &pseudo, &opts).unwrap();
            match fit.theta_hat {
                CopulaParams::Gaussian { corr } => corr[(0, 1)],
                _ => unreachable!(),
            }
        })
        .collect();

    let count = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / count;
    let m2 = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / count;
    let m3 = estimates.iter().map(|e| (e - mean).powi(3)).sum::<f64>() / count;
    let m4 = estimates.iter().map(|e| (e - mean).powi(4)).sum::<f64>() / count;
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;

    assert!(
        (mean - rho).abs() < 0.02,
        "estimates centered at {mean}, expected near {rho}"
    );
    assert!(skewness.abs() < 0.3, "skewness {skewness}");
    assert!(
        excess_kurtosis.abs() < 0.6,
        "excess kurtosis {excess_kurtosis}"
    );
}

/// Desk-scale dominance of the semi-supervised method over the supervised
/// one on DGP4 with N = 4n: lower mean MSPE and at least 90% paired wins.
#[test]
fn crma_dominates_supervised_on_dgp4() {
    let config = BenchConfig {
        dgps: vec![4],
        dims: vec![4],
        sizes: vec![(200, 800)],
        methods: vec![BenchMethod::Crma { k: 5 }, BenchMethod::LabelOnly { k: 5 }],
        replications: 40,
        fit: FitOptions {
            restarts: 2,
            max_iterations: 1200,
            ..FitOptions::default()
        },
        seed: 424242,
        ..BenchConfig::default()
    };
    let results = run_benchmark(&config).unwrap();
    let crma = results.iter().find(|r| r.method == "5-crma").unwrap();
    let label = results.iter().find(|r| r.method == "5-label").unwrap();
    assert!(crma.failures.is_empty() && label.failures.is_empty());
    assert!(
        crma.mean_mspe < label.mean_mspe,
        "5-crma {} vs 5-label {}",
        crma.mean_mspe,
        label.mean_mspe
    );
    let wins = crma
        .outcomes
        .iter()
        .zip(&label.outcomes)
        .filter(|(a, b)| a.mspe <= b.mspe)
        .count();
    let rate = wins as f64 / crma.outcomes.len() as f64;
    assert!(rate >= 0.9, "paired win rate {rate}");
}
