//! Command-line interface: data simulation, model fitting and prediction,
//! benchmark grids, and theorem-trend verification.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod config;
mod csvio;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{parse_correlation, parse_families, BenchConfigFile, RunConfig, VerifyConfigFile};
use crma::artifact::ModelArtifact;
use crma::averaging::{fit_model_average, WeightScheme};
use crma::copula::{CopulaFamily, CopulaParams};
use crma::error::{Error, Result};
use crma::mle::bic;
use crma::simbench::{
    compute_r1, compute_r2, generate, run_benchmark, verify_optimality, verify_weight_consistency,
    write_bench_csv, write_bench_summary_json, write_optimality_csv, write_rate_csv,
    write_weights_csv, DGPSpec, OptimalityTrace,
};
use crma::Dataset;

#[derive(Parser)]
#[command(
    name = "crma",
    about = "Semi-supervised copula regression with cross-validated model averaging",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a simulated dataset and write labeled/unlabeled CSV files.
    Simulate {
        /// Data-generating process id (1-5).
        #[arg(long)]
        dgp: u8,
        /// Covariate dimension.
        #[arg(long)]
        p: usize,
        /// Labeled sample size.
        #[arg(long)]
        n: usize,
        /// Unlabeled sample size.
        #[arg(long, default_value_t = 0)]
        unlabeled: usize,
        /// Noise variance of the response.
        #[arg(long, default_value_t = crma::simbench::DEFAULT_NOISE_VARIANCE)]
        noise_variance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (labeled.csv and unlabeled.csv are written here).
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the averaged model on CSV data and serialize it.
    Fit {
        /// Labeled CSV with header x1,...,xp,y.
        #[arg(long)]
        labeled: PathBuf,
        /// Optional unlabeled CSV with header x1,...,xp.
        #[arg(long)]
        unlabeled: Option<PathBuf>,
        /// Run configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker thread override (0 = all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Output path for the model artifact (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict a query CSV with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Query CSV with header x1,...,xp.
        #[arg(long)]
        query: PathBuf,
        /// Output CSV (query columns plus y_hat).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an MSPE benchmark grid.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory for per-cell CSVs and the summary JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the asymptotic-optimality or weight-consistency trend checks.
    Verify {
        #[arg(long, value_enum)]
        mode: VerifyMode,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory for the trace CSVs.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyMode {
    Optimality,
    Weights,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig { .. } => 1,
        Error::Data { .. }
        | Error::Io(_)
        | Error::EmptyLabeledSet
        | Error::NonFinite { .. }
        | Error::DimensionMismatch { .. }
        | Error::Artifact { .. } => 2,
        Error::ParamOutOfDomain { .. }
        | Error::BoundaryPoint { .. }
        | Error::NonConvergence { .. }
        | Error::FoldFitFailure { .. }
        | Error::Numerical { .. } => 3,
    }
}

fn configure_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            dgp,
            p,
            n,
            unlabeled,
            noise_variance,
            seed,
            out,
        } => cmd_simulate(dgp, p, n, unlabeled, noise_variance, seed, &out),
        Command::Fit {
            labeled,
            unlabeled,
            config,
            seed,
            threads,
            out,
        } => cmd_fit(
            &labeled,
            unlabeled.as_deref(),
            config.as_deref(),
            seed,
            threads,
            &out,
        ),
        Command::Predict { model, query, out } => cmd_predict(&model, &query, &out),
        Command::Bench {
            config,
            seed,
            threads,
            out,
        } => cmd_bench(&config, seed, threads, &out),
        Command::Verify {
            mode,
            config,
            seed,
            threads,
            out,
        } => cmd_verify(mode, &config, seed, threads, &out),
    }
}

fn cmd_simulate(
    dgp: u8,
    p: usize,
    n: usize,
    unlabeled: usize,
    noise_variance: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let mut spec = DGPSpec::new(dgp, p, n, unlabeled, seed)?;
    spec.noise_variance = noise_variance;
    spec.validate()?;
    let gen = generate(&spec)?;
    std::fs::create_dir_all(out)?;
    let labeled_path = out.join("labeled.csv");
    let unlabeled_path = out.join("unlabeled.csv");
    csvio::write_labeled(&labeled_path, gen.data.labeled_x(), gen.data.labeled_y())?;
    csvio::write_covariates(&unlabeled_path, gen.data.unlabeled_x())?;
    println!(
        "wrote {} ({} rows) and {} ({} rows)",
        labeled_path.display(),
        n,
        unlabeled_path.display(),
        unlabeled
    );
    Ok(())
}

fn describe_params(params: &CopulaParams) -> String {
    match params {
        CopulaParams::Gaussian { corr } => {
            let d = corr.nrows();
            let upper: Vec<String> = (0..d)
                .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
                .map(|(i, j)| format!("{:.4}", corr[(i, j)]))
                .collect();
            format!("corr=[{}]", upper.join(", "))
        }
        CopulaParams::StudentT { corr, nu } => {
            let d = corr.nrows();
            let upper: Vec<String> = (0..d)
                .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
                .map(|(i, j)| format!("{:.4}", corr[(i, j)]))
                .collect();
            format!("corr=[{}], nu={nu:.3}", upper.join(", "))
        }
        CopulaParams::Archimedean { theta } => format!("theta={theta:.5}"),
        CopulaParams::Mixture { components, mix } => {
            let pi: Vec<String> = mix.iter().map(|w| format!("{w:.4}")).collect();
            let inner: Vec<String> = components.iter().map(describe_params).collect();
            format!("pi=[{}]; {}", pi.join(", "), inner.join(" | "))
        }
    }
}

fn cmd_fit(
    labeled: &Path,
    unlabeled: Option<&Path>,
    config: Option<&Path>,
    seed: Option<u64>,
    threads: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = threads {
        cfg.threads = t;
    }
    configure_threads(cfg.threads)?;

    let labeled_csv = csvio::read_labeled(labeled)?;
    let p = labeled_csv.x.ncols();
    let unlabeled_x = match unlabeled {
        Some(path) => csvio::read_covariates(path, p)?,
        None => nalgebra::DMatrix::zeros(0, p),
    };
    let data = Dataset::new(labeled_csv.y, labeled_csv.x, unlabeled_x)?;

    let kinds = parse_families(&cfg.families)?;
    let corr = parse_correlation(&cfg.correlation)?;
    let families: Vec<CopulaFamily> = kinds
        .iter()
        .map(|&k| CopulaFamily::with_structure(k, p + 1, corr))
        .collect::<Result<_>>()?;
    let scheme = WeightScheme::parse(&cfg.scheme)?;
    let opts = cfg.fit_options();

    let model = fit_model_average(&data, &families, cfg.folds, &opts, scheme)?;

    println!(
        "fitted {} candidates on n={} labeled, N={} unlabeled rows (K={}, scheme={})",
        families.len(),
        data.num_labeled(),
        data.num_unlabeled(),
        cfg.folds,
        scheme.name()
    );
    println!(
        "{:<10} {:>3} {:>12} {:>12} {:>5}  params",
        "candidate", "q", "loglik", "bic", "conv"
    );
    for reg in model.candidates() {
        let fit = reg.fitted();
        println!(
            "{:<10} {:>3} {:>12.4} {:>12.4} {:>5}  {}",
            fit.family.name(),
            fit.q_m,
            fit.loglik,
            bic(fit, data.num_labeled()),
            if fit.converged { "yes" } else { "no" },
            describe_params(&fit.theta_hat)
        );
    }
    let weights: Vec<String> = model
        .candidates()
        .iter()
        .zip(model.weights().as_slice())
        .map(|(reg, w)| format!("{}={:.4}", reg.fitted().family.name(), w))
        .collect();
    println!("weights: {}", weights.join(", "));

    let artifact = ModelArtifact::from_model(&model);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    artifact.save(out)?;
    println!("model written to {}", out.display());
    Ok(())
}

fn cmd_predict(model_path: &Path, query: &Path, out: &Path) -> Result<()> {
    let artifact = ModelArtifact::load(model_path)?;
    let model = artifact.to_model()?;
    let queries = csvio::read_covariates(query, model.num_covariates())?;
    let preds = model.predict_batch(&queries)?;
    csvio::write_predictions(out, &queries, &preds)?;
    println!("wrote {} predictions to {}", preds.len(), out.display());
    Ok(())
}

fn cmd_bench(config: &Path, seed: Option<u64>, threads: Option<usize>, out: &Path) -> Result<()> {
    let mut file = BenchConfigFile::load(config)?;
    if let Some(s) = seed {
        file.seed = s;
    }
    if let Some(t) = threads {
        file.threads = t;
    }
    configure_threads(file.threads)?;
    let base = file.to_bench_config()?;
    std::fs::create_dir_all(out)?;

    let mut all_results = Vec::new();
    let mut failed_cells = 0usize;
    for &dgp in &base.dgps {
        for &p in &base.dims {
            for &(n, unlabeled) in &base.sizes {
                let mut cell_cfg = base.clone();
                cell_cfg.dgps = vec![dgp];
                cell_cfg.dims = vec![p];
                cell_cfg.sizes = vec![(n, unlabeled)];
                match run_benchmark(&cell_cfg) {
                    Ok(results) => {
                        let path = out.join(format!("bench_dgp{dgp}_p{p}_n{n}_N{unlabeled}.csv"));
                        write_bench_csv(&path, &results)?;
                        for r in &results {
                            if r.is_partial() {
                                eprintln!(
                                    "cell dgp{dgp} p{p} ({n},{unlabeled}) {}: {} failed replications",
                                    r.method,
                                    r.failures.len()
                                );
                            }
                            println!(
                                "dgp{dgp} p{p} (n={n}, N={unlabeled}) {:>8}: mean MSPE {:.4} (se {:.4}, reps {})",
                                r.method,
                                r.mean_mspe,
                                r.se_mspe,
                                r.outcomes.len()
                            );
                        }
                        all_results.extend(results);
                    }
                    Err(e) => {
                        failed_cells += 1;
                        eprintln!("cell dgp{dgp} p{p} ({n},{unlabeled}) failed: {e}");
                    }
                }
            }
        }
    }
    write_bench_summary_json(&out.join("summary.json"), &all_results)?;
    println!("summary written to {}", out.join("summary.json").display());
    if failed_cells > 0 && all_results.is_empty() {
        return Err(Error::numerical(format!("{failed_cells} cells failed")));
    }
    Ok(())
}

fn repeat_baseline(point_trace: &OptimalityTrace, len: usize) -> OptimalityTrace {
    OptimalityTrace {
        points: (0..len).map(|_| point_trace.points[0].clone()).collect(),
    }
}

fn cmd_verify(
    mode: VerifyMode,
    config: &Path,
    seed: Option<u64>,
    threads: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut file = VerifyConfigFile::load(config)?;
    if let Some(s) = seed {
        file.seed = s;
    }
    if let Some(t) = threads {
        file.threads = t;
    }
    configure_threads(file.threads)?;
    std::fs::create_dir_all(out)?;

    let main_cfg = file.to_theorem_config(file.main_grid())?;
    match mode {
        VerifyMode::Optimality => {
            let trace = verify_optimality(&main_cfg)?;
            let path = out.join("optimality.csv");
            write_optimality_csv(&path, &trace)?;
            for p in &trace.points {
                println!(
                    "n={:>5} N={:>6}: mean ratio {:.5} (se {:.5})",
                    p.n, p.unlabeled, p.mean, p.se
                );
            }
            println!("trace written to {}", path.display());

            if let Some(rate_n) = file.rate_n {
                if !file.rate_factors.is_empty() {
                    let grid: Vec<(usize, usize)> = file
                        .rate_factors
                        .iter()
                        .map(|&f| (rate_n, f * rate_n))
                        .collect();
                    let with_n = verify_optimality(&file.to_theorem_config(grid)?)?;
                    let baseline = verify_optimality(&file.to_theorem_config(vec![(rate_n, 0)])?)?;
                    let r1 = compute_r1(&with_n, &repeat_baseline(&baseline, with_n.points.len()))?;
                    let points: Vec<(usize, f64)> = with_n
                        .points
                        .iter()
                        .zip(&r1)
                        .map(|(p, &v)| (p.unlabeled, v))
                        .collect();
                    let path = out.join("r1.csv");
                    write_rate_csv(&path, "r1", &points)?;
                    for (unlabeled, v) in &points {
                        println!("n={rate_n} N={unlabeled}: R1 = {v:.4}");
                    }
                    println!("rate trace written to {}", path.display());
                }
            }
        }
        VerifyMode::Weights => {
            let trace = verify_weight_consistency(&main_cfg)?;
            let path = out.join("weights.csv");
            write_weights_csv(&path, &trace)?;
            for p in &trace.points {
                println!(
                    "n={:>5} N={:>6}: mean (1 - w_sum)^2 = {:.5} (se {:.5})",
                    p.n, p.unlabeled, p.mean, p.se
                );
            }
            println!("trace written to {}", path.display());

            if let Some(rate_n) = file.rate_n {
                if !file.rate_factors.is_empty() {
                    let grid: Vec<(usize, usize)> = file
                        .rate_factors
                        .iter()
                        .map(|&f| (rate_n, f * rate_n))
                        .collect();
                    let with_n = verify_weight_consistency(&file.to_theorem_config(grid)?)?;
                    let baseline =
                        verify_weight_consistency(&file.to_theorem_config(vec![(rate_n, 0)])?)?;
                    let r2 = compute_r2(&with_n, &repeat_baseline(&baseline, with_n.points.len()))?;
                    let points: Vec<(usize, f64)> = with_n
                        .points
                        .iter()
                        .zip(&r2)
                        .map(|(p, &v)| (p.unlabeled, v))
                        .collect();
                    let path = out.join("r2.csv");
                    write_rate_csv(&path, "r2", &points)?;
                    for (unlabeled, v) in &points {
                        println!("n={rate_n} N={unlabeled}: R2 = {v:.4}");
                    }
                    println!("rate trace written to {}", path.display());
                }
            }
        }
    }
    Ok(())
}
