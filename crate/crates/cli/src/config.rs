//! Typed TOML configuration files. Unknown keys are rejected so a
//! misconfigured experiment fails loudly instead of running with defaults.

use serde::Deserialize;

use crma::copula::{CorrelationStructure, FamilyKind};
use crma::error::{Error, Result};
use crma::mle::FitOptions;
use crma::simbench::{standard_kinds, BenchConfig, BenchMethod, TheoremConfig};

fn default_families() -> Vec<String> {
    standard_kinds()
        .iter()
        .map(|k| k.name().to_string())
        .collect()
}

fn default_folds() -> usize {
    5
}

fn default_scheme() -> String {
    "crma".to_string()
}

fn default_restarts() -> usize {
    FitOptions::default().restarts
}

fn default_max_iterations() -> usize {
    FitOptions::default().max_iterations
}

fn default_gradient_tolerance() -> f64 {
    FitOptions::default().gradient_tolerance
}

fn default_correlation() -> String {
    "unstructured".to_string()
}

fn default_noise_variance() -> f64 {
    crma::simbench::DEFAULT_NOISE_VARIANCE
}

fn default_replications() -> usize {
    100
}

fn default_eval_factor() -> usize {
    10
}

fn default_seed() -> u64 {
    0
}

pub fn parse_families(names: &[String]) -> Result<Vec<FamilyKind>> {
    if names.is_empty() {
        return Err(Error::config("family list must not be empty"));
    }
    names.iter().map(|n| FamilyKind::parse(n)).collect()
}

pub fn parse_correlation(name: &str) -> Result<CorrelationStructure> {
    match name {
        "unstructured" => Ok(CorrelationStructure::Unstructured),
        "exchangeable" => Ok(CorrelationStructure::Exchangeable),
        other => Err(Error::config(format!(
            "unknown correlation structure `{other}` (use `unstructured` or `exchangeable`)"
        ))),
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

/// Model-fitting run configuration.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_families")]
    pub families: Vec<String>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_gradient_tolerance")]
    pub gradient_tolerance: f64,
    #[serde(default = "default_correlation")]
    pub correlation: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults are complete")
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let cfg: RunConfig = read_toml(path)?;
        if cfg.folds < 2 {
            return Err(Error::config("folds must be at least 2"));
        }
        Ok(cfg)
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            restarts: self.restarts,
            seed: self.seed,
        }
    }
}

/// Benchmark grid configuration.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfigFile {
    pub dgps: Vec<u8>,
    pub dims: Vec<usize>,
    /// (n, N) pairs.
    pub sizes: Vec<[usize; 2]>,
    pub methods: Vec<String>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_families")]
    pub families: Vec<String>,
    #[serde(default = "default_correlation")]
    pub correlation: String,
    #[serde(default = "default_noise_variance")]
    pub noise_variance: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_gradient_tolerance")]
    pub gradient_tolerance: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub threads: usize,
}

impl BenchConfigFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        read_toml(path)
    }

    pub fn to_bench_config(&self) -> Result<BenchConfig> {
        Ok(BenchConfig {
            dgps: self.dgps.clone(),
            dims: self.dims.clone(),
            sizes: self.sizes.iter().map(|s| (s[0], s[1])).collect(),
            methods: self
                .methods
                .iter()
                .map(|m| BenchMethod::parse(m))
                .collect::<Result<_>>()?,
            replications: self.replications,
            families: parse_families(&self.families)?,
            corr_structure: parse_correlation(&self.correlation)?,
            noise_variance: self.noise_variance,
            fit: FitOptions {
                max_iterations: self.max_iterations,
                gradient_tolerance: self.gradient_tolerance,
                restarts: self.restarts,
                seed: self.seed,
            },
            seed: self.seed,
        })
    }
}

/// Theorem-verification configuration.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfigFile {
    pub dgp: u8,
    pub p: usize,
    /// Main trend grid over n with N = unlabeled_factor * n.
    pub n_grid: Vec<usize>,
    #[serde(default = "default_unlabeled_factor")]
    pub unlabeled_factor: usize,
    /// Rate-comparison sweep: fixed n, N = factor * n versus N = 0.
    #[serde(default)]
    pub rate_n: Option<usize>,
    #[serde(default)]
    pub rate_factors: Vec<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_eval_factor")]
    pub eval_factor: usize,
    #[serde(default = "default_families")]
    pub families: Vec<String>,
    #[serde(default = "default_correct_set")]
    pub correct_set: Vec<String>,
    #[serde(default = "default_correlation")]
    pub correlation: String,
    #[serde(default = "default_noise_variance")]
    pub noise_variance: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_gradient_tolerance")]
    pub gradient_tolerance: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub threads: usize,
}

fn default_unlabeled_factor() -> usize {
    20
}

fn default_correct_set() -> Vec<String> {
    vec!["gaussian".to_string(), "mixture".to_string()]
}

impl VerifyConfigFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        read_toml(path)
    }

    pub fn to_theorem_config(&self, grid: Vec<(usize, usize)>) -> Result<TheoremConfig> {
        Ok(TheoremConfig {
            dgp: self.dgp,
            p: self.p,
            grid,
            k: self.folds,
            replications: self.replications,
            eval_factor: self.eval_factor,
            families: parse_families(&self.families)?,
            corr_structure: parse_correlation(&self.correlation)?,
            correct_set: parse_families(&self.correct_set)?,
            noise_variance: self.noise_variance,
            fit: FitOptions {
                max_iterations: self.max_iterations,
                gradient_tolerance: self.gradient_tolerance,
                restarts: self.restarts,
                seed: self.seed,
            },
            seed: self.seed,
        })
    }

    pub fn main_grid(&self) -> Vec<(usize, usize)> {
        self.n_grid
            .iter()
            .map(|&n| (n, self.unlabeled_factor * n))
            .collect()
    }
}
