//! Versioned, human-readable model artifact.
//!
//! The averaged predictor needs the labeled responses and the sorted margin
//! samples at prediction time, so the artifact embeds them alongside the
//! family tags, natural-domain parameters, and weights. JSON numbers are
//! written in shortest round-trip form, so a saved and reloaded model
//! reproduces predictions bit-identically.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::averaging::{AveragedModel, WeightScheme, WeightVector};
use crate::copula::{CopulaFamily, CopulaParams};
use crate::error::{Error, Result};
use crate::margins::MarginSet;
use crate::mle::FittedCandidate;
use crate::regression::CandidateRegressor;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateArtifact {
    pub family: CopulaFamily,
    pub params: CopulaParams,
    pub loglik: f64,
    pub q_m: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginArtifact {
    pub num_labeled: usize,
    pub num_pooled: usize,
    pub response_sorted: Vec<f64>,
    pub covariate_sorted: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub scheme: WeightScheme,
    pub num_folds: usize,
    pub weights: Vec<f64>,
    pub candidates: Vec<CandidateArtifact>,
    pub margins: MarginArtifact,
    pub labeled_y: Vec<f64>,
}

impl ModelArtifact {
    pub fn from_model(model: &AveragedModel) -> Self {
        let margins = model.candidates()[0].margins();
        let labeled_y = model.candidates()[0].labeled_y().as_ref().clone();
        let margin_art = MarginArtifact {
            num_labeled: margins.num_labeled(),
            num_pooled: margins.num_pooled(),
            response_sorted: margins.response_sorted().to_vec(),
            covariate_sorted: (0..margins.num_covariates())
                .map(|j| margins.covariate_sorted(j).to_vec())
                .collect(),
        };
        let candidates = model
            .candidates()
            .iter()
            .map(|reg| {
                let fit = reg.fitted();
                CandidateArtifact {
                    family: fit.family,
                    params: fit.theta_hat.clone(),
                    loglik: fit.loglik,
                    q_m: fit.q_m,
                    converged: fit.converged,
                }
            })
            .collect();
        ModelArtifact {
            schema_version: SCHEMA_VERSION,
            scheme: model.scheme(),
            num_folds: model.num_folds(),
            weights: model.weights().as_slice().to_vec(),
            candidates,
            margins: margin_art,
            labeled_y,
        }
    }

    pub fn to_model(&self) -> Result<AveragedModel> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Artifact {
                context: format!(
                    "schema version {} is not supported (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            });
        }
        if self.candidates.is_empty() || self.candidates.len() != self.weights.len() {
            return Err(Error::Artifact {
                context: "candidate and weight counts differ".to_string(),
            });
        }
        let margins = Arc::new(MarginSet::from_parts(
            self.margins.response_sorted.clone(),
            self.margins.covariate_sorted.clone(),
            self.margins.num_labeled,
            self.margins.num_pooled,
        )?);
        let labeled_y = Arc::new(self.labeled_y.clone());
        if labeled_y.len() != margins.num_labeled() {
            return Err(Error::Artifact {
                context: "labeled responses do not match the margin sample size".to_string(),
            });
        }
        let regressors = self
            .candidates
            .iter()
            .map(|c| {
                let fitted = FittedCandidate {
                    family: c.family,
                    theta_hat: c.params.clone(),
                    loglik: c.loglik,
                    q_m: c.q_m,
                    converged: c.converged,
                };
                CandidateRegressor::new(fitted, margins.clone(), labeled_y.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let weights = WeightVector::new(self.weights.clone())?;
        AveragedModel::from_parts(regressors, weights, self.scheme, self.num_folds)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Artifact {
            context: format!("serialization failed: {e}"),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Artifact {
            context: format!("parse failed: {e}"),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
