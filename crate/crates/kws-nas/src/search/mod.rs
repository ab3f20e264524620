//! Differentiable architecture search: the over-parameterized supernet, the
//! DARTS / FairDARTS / NoisyDARTS bi-level loops, and genotype derivation.

mod alpha;
mod derive;
mod run;
mod supernet;

pub use alpha::{trajectory_from_csv, trajectory_to_csv, AlphaTable};
pub use derive::{
    derive_genotype, derive_genotype_with_report, random_genotypes, random_sample_genotype,
    search_space_cardinality, Derived,
};
pub use run::{run_search, search_step, EpochLog, SearchOutcome, SearchState, StepReport};
pub use supernet::{build_supernet, fairdarts_aux_loss, noisy_skip_forward, Supernet};

use crate::tensor::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("layer {layer}: candidate {candidate} is incompatible: {reason}")]
    IncompatibleCandidate {
        layer: usize,
        candidate: String,
        reason: String,
    },
    #[error("noise std must be non-negative, got {beta}")]
    NegativeNoiseStd { beta: f64 },
    #[error("search needs a non-empty {split} split")]
    EmptySplit { split: &'static str },
    #[error("alpha csv: {msg}")]
    AlphaCsv { msg: String },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

type Result<T> = std::result::Result<T, SearchError>;

/// Which relaxation gates the candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMethod {
    Darts,
    FairDarts,
    NoisyDarts,
}

impl SearchMethod {
    pub const ALL: [SearchMethod; 3] =
        [SearchMethod::Darts, SearchMethod::FairDarts, SearchMethod::NoisyDarts];

    pub fn name(&self) -> &'static str {
        match self {
            SearchMethod::Darts => "darts",
            SearchMethod::FairDarts => "fairdarts",
            SearchMethod::NoisyDarts => "noisydarts",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "darts" => Some(SearchMethod::Darts),
            "fairdarts" => Some(SearchMethod::FairDarts),
            "noisydarts" => Some(SearchMethod::NoisyDarts),
            _ => None,
        }
    }

    /// Softmax mixing for DARTS-style methods, independent sigmoid gates for
    /// FairDARTS.
    pub fn uses_sigmoid_gates(&self) -> bool {
        matches!(self, SearchMethod::FairDarts)
    }
}

/// Hyperparameters of one search run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub method: SearchMethod,
    pub epochs: usize,
    pub batch_size: usize,
    /// Momentum-SGD learning rate for network weights.
    pub w_lr: Real,
    pub w_momentum: Real,
    /// Adam learning rate for architectural weights.
    pub alpha_lr: Real,
    /// Gaussian noise std on skip outputs (NoisyDARTS only).
    pub noise_std: Real,
    /// Gaussian noise mean; zero keeps the perturbation unbiased.
    pub noise_mean: Real,
    /// Weight of the zero-one loss (FairDARTS only).
    pub w01_weight: Real,
    /// Sigmoid threshold for FairDARTS derivation.
    pub threshold: Real,
    /// Run the architecture half-step before the weight half-step.
    pub arch_step_first: bool,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            method: SearchMethod::Darts,
            epochs: 50,
            batch_size: 128,
            w_lr: 0.1,
            w_momentum: 0.9,
            alpha_lr: 3e-4,
            noise_std: 0.1,
            noise_mean: 0.0,
            w01_weight: 0.2,
            threshold: 0.8,
            arch_step_first: true,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_std < 0.0 {
            return Err(SearchError::NegativeNoiseStd {
                beta: self.noise_std as f64,
            });
        }
        Ok(())
    }
}
