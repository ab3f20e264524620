//! From-scratch training of derived networks, top-1 evaluation, ROC sweeps,
//! and the multi-seed reporting harness.

mod checkpoint;
mod metrics;
mod roc;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use metrics::{
    aggregate_runs, mean_std, AggregateReport, MeanStd, RocPoint, RunMetrics,
    METRICS_CSV_HEADER,
};
pub use roc::compute_roc;
pub use trainer::{evaluate_top1, train_model, NetworkScorer, Scorer, TrainedModel};

use crate::tensor::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}; last finite loss {last_loss}")]
    Diverged { epoch: usize, last_loss: f64 },
    #[error("{split} split is empty")]
    EmptySplit { split: &'static str },
    #[error("ROC needs both positives and negatives; split has {positives} keywords and {negatives} silence/unknown clips")]
    OneSidedSplit { positives: usize, negatives: usize },
    #[error("invalid train config: {reason}")]
    InvalidConfig { reason: String },
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, TrainError>;

/// From-scratch training recipe: momentum SGD with weight decay and a step
/// schedule that multiplies the learning rate by `lr_decay` at 60% and 80%
/// of the epoch budget.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: Real,
    pub momentum: Real,
    pub weight_decay: Real,
    /// Fractions of the epoch budget at which the learning rate steps down.
    pub lr_milestones: Vec<f64>,
    pub lr_decay: Real,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_milestones: vec![0.6, 0.8],
            lr_decay: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(TrainError::InvalidConfig {
                reason: reason.to_string(),
            })
        };
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive");
        }
        if self.lr <= 0.0 {
            return fail("lr must be positive");
        }
        if self.lr_decay <= 0.0 || self.lr_decay > 1.0 {
            return fail("lr_decay must lie in (0, 1]");
        }
        if self.lr_milestones.windows(2).any(|w| w[1] < w[0]) {
            return fail("lr_milestones must be non-decreasing");
        }
        Ok(())
    }

    /// The (non-increasing) learning rate in effect at `epoch`.
    pub fn lr_at(&self, epoch: usize) -> Real {
        let passed = self
            .lr_milestones
            .iter()
            .filter(|&&m| epoch >= ((m * self.epochs as f64).floor() as usize))
            .count();
        self.lr * self.lr_decay.powi(passed as i32)
    }
}
