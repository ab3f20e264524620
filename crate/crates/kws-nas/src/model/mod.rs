//! TC-ResNet-SE building blocks, network assembly from a genotype, and the
//! parameter / multiply-add counters.

mod blocks;
mod count;
mod genotype;
mod space;

pub use blocks::{
    build_network, build_tc_resnet14, tc_resnet14_genotype, tc_resnet14_space, CandidateOp,
    Network, TcBlock,
};
pub(crate) use blocks::ConvBn;
pub use count::{count_madds, count_params};
pub use genotype::{CandidateSpec, Genotype};
pub use space::SearchSpaceConfig;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid search space: {reason}")]
    InvalidConfig { reason: String },
    #[error("kernel size {kernel} not in the allowed set {{3, 5, 7, 9}}")]
    BadKernel { kernel: usize },
    #[error("genotype layer {layer}: {reason}")]
    GenotypeMismatch { layer: usize, reason: String },
    #[error("layer {layer}: skip connection where shape changes (stride or channel mismatch)")]
    SkipShapeChange { layer: usize },
    #[error("genotype parse error: {msg}")]
    GenotypeParse { msg: String },
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

type Result<T> = std::result::Result<T, ModelError>;
