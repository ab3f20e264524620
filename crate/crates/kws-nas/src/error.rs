//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Search(#[from] crate::search::SearchError),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the failure is numeric (divergence, non-finite gradients)
    /// rather than a usage or data problem.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Train(crate::train::TrainError::Diverged { .. })
                | Error::Tensor(crate::tensor::TensorError::NonFiniteGrad { .. })
        )
    }
}
