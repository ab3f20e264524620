//! Differentiable architecture search for temporal-convolutional keyword
//! spotting networks.
//!
//! The crate is organised as five layers:
//!
//! - [`tensor`]: dense tensors with tape-based reverse-mode autodiff and the
//!   two optimizers (momentum SGD, Adam) the search loop needs.
//! - [`audio`]: WAV ingestion, 40-dim MFCC extraction, speaker-disjoint
//!   dataset splitting, and a deterministic synthetic keyword generator.
//! - [`model`]: TC-ResNet-SE building blocks, network assembly from a
//!   discrete genotype, and parameter / multiply-add counters.
//! - [`search`]: the over-parameterized supernet, the DARTS, FairDARTS and
//!   NoisyDARTS bi-level search loops, and genotype derivation.
//! - [`train`]: from-scratch training of derived networks, top-1 evaluation,
//!   ROC sweeps, and the multi-seed reporting harness.

// `Real as f64` casts are identities in the default build but required when
// the f32 feature narrows the scalar type.
#![allow(clippy::unnecessary_cast)]

pub mod audio;
pub mod error;
pub mod model;
pub mod search;
pub mod tensor;
pub mod testkit;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Real;
