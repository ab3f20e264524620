//! Dense tensors and tape-based reverse-mode automatic differentiation.
//!
//! The operator set is exactly what the supernet and derived networks need:
//! temporal convolution, batch norm, the elementwise activations, pooling,
//! linear layers and cross-entropy, plus two gating helpers
//! ([`Tape::gate_scale`], [`Tape::broadcast_mul`]) used by mixed layers and
//! squeeze-and-excitation.

mod store;
mod tape;

pub mod optim;

pub use store::{ParamId, ParamStore};
pub use tape::{BnMode, Tape, TensorId};

use thiserror::Error;

/// Scalar element type. 64-bit by default so the finite-difference gradient
/// checks are reliable; the `f32` feature narrows it.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

pub const PI: Real = std::f64::consts::PI as Real;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch, lhs {lhs:?} vs rhs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    BadRank {
        op: &'static str,
        expected: &'static str,
        shape: Vec<usize>,
    },
    #[error("tensor shape {shape:?} implies {expected} values, got {got}")]
    BadLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("tensor shape {shape:?} has a zero dimension")]
    ZeroDim { shape: Vec<usize> },
    #[error("conv1d: kernel size {k} must be odd")]
    EvenKernel { k: usize },
    #[error("softmax: axis {axis} out of range for shape {shape:?}")]
    BadAxis { axis: usize, shape: Vec<usize> },
    #[error("cross_entropy: label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("backward: loss must be scalar, got {numel} elements")]
    NonScalarLoss { numel: usize },
    #[error("backward has already run on this tape")]
    BackwardAlreadyRun,
    #[error("gradient of node {node} is non-finite")]
    NonFiniteGrad { node: usize },
    #[error("{op}: gate index {idx} out of range for {len} gates")]
    GateIndexOutOfRange {
        op: &'static str,
        idx: usize,
        len: usize,
    },
    #[error("optimizer: state for {params} params, got {got}")]
    OptimizerShape { params: usize, got: usize },
}

/// A dense n-dimensional value, optionally carrying a gradient of the same
/// shape. Nodes on a [`Tape`] are tensors; persistent parameters held by a
/// [`ParamStore`] are tensors too.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<Real>,
    grad: Option<Vec<Real>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<Real>) -> Result<Self, TensorError> {
        if shape.contains(&0) {
            return Err(TensorError::ZeroDim { shape });
        }
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(TensorError::BadLength {
                shape,
                expected,
                got: values.len(),
            });
        }
        Ok(Tensor {
            shape,
            values,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn filled(shape: &[usize], v: Real) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![v; n],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar(v: Real) -> Self {
        Tensor {
            shape: vec![1],
            values: vec![v],
            grad: None,
            requires_grad: false,
        }
    }

    /// Uniform values in `[lo, hi)`.
    pub fn rand_uniform(shape: &[usize], lo: Real, hi: Real, rng: &mut impl rand::Rng) -> Self {
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|_| lo + (hi - lo) * rng.gen::<f64>() as Real)
            .collect();
        Tensor {
            shape: shape.to_vec(),
            values,
            grad: None,
            requires_grad: false,
        }
    }

    /// Fan-in scaled uniform init: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn fan_in_init(shape: &[usize], fan_in: usize, rng: &mut impl rand::Rng) -> Self {
        let bound = 1.0 / (fan_in as Real).sqrt();
        Self::rand_uniform(shape, -bound, bound, rng)
    }

    pub fn with_requires_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[Real] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Real] {
        &mut self.values
    }

    pub fn grad(&self) -> Option<&[Real]> {
        self.grad.as_deref()
    }

    pub(crate) fn set_grad(&mut self, grad: Option<Vec<Real>>) {
        self.grad = grad;
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }
}

/// FNV-1a over the bit patterns of a value slice. Used for exact
/// "did anything change" fingerprints in tests and invariant checks.
pub fn bits_fingerprint(values: &[Real]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in values {
        for b in (*v as f64).to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_length_mismatch() {
        let err = Tensor::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::BadLength { expected: 6, got: 5, .. }));
    }

    #[test]
    fn new_rejects_zero_dim() {
        let err = Tensor::new(vec![2, 0], vec![]).unwrap_err();
        assert!(matches!(err, TensorError::ZeroDim { .. }));
    }

    #[test]
    fn fingerprint_detects_single_bit_change() {
        let a = vec![1.0, 2.0, 3.0];
        let mut b = a.clone();
        let before = bits_fingerprint(&a);
        b[1] = 2.0 + Real::EPSILON * 2.0;
        assert_ne!(before, bits_fingerprint(&b));
        assert_eq!(before, bits_fingerprint(&a));
    }
}
