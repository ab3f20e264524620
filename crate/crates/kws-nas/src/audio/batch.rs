//! Minibatch assembly from featurized examples.

use super::Example;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// A featurized minibatch: `[N, C, T]` values plus labels.
pub struct Batch {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

/// Assemble batches of equal-length feature maps from shuffled indices.
pub fn make_batches(examples: &[Example], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Batch> {
    assert!(!examples.is_empty() && batch_size >= 1);
    let (c, t) = (
        examples[0].features.shape()[0],
        examples[0].features.shape()[1],
    );
    let mut idx: Vec<usize> = (0..examples.len()).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size)
        .map(|chunk| {
            let mut values = Vec::with_capacity(chunk.len() * c * t);
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                debug_assert_eq!(examples[i].features.shape(), &[c, t]);
                values.extend_from_slice(examples[i].features.values());
                labels.push(examples[i].label);
            }
            Batch {
                features: Tensor::new(vec![chunk.len(), c, t], values).expect("batch shape"),
                labels,
            }
        })
        .collect()
}

/// Batches in example order, without shuffling (evaluation).
pub fn make_batches_ordered(examples: &[Example], batch_size: usize) -> Vec<Batch> {
    assert!(!examples.is_empty() && batch_size >= 1);
    let (c, t) = (
        examples[0].features.shape()[0],
        examples[0].features.shape()[1],
    );
    examples
        .chunks(batch_size)
        .map(|chunk| {
            let mut values = Vec::with_capacity(chunk.len() * c * t);
            let mut labels = Vec::with_capacity(chunk.len());
            for ex in chunk {
                values.extend_from_slice(ex.features.values());
                labels.push(ex.label);
            }
            Batch {
                features: Tensor::new(vec![chunk.len(), c, t], values).expect("batch shape"),
                labels,
            }
        })
        .collect()
}
