//! Persistent parameter storage.
//!
//! Models own a `ParamStore`; each forward pass binds the parameters it uses
//! onto the tape as leaves, and after `backward` the gradients are pulled
//! back into the store for the optimizer.

use super::{bits_fingerprint, Real, Tape, Tensor, TensorId};

/// Handle to an entry in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

struct Entry {
    name: String,
    tensor: Tensor,
    trainable: bool,
}

#[derive(Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    bindings: Vec<Option<TensorId>>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Register a trainable parameter. Entry order is the optimizer's state
    /// order, so registration order must be deterministic.
    pub fn add_trainable(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.push(name.into(), tensor.with_requires_grad(), true)
    }

    /// Register a non-trainable buffer (running statistics).
    pub fn add_buffer(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.push(name.into(), tensor, false)
    }

    fn push(&mut self, name: String, tensor: Tensor, trainable: bool) -> ParamId {
        debug_assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate param name {name}"
        );
        self.entries.push(Entry {
            name,
            tensor,
            trainable,
        });
        self.bindings.push(None);
        ParamId(self.entries.len() - 1)
    }

    /// Forget bindings from the previous pass.
    pub fn begin_pass(&mut self) {
        for b in &mut self.bindings {
            *b = None;
        }
    }

    /// Put the entry on the tape as a leaf (once per pass).
    pub fn bind(&mut self, tape: &mut Tape, id: ParamId) -> TensorId {
        if let Some(t) = self.bindings[id.0] {
            return t;
        }
        let t = tape.leaf(&self.entries[id.0].tensor);
        self.bindings[id.0] = Some(t);
        t
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    /// Mutable view of a buffer's raw values (BN running stats).
    pub fn buffer_mut(&mut self, id: ParamId) -> &mut [Real] {
        debug_assert!(!self.entries[id.0].trainable);
        self.entries[id.0].tensor.values_mut()
    }

    /// Copy this pass's gradients from the tape into the store. Trainable
    /// entries that were never bound get a zero gradient.
    pub fn pull_grads(&mut self, tape: &Tape) {
        for (entry, binding) in self.entries.iter_mut().zip(&self.bindings) {
            if !entry.trainable {
                continue;
            }
            let grad = match binding {
                Some(tid) => tape
                    .grad(*tid)
                    .map(<[Real]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; entry.tensor.numel()]),
                None => vec![0.0; entry.tensor.numel()],
            };
            entry.tensor.set_grad(Some(grad));
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(name, tensor, trainable)` over all entries, registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor, bool)> {
        self.entries
            .iter()
            .map(|e| (e.name.as_str(), &e.tensor, e.trainable))
    }

    pub(crate) fn trainable_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries
            .iter_mut()
            .filter(|e| e.trainable)
            .map(|e| &mut e.tensor)
    }

    /// Total element count over trainable entries.
    pub fn num_trainable_values(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.numel())
            .sum()
    }

    /// Exact fingerprint of all trainable values; any single-bit change to
    /// any weight changes it.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for e in self.entries.iter().filter(|e| e.trainable) {
            h ^= bits_fingerprint(e.tensor.values());
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    /// Overwrite an entry's values by name (checkpoint restore).
    pub fn load_values(&mut self, name: &str, values: &[Real]) -> bool {
        for e in &mut self.entries {
            if e.name == name {
                if e.tensor.numel() != values.len() {
                    return false;
                }
                e.tensor.values_mut().copy_from_slice(values);
                return true;
            }
        }
        false
    }
}
