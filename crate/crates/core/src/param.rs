//! Central parameter storage.
//!
//! All learnable weights and persistent buffers (batch-norm running stats)
//! of a model live in one `ParamStore`, keyed by a stable dotted path like
//! `decoder.stage4.cag.ag_enc.conv_x.weight`. Modules keep `ParamId`
//! handles. The store is what optimizers update and checkpoints serialize;
//! entry order is creation order and is deterministic for a given config.

use crate::array::{Array, Scalar};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::atomic::{AtomicU64, Ordering};

static STORE_COUNTER: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct ParamEntry<T> {
    pub path: String,
    pub value: Array<T>,
    /// Trainable parameters receive gradients and optimizer updates;
    /// non-trainable entries are buffers (running statistics).
    pub trainable: bool,
}

#[derive(Debug)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
    /// Distinguishes stores inside one graph's parameter memo. Cloned
    /// stores get a fresh identity.
    store_id: u64,
}

impl<T: Clone> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        ParamStore {
            entries: self.entries.clone(),
            store_id: STORE_COUNTER.fetch_add(1, Ordering::Relaxed),
        }
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new(), store_id: STORE_COUNTER.fetch_add(1, Ordering::Relaxed) }
    }

    pub fn store_id(&self) -> u64 {
        self.store_id
    }

    pub fn add(&mut self, path: impl Into<String>, value: Array<T>, trainable: bool) -> ParamId {
        let path = path.into();
        assert!(
            !self.entries.iter().any(|e| e.path == path),
            "duplicate parameter path {path}"
        );
        self.entries.push(ParamEntry { path, value, trainable });
        ParamId(self.entries.len() - 1)
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array<T> {
        &self.entries[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Array<T>) {
        assert_eq!(
            self.entries[id.0].value.shape(),
            value.shape(),
            "set_value shape mismatch for {}",
            self.entries[id.0].path
        );
        self.entries[id.0].value = value;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry<T>)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.iter().filter(|(_, e)| e.trainable).map(|(id, _)| id).collect()
    }

    /// Total element count of trainable parameters.
    pub fn num_trainable_elements(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.numel()).sum()
    }

    pub fn find(&self, path: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.path == path).map(ParamId)
    }
}

/// Joins parameter path segments with dots.
pub fn path(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)], the usual default
/// for conv/linear weights.
pub fn uniform_fan_in<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Array<T> {
    assert!(fan_in > 0);
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data: Vec<T> =
        (0..n).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
    Array::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn paths_are_unique_and_order_stable() {
        let mut store = ParamStore::<f32>::new();
        let a = store.add("block.w", Array::zeros(&[2, 2]), true);
        let b = store.add("block.b", Array::zeros(&[2]), true);
        assert_eq!(store.entry(a).path, "block.w");
        assert_eq!(store.find("block.b"), Some(b));
        assert_eq!(store.num_trainable_elements(), 6);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter path")]
    fn duplicate_paths_rejected() {
        let mut store = ParamStore::<f32>::new();
        store.add("w", Array::zeros(&[1]), true);
        store.add("w", Array::zeros(&[1]), true);
    }

    #[test]
    fn fan_in_init_is_seed_deterministic() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let a: Array<f32> = uniform_fan_in(&mut r1, &[3, 3], 9);
        let b: Array<f32> = uniform_fan_in(&mut r2, &[3, 3], 9);
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().all(|x| x.abs() <= 1.0 / 3.0));
    }
}
