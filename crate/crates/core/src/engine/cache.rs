use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::Executor;
use crate::nn::FeatureExtractor;
use crate::{Matrix, Result};

#[derive(Debug, Clone)]
struct Entry {
    fingerprint: u64,
    features: Matrix,
}

/// Encoder outputs per key (usually a client id), valid for one encoder
/// fingerprint. A lookup with a different fingerprint recomputes and
/// replaces the entry.
#[derive(Debug, Clone, Default)]
pub struct FeatureCache {
    entries: BTreeMap<usize, Entry>,
    hits: usize,
    misses: usize,
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn misses(&self) -> usize {
        self.misses
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The stored features for `key`, if any, without touching the counters.
    pub fn peek(&self, key: usize) -> Option<&Matrix> {
        self.entries.get(&key).map(|e| &e.features)
    }

    fn is_fresh(&self, key: usize, fingerprint: u64) -> bool {
        self.entries
            .get(&key)
            .is_some_and(|e| e.fingerprint == fingerprint)
    }

    /// Features of `inputs` under `encoder`, computed on the first request.
    pub fn get_or_compute<F: FeatureExtractor + ?Sized>(
        &mut self,
        encoder: &F,
        key: usize,
        inputs: &Matrix,
    ) -> Result<&Matrix> {
        let fp = encoder.fingerprint();
        if self.is_fresh(key, fp) {
            self.hits += 1;
        } else {
            self.misses += 1;
            let features = encoder.features(inputs)?;
            self.entries.insert(
                key,
                Entry {
                    fingerprint: fp,
                    features,
                },
            );
        }
        Ok(&self.entries[&key].features)
    }

    /// Fills every stale or missing key, computing them through `exec`.
    pub fn warm<F, E>(&mut self, encoder: &F, items: &[(usize, &Matrix)], exec: &E) -> Result<()>
    where
        F: FeatureExtractor + Sync + ?Sized,
        E: Executor,
    {
        let fp = encoder.fingerprint();
        let todo: Vec<(usize, &Matrix)> = items
            .iter()
            .copied()
            .filter(|(k, _)| !self.is_fresh(*k, fp))
            .collect();
        let computed = exec.map(todo.len(), |i| encoder.features(todo[i].1));
        for ((key, _), features) in todo.into_iter().zip(computed) {
            self.misses += 1;
            self.entries.insert(
                key,
                Entry {
                    fingerprint: fp,
                    features: features?,
                },
            );
        }
        Ok(())
    }
}

/// Free-function form of [`FeatureCache::get_or_compute`].
pub fn features_cached<'c, F: FeatureExtractor + ?Sized>(
    encoder: &F,
    key: usize,
    inputs: &Matrix,
    cache: &'c mut FeatureCache,
) -> Result<&'c Matrix> {
    cache.get_or_compute(encoder, key, inputs)
}
