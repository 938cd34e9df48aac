//! Negative-sampling noise distribution.
//!
//! Sampling follows the smoothed unigram distribution `p(t) proportional to
//! count(t)^power`. The table is filled by the cumulative-mass method: token
//! `t` occupies a contiguous run of slots whose length is `size * p(t)`
//! rounded to the nearest slot boundary, so the per-token slot share is
//! within one slot of exact. Drawing a sample is picking a uniform random
//! slot.

use rand::Rng;

use crate::corpus::Vocabulary;

#[derive(Debug, Clone)]
pub struct NoiseTable {
    slots: Vec<u32>,
}

impl NoiseTable {
    /// Builds the table. `size` must be at least the vocabulary size so every
    /// token can occupy a slot; the vocabulary must be non-empty.
    pub fn build(vocab: &Vocabulary, power: f64, size: usize) -> Self {
        assert!(!vocab.is_empty(), "noise table needs a non-empty vocabulary");
        assert!(
            size >= vocab.len(),
            "noise table size {size} is smaller than the vocabulary ({})",
            vocab.len()
        );
        let weights: Vec<f64> =
            (0..vocab.len() as u32).map(|t| (vocab.count(t) as f64).powf(power)).collect();
        let total: f64 = weights.iter().sum();

        let mut slots = Vec::with_capacity(size);
        let mut cumulative = 0.0;
        for (t, w) in weights.iter().enumerate() {
            cumulative += w;
            let boundary = ((size as f64 * cumulative / total).round() as usize).min(size);
            while slots.len() < boundary {
                slots.push(t as u32);
            }
        }
        // Rounding can leave the tail short; the last token absorbs it.
        let last = (vocab.len() - 1) as u32;
        while slots.len() < size {
            slots.push(last);
        }
        Self { slots }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[u32] {
        &self.slots
    }

    /// Draws one token: a uniform random slot.
    pub fn sample(&self, rng: &mut impl Rng) -> u32 {
        self.slots[rng.random_range(0..self.slots.len())]
    }
}
