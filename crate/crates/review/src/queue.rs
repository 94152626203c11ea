use std::collections::HashMap;

use cogchain::chain::{cmp_ids, AnnotatedSample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The seeded subset of samples under review, in presentation order.
#[derive(Debug, Clone)]
pub struct ReviewQueue {
    items: Vec<AnnotatedSample>,
    index: HashMap<String, usize>,
}

impl ReviewQueue {
    /// Draws `size` samples (all of them if fewer) with a seeded generator.
    /// The draw depends only on the sample ids and the seed, never on input
    /// order.
    pub fn sample(mut samples: Vec<AnnotatedSample>, size: usize, seed: u64) -> Self {
        samples.sort_by(|a, b| cmp_ids(a.id(), b.id()));
        samples.dedup_by(|a, b| a.id() == b.id());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked = rand::seq::index::sample(&mut rng, samples.len(), size.min(samples.len()));
        let items: Vec<AnnotatedSample> = picked.into_iter().map(|i| samples[i].clone()).collect();
        let index = items.iter().enumerate().map(|(i, s)| (s.id().to_string(), i)).collect();
        ReviewQueue { items, index }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[AnnotatedSample] {
        &self.items
    }

    pub fn position(&self, sample_id: &str) -> Option<usize> {
        self.index.get(sample_id).copied()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.items.iter().map(|s| s.id()).collect()
    }
}
