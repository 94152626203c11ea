use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

/// Hashed bag of word and character n-grams.
///
/// Text is lowercased and whitespace-normalized first, so leading, trailing
/// and repeated whitespace never changes the features. Counts are
/// L2-normalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Hash space is `2^dim_log2` buckets.
    pub dim_log2: u32,
    pub word_ngrams: Vec<usize>,
    pub char_ngrams: Vec<usize>,
    pub lowercase: bool,
    /// Hash function identifier, recorded so artifacts stay interpretable.
    pub hash: String,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            dim_log2: 18,
            word_ngrams: vec![1, 2],
            char_ngrams: vec![3, 4],
            lowercase: true,
            hash: "fnv1a64".into(),
        }
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    pub entries: Vec<(u32, f64)>,
}

impl SparseVec {
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| dense[i as usize] * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }
}

impl FeatureSpec {
    pub fn dim(&self) -> usize {
        1usize << self.dim_log2
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dim_log2 == 0 || self.dim_log2 > 28 {
            return Err(format!("dim_log2 = {} outside 1..=28", self.dim_log2));
        }
        if self.word_ngrams.iter().chain(&self.char_ngrams).any(|&n| n == 0) {
            return Err("n-gram sizes must be positive".into());
        }
        if self.word_ngrams.is_empty() && self.char_ngrams.is_empty() {
            return Err("no n-gram sizes configured".into());
        }
        if self.hash != "fnv1a64" {
            return Err(format!("unsupported hash {:?}", self.hash));
        }
        Ok(())
    }

    fn bucket(&self, kind: u8, n: usize, gram: &str) -> u32 {
        let mut h = FnvHasher::default();
        h.write(&[kind, n as u8]);
        h.write(gram.as_bytes());
        (h.finish() & (self.dim() as u64 - 1)) as u32
    }

    pub fn normalize(&self, text: &str) -> String {
        let joined = text.split_whitespace().collect::<Vec<_>>().join(" ");
        if self.lowercase {
            joined.to_lowercase()
        } else {
            joined
        }
    }

    pub fn extract(&self, text: &str) -> SparseVec {
        let text = self.normalize(text);
        let mut buckets: Vec<u32> = Vec::new();
        let words: Vec<&str> = text.split(' ').filter(|w| !w.is_empty()).collect();
        for &n in &self.word_ngrams {
            for w in words.windows(n) {
                buckets.push(self.bucket(b'w', n, &w.join(" ")));
            }
        }
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        for &n in &self.char_ngrams {
            if chars.len() < n {
                continue;
            }
            for start in 0..=chars.len() - n {
                let from = chars[start].0;
                let to = chars.get(start + n).map(|c| c.0).unwrap_or(text.len());
                buckets.push(self.bucket(b'c', n, &text[from..to]));
            }
        }
        buckets.sort_unstable();
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for b in buckets {
            match entries.last_mut() {
                Some((i, c)) if *i == b => *c += 1.0,
                _ => entries.push((b, 1.0)),
            }
        }
        let v = SparseVec { entries };
        let norm = v.norm();
        if norm > 0.0 {
            SparseVec { entries: v.entries.into_iter().map(|(i, c)| (i, c / norm)).collect() }
        } else {
            v
        }
    }
}
