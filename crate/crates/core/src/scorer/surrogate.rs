//! Trainable linear stand-in for a fine-tuned scoring model.
//!
//! Each aspect score is `1 + 9 * sigmoid(w_j . x + b_j)`, where `x` is an
//! L2-normalised hashed bag of unigrams of the user-side prompt text.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::parse::render_score_block;
use crate::aspects::{format_block_names, PromptPair};

pub const FEATURE_BUCKETS: usize = 1 << 12;

/// Sparse feature vector: `(bucket, value)` pairs sorted by bucket.
pub type SparseFeatures = Vec<(usize, f64)>;

fn fnv1a(token: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Hashed unigram counts, L2-normalised.
pub fn hashed_features(text: &str, buckets: usize) -> SparseFeatures {
    let mut counts = std::collections::BTreeMap::<usize, f64>::new();
    for token in text
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
    {
        let bucket = (fnv1a(&token.to_lowercase()) % buckets as u64) as usize;
        *counts.entry(bucket).or_default() += 1.0;
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Vec::new();
    }
    counts.into_iter().map(|(b, c)| (b, c / norm)).collect()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateScorer {
    pub m: usize,
    pub buckets: usize,
    /// Row-major `m x buckets`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SurrogateScorer {
    /// All-zero parameters: every score is the scale midpoint 5.5.
    pub fn new(m: usize) -> Self {
        Self {
            m,
            buckets: FEATURE_BUCKETS,
            weights: vec![0.0; m * FEATURE_BUCKETS],
            bias: vec![0.0; m],
        }
    }

    pub fn features(&self, text: &str) -> SparseFeatures {
        hashed_features(text, self.buckets)
    }

    /// Pre-activation `w_j . x + b_j` per aspect.
    pub fn logits(&self, features: &SparseFeatures) -> Vec<f64> {
        (0..self.m)
            .map(|j| {
                let row = &self.weights[j * self.buckets..(j + 1) * self.buckets];
                self.bias[j] + features.iter().map(|&(b, v)| row[b] * v).sum::<f64>()
            })
            .collect()
    }

    pub fn scores_from_features(&self, features: &SparseFeatures) -> Vec<f64> {
        self.logits(features)
            .into_iter()
            .map(|z| 1.0 + 9.0 * sigmoid(z))
            .collect()
    }

    pub fn scores(&self, text: &str) -> Vec<f64> {
        self.scores_from_features(&self.features(text))
    }

    /// Score block for a prompt, listing the aspects its format block asks for.
    pub fn emit(&self, prompt: &PromptPair) -> String {
        let names = format_block_names(&prompt.system);
        let scores = self.scores(&prompt.user);
        render_score_block(names.iter().map(String::as_str), &scores)
    }

    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.m as u64).to_le_bytes());
        hasher.update((self.buckets as u64).to_le_bytes());
        for v in self.weights.iter().chain(&self.bias) {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}
