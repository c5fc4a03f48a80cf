//! Planted-preference synthetic corpus.
//!
//! Items and users live on the aspect cube `[1, 10]^m`. At every step a
//! user picks the next item from a softmax over negative squared aspect
//! distance (divided by a temperature) plus fresh Gaussian noise, so the
//! aspect scores carry the signal a guided embedding should recover.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, Interaction, ItemRecord};

const BASE_TIMESTAMP_MS: i64 = 1_600_000_000_000;
const DAY_MS: i64 = 86_400_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub m: usize,
    pub seq_len_min: usize,
    pub seq_len_max: usize,
    pub noise_scale: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_users: 300,
            num_items: 200,
            m: 12,
            seq_len_min: 6,
            seq_len_max: 14,
            noise_scale: 0.5,
            temperature: 20.0,
            seed: 2024,
        }
    }
}

/// Ground truth behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub item_aspects: BTreeMap<String, Vec<f64>>,
    pub user_prefs: BTreeMap<String, Vec<f64>>,
    pub noise_scale: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl PlantedTruth {
    pub fn m(&self) -> usize {
        self.item_aspects.values().next().map_or(0, Vec::len)
    }

    /// Noise-free next-item probabilities for a user, in item-id order.
    pub fn next_item_probabilities(&self, user_id: &str) -> Option<Vec<f64>> {
        let prefs = self.user_prefs.get(user_id)?;
        let logits: Vec<f64> = self
            .item_aspects
            .values()
            .map(|a| -sq_dist(prefs, a) / self.temperature)
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Some(exps.into_iter().map(|e| e / total).collect())
    }

    /// Fraction of other items strictly closer to the user than `item_id`.
    pub fn distance_quantile(&self, user_id: &str, item_id: &str) -> Option<f64> {
        let prefs = self.user_prefs.get(user_id)?;
        let target = sq_dist(prefs, self.item_aspects.get(item_id)?);
        let n = self.item_aspects.len();
        if n < 2 {
            return Some(0.0);
        }
        let closer = self
            .item_aspects
            .values()
            .filter(|a| sq_dist(prefs, a) < target)
            .count();
        Some(closer as f64 / (n - 1) as f64)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Ratings fall linearly from 5 (closest item) to 1 (farthest item).
pub fn rating_from_quantile(q: f64) -> f64 {
    5.0 - (q * 4.0).clamp(0.0, 4.0)
}

fn width(n: usize) -> usize {
    n.max(1).to_string().len().max(4)
}

fn item_id(idx: usize, n: usize) -> String {
    format!("i{idx:0w$}", w = width(n))
}

fn user_id(idx: usize, n: usize) -> String {
    format!("u{idx:0w$}", w = width(n))
}

fn item_record(id: &str, aspects: &[f64]) -> ItemRecord {
    let levels: Vec<String> = aspects
        .iter()
        .enumerate()
        .map(|(j, v)| format!("a{:02}_l{}", j + 1, v.round() as i64))
        .collect();
    let exact: Vec<String> = aspects.iter().map(|v| format!("{v:.2}")).collect();
    let mut record = ItemRecord::new(id, format!("Synthetic item {id}"));
    record.description = format!(
        "Aspect levels: {}\nPlanted scores: {}",
        levels.join(" "),
        exact.join(", ")
    );
    record.categories = vec!["Synthetic".to_string()];
    record
}

fn uniform_cube(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(1.0..=10.0)).collect()
}

fn sample_softmax(rng: &mut ChaCha8Rng, logits: &[f64]) -> usize {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (idx, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return idx;
        }
    }
    weights.len() - 1
}

/// Generates a planted dataset; fully determined by `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, PlantedTruth), CorpusError> {
    if spec.m == 0 {
        return Err(CorpusError::InvalidSpec("m must be >= 1".into()));
    }
    if spec.num_items < 10 {
        return Err(CorpusError::InvalidSpec("num_items must be >= 10".into()));
    }
    if spec.num_users == 0 {
        return Err(CorpusError::InvalidSpec("num_users must be >= 1".into()));
    }
    if spec.seq_len_min == 0 || spec.seq_len_min > spec.seq_len_max {
        return Err(CorpusError::InvalidSpec(format!(
            "bad sequence length range {}..={}",
            spec.seq_len_min, spec.seq_len_max
        )));
    }
    if !(spec.temperature > 0.0) || !(spec.noise_scale >= 0.0) {
        return Err(CorpusError::InvalidSpec(
            "temperature must be > 0 and noise_scale >= 0".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let item_ids: Vec<String> = (0..spec.num_items)
        .map(|i| item_id(i, spec.num_items))
        .collect();
    let item_vecs: Vec<Vec<f64>> = (0..spec.num_items)
        .map(|_| uniform_cube(&mut rng, spec.m))
        .collect();
    let user_ids: Vec<String> = (0..spec.num_users)
        .map(|u| user_id(u, spec.num_users))
        .collect();
    let user_vecs: Vec<Vec<f64>> = (0..spec.num_users)
        .map(|_| uniform_cube(&mut rng, spec.m))
        .collect();

    let truth = PlantedTruth {
        item_aspects: item_ids
            .iter()
            .cloned()
            .zip(item_vecs.iter().cloned())
            .collect(),
        user_prefs: user_ids
            .iter()
            .cloned()
            .zip(user_vecs.iter().cloned())
            .collect(),
        noise_scale: spec.noise_scale,
        temperature: spec.temperature,
        seed: spec.seed,
    };

    let items = item_ids
        .iter()
        .zip(&item_vecs)
        .map(|(id, a)| (id.clone(), item_record(id, a)))
        .collect();

    let mut users = BTreeMap::new();
    for (u, (uid, prefs)) in user_ids.iter().zip(&user_vecs).enumerate() {
        let len = rng.gen_range(spec.seq_len_min..=spec.seq_len_max);
        let dists: Vec<f64> = item_vecs.iter().map(|a| sq_dist(prefs, a)).collect();
        let mut seq = Vec::with_capacity(len);
        for step in 0..len {
            let logits: Vec<f64> = dists
                .iter()
                .map(|d| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    -d / spec.temperature + spec.noise_scale * noise
                })
                .collect();
            let chosen = sample_softmax(&mut rng, &logits);
            let closer = dists.iter().filter(|&&d| d < dists[chosen]).count();
            let rating = rating_from_quantile(closer as f64 / (spec.num_items - 1) as f64);
            seq.push(Interaction {
                user_id: uid.clone(),
                item_id: item_ids[chosen].clone(),
                rating,
                timestamp: BASE_TIMESTAMP_MS + step as i64 * DAY_MS + u as i64 * 1000,
                summary: format!("{uid} on {}", item_ids[chosen]),
                review_text: format!("Rated {rating:.1} after step {step}."),
            });
        }
        users.insert(uid.clone(), seq);
    }
    Ok((Dataset { items, users }, truth))
}

/// A user-item pair with a rating, used for like/dislike classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
}

/// Samples `per_user` distinct random items per user and rates them with the
/// planted distance-quantile rule.
pub fn planted_pairs(truth: &PlantedTruth, per_user: usize, seed: u64) -> Vec<LabeledPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let item_ids: Vec<&String> = truth.item_aspects.keys().collect();
    let per_user = per_user.min(item_ids.len());
    let mut pairs = Vec::new();
    for user in truth.user_prefs.keys() {
        for idx in sample(&mut rng, item_ids.len(), per_user).into_vec() {
            let item = item_ids[idx];
            let q = truth
                .distance_quantile(user, item)
                .expect("ids come from the truth maps");
            pairs.push(LabeledPair {
                user_id: user.clone(),
                item_id: item.clone(),
                rating: rating_from_quantile(q),
            });
        }
    }
    pairs
}
