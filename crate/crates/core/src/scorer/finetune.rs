//! Fine-tuning loss structure and the classification fine-tune of the
//! surrogate scorer.
//!
//! Item guided scores stay frozen; only the user-side scorer trains.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::parse::{parse_scores, FormatReport};
use super::surrogate::{sigmoid, SparseFeatures, SurrogateScorer};
use crate::aspects::{AspectCatalog, PromptPair};
use crate::corpus::LabeledPair;
use crate::metrics::{auc_roc, MetricError};

pub const LAMBDA_OK: f64 = 0.1;
pub const LAMBDA_BAD: f64 = 1.0;
const ADAGRAD_EPS: f64 = 1e-8;

/// Fine-tuning objective: recommendation loss plus weighted format penalty.
/// When the output format is broken the recommendation term is dropped and
/// the larger weight applies.
pub fn composite_finetune_loss(
    l_rec: f64,
    format_valid: bool,
    l_format_diag: f64,
    lambda_ok: f64,
    lambda_bad: f64,
) -> f64 {
    if format_valid {
        l_rec + lambda_ok * l_format_diag
    } else {
        lambda_bad * l_format_diag
    }
}

/// Share of the catalog that was missing or clamped in a response.
pub fn format_loss_diag(report: &FormatReport, catalog: &AspectCatalog) -> f64 {
    (report.missing_aspects.len() + report.clamped) as f64 / catalog.len() as f64
}

#[derive(Debug, Error)]
pub enum FinetuneError {
    #[error("{0} pairs need both liked and disliked examples")]
    OneClass(&'static str),
    #[error("no user prompt for {0}")]
    MissingUser(String),
    #[error("no item scores for {0}")]
    MissingItem(String),
    #[error("surrogate has {surrogate} outputs but catalog has {catalog} aspects")]
    DimensionMismatch { surrogate: usize, catalog: usize },
    #[error("like threshold {0} must lie strictly inside (1, 5)")]
    Threshold(f64),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Inputs for the like/dislike task.
#[derive(Debug, Clone)]
pub struct ClassificationTask {
    pub catalog: AspectCatalog,
    pub user_prompts: BTreeMap<String, PromptPair>,
    /// Frozen item guided scores on the 1-10 scale.
    pub item_scores: BTreeMap<String, Vec<f64>>,
    pub train: Vec<LabeledPair>,
    pub held_out: Vec<LabeledPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub like_threshold: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub lambda_ok: f64,
    pub lambda_bad: f64,
    /// Decoupled L2 shrinkage of the surrogate weights per step.
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            like_threshold: 3.0,
            epochs: 30,
            learning_rate: 0.2,
            batch_size: 32,
            seed: 0,
            lambda_ok: LAMBDA_OK,
            lambda_bad: LAMBDA_BAD,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub surrogate: SurrogateScorer,
    pub auc_before: f64,
    pub auc: f64,
    /// Mean composite loss per epoch.
    pub loss_curve: Vec<f64>,
    pub offset: f64,
}

pub fn like_labels(pairs: &[LabeledPair], threshold: f64) -> Vec<bool> {
    pairs.iter().map(|p| p.rating > threshold).collect()
}

fn centered(scores: &[f64]) -> Vec<f64> {
    scores.iter().map(|s| (s - 5.5) / 4.5).collect()
}

struct Prepared<'a> {
    features: HashMap<&'a str, SparseFeatures>,
    items: HashMap<&'a str, Vec<f64>>,
}

impl<'a> Prepared<'a> {
    fn new(
        task: &'a ClassificationTask,
        surrogate: &SurrogateScorer,
    ) -> Result<Self, FinetuneError> {
        let mut features = HashMap::new();
        let mut items = HashMap::new();
        for pair in task.train.iter().chain(&task.held_out) {
            if !features.contains_key(pair.user_id.as_str()) {
                let prompt = task
                    .user_prompts
                    .get(&pair.user_id)
                    .ok_or_else(|| FinetuneError::MissingUser(pair.user_id.clone()))?;
                features.insert(pair.user_id.as_str(), surrogate.features(&prompt.user));
            }
            if !items.contains_key(pair.item_id.as_str()) {
                let scores = task
                    .item_scores
                    .get(&pair.item_id)
                    .ok_or_else(|| FinetuneError::MissingItem(pair.item_id.clone()))?;
                items.insert(pair.item_id.as_str(), centered(scores));
            }
        }
        Ok(Self { features, items })
    }

    /// Affinity logit plus the per-aspect sigmoid activations it used.
    fn logit(
        &self,
        surrogate: &SurrogateScorer,
        offset: f64,
        pair: &LabeledPair,
    ) -> (f64, Vec<f64>) {
        let z = surrogate.logits(&self.features[pair.user_id.as_str()]);
        let sig: Vec<f64> = z.into_iter().map(sigmoid).collect();
        let item = &self.items[pair.item_id.as_str()];
        // centered user score: (1 + 9 s - 5.5) / 4.5 = 2 s - 1
        let logit = offset
            + sig
                .iter()
                .zip(item)
                .map(|(s, i)| (2.0 * s - 1.0) * i)
                .sum::<f64>();
        (logit, sig)
    }

    fn auc(
        &self,
        surrogate: &SurrogateScorer,
        offset: f64,
        pairs: &[LabeledPair],
        threshold: f64,
    ) -> Result<f64, FinetuneError> {
        let scores: Vec<f64> = pairs
            .iter()
            .map(|p| self.logit(surrogate, offset, p).0)
            .collect();
        Ok(auc_roc(&like_labels(pairs, threshold), &scores)?)
    }
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Trains the surrogate's user-side scores so that the affinity between user
/// and (frozen) item scores separates liked from disliked pairs. Returns the
/// held-out AUC before and after training.
pub fn finetune_classification(
    surrogate: &SurrogateScorer,
    task: &ClassificationTask,
    config: &FinetuneConfig,
) -> Result<FinetuneOutcome, FinetuneError> {
    if !(config.like_threshold > 1.0 && config.like_threshold < 5.0) {
        return Err(FinetuneError::Threshold(config.like_threshold));
    }
    if surrogate.m != task.catalog.len() {
        return Err(FinetuneError::DimensionMismatch {
            surrogate: surrogate.m,
            catalog: task.catalog.len(),
        });
    }
    for (name, pairs) in [("training", &task.train), ("held-out", &task.held_out)] {
        let labels = like_labels(pairs, config.like_threshold);
        if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
            return Err(FinetuneError::OneClass(name));
        }
    }

    let prepared = Prepared::new(task, surrogate)?;
    let mut model = surrogate.clone();
    let mut offset = 0.0;
    let auc_before = prepared.auc(&model, offset, &task.held_out, config.like_threshold)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..task.train.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let buckets = model.buckets;
    // Adagrad accumulators: rare hashed tokens still get sizeable steps.
    let mut acc_w = vec![0.0; model.weights.len()];
    let mut acc_b = vec![0.0; model.m];
    let mut acc_offset = 0.0;
    let step = |acc: &mut f64, g: f64| -> f64 {
        *acc += g * g;
        config.learning_rate * g / (acc.sqrt() + ADAGRAD_EPS)
    };

    for _ in 0..config.epochs {
        // The surrogate always emits the requested layout, but the check is
        // what decides which branch of the composite loss applies.
        let mut format: HashMap<&str, (bool, f64)> = HashMap::new();
        for pair in &task.train {
            format.entry(pair.user_id.as_str()).or_insert_with(|| {
                let prompt = &task.user_prompts[&pair.user_id];
                match parse_scores(&model.emit(prompt), &task.catalog) {
                    Ok(p) => (true, format_loss_diag(&p.report, &task.catalog)),
                    Err(e) => (false, format_loss_diag(&e.report, &task.catalog)),
                }
            });
        }

        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut grad_w: HashMap<(usize, usize), f64> = HashMap::new();
            let mut grad_b = vec![0.0; model.m];
            let mut grad_offset = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let pair = &task.train[idx];
                let y = if pair.rating > config.like_threshold {
                    1.0
                } else {
                    0.0
                };
                let (logit, sig) = prepared.logit(&model, offset, pair);
                let l_rec = log1p_exp(logit) - y * logit;
                let (valid, diag) = format[pair.user_id.as_str()];
                epoch_loss += composite_finetune_loss(
                    l_rec,
                    valid,
                    diag,
                    config.lambda_ok,
                    config.lambda_bad,
                );
                if !valid {
                    continue;
                }
                let g = (sigmoid(logit) - y) * scale;
                grad_offset += g;
                let item = &prepared.items[pair.item_id.as_str()];
                let feats = &prepared.features[pair.user_id.as_str()];
                for j in 0..model.m {
                    let gz = g * item[j] * 2.0 * sig[j] * (1.0 - sig[j]);
                    grad_b[j] += gz;
                    for &(b, v) in feats {
                        *grad_w.entry((j, b)).or_default() += gz * v;
                    }
                }
            }
            if config.weight_decay > 0.0 {
                let shrink = 1.0 - config.learning_rate * config.weight_decay;
                model.weights.iter_mut().for_each(|w| *w *= shrink);
            }
            for ((j, b), g) in grad_w {
                let idx = j * buckets + b;
                model.weights[idx] -= step(&mut acc_w[idx], g);
            }
            for ((b, acc), g) in model.bias.iter_mut().zip(&mut acc_b).zip(&grad_b) {
                *b -= step(acc, *g);
            }
            offset -= step(&mut acc_offset, grad_offset);
        }
        loss_curve.push(epoch_loss / task.train.len() as f64);
    }

    let auc = prepared.auc(&model, offset, &task.held_out, config.like_threshold)?;
    Ok(FinetuneOutcome {
        surrogate: model,
        auc_before,
        auc,
        loss_curve,
        offset,
    })
}
