//! Full-softmax next-item training with Adam, and leave-one-out evaluation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::{dot, softmax_in_place};
use super::{
    item_indices, rank_of, score_all, user_representation, Model, SeqrecError, UserVariant,
};
use crate::corpus::SplitDataset;
use crate::guided::EmbeddingTable;
use crate::metrics::MetricReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub mu: f64,
    pub guided_enabled: bool,
    /// Decoupled weight decay applied to encoder and base parameters.
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            mu: 1.0,
            guided_enabled: true,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub table: EmbeddingTable,
    /// Mean cross-entropy per predicted position, one entry per epoch.
    pub loss_curve: Vec<f64>,
}

/// One training sequence: item indices and the user's guided vector.
pub(crate) struct Sample<'a> {
    pub items: Vec<usize>,
    pub user_id: &'a str,
    pub user_guided: Option<Vec<f64>>,
}

/// Gradients w.r.t. encoder parameters and the base block of the table.
pub(crate) struct Grads {
    pub params: Vec<f64>,
    pub base: Vec<f64>,
}

impl Grads {
    pub fn zeros(model: &Model, table: &EmbeddingTable) -> Self {
        Self {
            params: vec![0.0; model.params.len()],
            base: vec![0.0; table.base().len()],
        }
    }
}

/// Summed cross-entropy of predicting `items[t + 1]` from `items[..=t]` for
/// every position; accumulates gradients when requested. `refined` is the
/// row-major refined item matrix. Guided coordinates are constants here, so
/// no gradient ever reaches them.
pub(crate) fn sequence_loss(
    model: &Model,
    table: &EmbeddingTable,
    refined: &[f64],
    sample: &Sample<'_>,
    input_mask: Option<&[f64]>,
    mut grads: Option<&mut Grads>,
) -> Result<f64, SeqrecError> {
    let d = model.dim();
    let d_b = table.base_dim();
    let d_r = table.refined_dim();
    let inputs_idx = &sample.items[..sample.items.len() - 1];
    let targets = &sample.items[1..];
    let mut inputs = model.inputs(table, inputs_idx);
    if let Some(mask) = input_mask {
        inputs.iter_mut().zip(mask).for_each(|(x, m)| *x *= m);
    }
    let (hidden, cache) = model.encode(&inputs);

    let mut loss = 0.0;
    let mut d_hidden = vec![0.0; hidden.len()];
    for (t, &target) in targets.iter().enumerate() {
        let rep = user_representation(
            model,
            table,
            hidden[t * d..(t + 1) * d].to_vec(),
            sample.user_guided.as_deref(),
            Some(sample.user_id),
        )?;
        let mut probs: Vec<f64> = refined
            .chunks_exact(d_r)
            .map(|row| dot(row, &rep))
            .collect();
        let target_logit = probs[target];
        loss += softmax_in_place(&mut probs) - target_logit;
        if let Some(g) = grads.as_deref_mut() {
            probs[target] -= 1.0;
            let dh = &mut d_hidden[t * d..(t + 1) * d];
            for (i, (&p, row)) in probs.iter().zip(refined.chunks_exact(d_r)).enumerate() {
                if p == 0.0 {
                    continue;
                }
                for k in 0..d {
                    dh[k] += p * row[k];
                }
                let base_row = &mut g.base[i * d_b..(i + 1) * d_b];
                for k in 0..d_b {
                    base_row[k] += p * rep[k];
                }
            }
        }
    }

    if let Some(g) = grads {
        let mut d_inputs = model.encode_backward(&cache, &d_hidden, &mut g.params);
        if let Some(mask) = input_mask {
            d_inputs.iter_mut().zip(mask).for_each(|(x, m)| *x *= m);
        }
        for (t, &item) in inputs_idx.iter().enumerate() {
            let row = &mut g.base[item * d_b..(item + 1) * d_b];
            for k in 0..d_b {
                row[k] += d_inputs[t * d + k];
            }
        }
    }
    Ok(loss)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64, weight_decay: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let mut offset = 0;
        for (block, grad) in params.iter_mut().zip(grads) {
            for (p, g) in block.iter_mut().zip(grad.iter()) {
                let m = &mut self.m[offset];
                let v = &mut self.v[offset];
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                *p -= lr * ((*m / c1) / ((*v / c2).sqrt() + Self::EPS) + weight_decay * *p);
                offset += 1;
            }
        }
    }
}

pub(crate) fn training_samples<'a>(
    model: &Model,
    table: &EmbeddingTable,
    split: &'a SplitDataset,
) -> Result<Vec<Sample<'a>>, SeqrecError> {
    let window = model.config.max_seq_len + 1;
    let needs_guided =
        model.config.user_variant == UserVariant::ConcatUser && table.guided_dim() > 0;
    let mut samples = Vec::new();
    for user in &split.users {
        let items = user.train_items();
        if items.len() < 2 {
            continue;
        }
        let start = items.len().saturating_sub(window);
        let user_guided = table.user_guided(&user.user_id).map(<[f64]>::to_vec);
        if needs_guided && user_guided.is_none() {
            return Err(SeqrecError::MissingUserGuided(user.user_id.clone()));
        }
        samples.push(Sample {
            items: item_indices(table, &items[start..])?,
            user_id: &user.user_id,
            user_guided,
        });
    }
    if samples.is_empty() {
        return Err(SeqrecError::NoTrainingData);
    }
    Ok(samples)
}

/// Trains encoder parameters and base item embeddings; guided coordinates
/// stay untouched. Deterministic given `config.seed`.
pub fn train(
    model: &Model,
    table: &EmbeddingTable,
    split: &SplitDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome, SeqrecError> {
    model.config.validate(table.config())?;
    if !(config.learning_rate > 0.0) {
        return Err(SeqrecError::Config("learning_rate must be > 0".into()));
    }
    if config.guided_enabled != (table.guided_dim() > 0) {
        return Err(SeqrecError::Config(format!(
            "guided_enabled is {} but the table has {} guided dims",
            config.guided_enabled,
            table.guided_dim()
        )));
    }
    if config.guided_enabled && config.mu != table.mu() {
        return Err(SeqrecError::Config(format!(
            "train mu {} differs from the table's {}",
            config.mu,
            table.mu()
        )));
    }
    let mut model = model.clone();
    let mut table = table.clone();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(TrainOutcome {
            model,
            table,
            loss_curve,
        });
    }

    let samples = training_samples(&model, &table, split)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(model.params.len() + table.base().len());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let dropout = model.config.dropout;
    let mut step = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_positions = 0usize;
        for batch in order.chunks(config.batch_size.max(1)) {
            let refined = table.refined_matrix();
            let mut grads = Grads::zeros(&model, &table);
            let mut batch_loss = 0.0;
            let mut positions = 0usize;
            for &i in batch {
                let sample = &samples[i];
                let mask = (dropout > 0.0).then(|| {
                    let len = (sample.items.len() - 1) * model.dim();
                    (0..len)
                        .map(|_| {
                            if rng.gen::<f64>() < dropout {
                                0.0
                            } else {
                                1.0 / (1.0 - dropout)
                            }
                        })
                        .collect::<Vec<f64>>()
                });
                batch_loss += sequence_loss(
                    &model,
                    &table,
                    &refined,
                    sample,
                    mask.as_deref(),
                    Some(&mut grads),
                )?;
                positions += sample.items.len() - 1;
            }
            if !batch_loss.is_finite() {
                return Err(SeqrecError::NonFinite {
                    epoch,
                    step,
                    loss: batch_loss,
                    learning_rate: config.learning_rate,
                });
            }
            let scale = 1.0 / positions as f64;
            grads.params.iter_mut().for_each(|g| *g *= scale);
            grads.base.iter_mut().for_each(|g| *g *= scale);
            adam.step(
                &mut [&mut model.params, table.base_mut()],
                &[&grads.params, &grads.base],
                config.learning_rate,
                config.weight_decay,
            );
            epoch_loss += batch_loss;
            epoch_positions += positions;
            step += 1;
        }
        loss_curve.push(epoch_loss / epoch_positions as f64);
    }
    Ok(TrainOutcome {
        model,
        table,
        loss_curve,
    })
}

/// 1-based rank of every test user's target against the full catalog, in
/// split order.
pub fn test_ranks(
    model: &Model,
    table: &EmbeddingTable,
    split: &SplitDataset,
) -> Result<Vec<usize>, SeqrecError> {
    model.config.validate(table.config())?;
    let users: Vec<_> = split.test_users().collect();
    if users.is_empty() {
        return Err(SeqrecError::NoTestUsers);
    }
    let ids = table.item_ids();
    users
        .par_iter()
        .map(|user| {
            let (context, target) = user.test().expect("test users have holdouts");
            let target = table
                .index_of(target)
                .ok_or_else(|| SeqrecError::UnknownItem(target.to_string()))?;
            let start = context.len().saturating_sub(model.config.max_seq_len);
            let idx = item_indices(table, &context[start..])?;
            let (out, _) = model.encode(&model.inputs(table, &idx));
            let d = model.dim();
            let rep = user_representation(
                model,
                table,
                out[out.len() - d..].to_vec(),
                table.user_guided(&user.user_id),
                Some(&user.user_id),
            )?;
            Ok(rank_of(ids, &score_all(&rep, table), target))
        })
        .collect()
}

pub fn evaluate(
    model: &Model,
    table: &EmbeddingTable,
    split: &SplitDataset,
    ks: &[usize],
) -> Result<MetricReport, SeqrecError> {
    Ok(MetricReport::from_ranks(
        &test_ranks(model, table, split)?,
        ks,
    )?)
}
