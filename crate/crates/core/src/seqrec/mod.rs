//! Sequential recommenders (gated recurrent and causal self-attention)
//! scoring the next item by the inner product of a user representation with
//! refined item embeddings.

mod attention;
mod checkpoint;
mod gradcheck;
mod gru;
mod linalg;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guided::{square_xavier_std, EmbeddingTable, GuidedError, RefinedConfig};

pub use checkpoint::{
    load_checkpoint, save_checkpoint, ModelCheckpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use train::{evaluate, test_ranks, train, TrainConfig, TrainOutcome};

pub const DEFAULT_MAX_SEQ_LEN: usize = 50;

#[derive(Debug, Error)]
pub enum SeqrecError {
    #[error("empty item sequence")]
    EmptySequence,
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("no guided user vector for {0}; the concat_user variant needs one")]
    MissingUserGuided(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("no user has at least two training interactions")]
    NoTrainingData,
    #[error("no test users to evaluate")]
    NoTestUsers,
    #[error(
        "loss became non-finite ({loss}) in epoch {epoch}, step {step}; \
         lower the learning rate (currently {learning_rate})"
    )]
    NonFinite {
        epoch: usize,
        step: usize,
        loss: f64,
        learning_rate: f64,
    },
    #[error(transparent)]
    Guided(#[from] GuidedError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error("{path}: {message}")]
    Checkpoint { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Gru,
    Attention,
}

impl FromStr for EncoderKind {
    type Err = SeqrecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(Self::Gru),
            "attn" | "attention" => Ok(Self::Attention),
            other => Err(SeqrecError::Config(format!(
                "unknown encoder {other:?} (expected gru or attn)"
            ))),
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gru => "gru",
            Self::Attention => "attention",
        })
    }
}

/// How the user representation is formed.
///
/// `ConcatUser`: the encoder reads base item embeddings only and the user
/// guided vector is appended to its output. `SequenceRefined`: the encoder
/// reads full refined item embeddings and its output is the representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserVariant {
    ConcatUser,
    SequenceRefined,
}

impl FromStr for UserVariant {
    type Err = SeqrecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "concat" | "concat_user" => Ok(Self::ConcatUser),
            "seqref" | "sequence_refined" => Ok(Self::SequenceRefined),
            other => Err(SeqrecError::Config(format!(
                "unknown user variant {other:?} (expected concat or seqref)"
            ))),
        }
    }
}

impl fmt::Display for UserVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ConcatUser => "concat_user",
            Self::SequenceRefined => "sequence_refined",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub hidden_dim: usize,
    pub max_seq_len: usize,
    pub num_heads: usize,
    pub user_variant: UserVariant,
    pub dropout: f64,
}

impl ModelConfig {
    /// Config whose hidden size matches what `variant` needs for `refined`.
    pub fn for_table(
        encoder: EncoderKind,
        user_variant: UserVariant,
        refined: &RefinedConfig,
    ) -> Self {
        Self {
            encoder,
            hidden_dim: expected_hidden_dim(user_variant, refined),
            max_seq_len: DEFAULT_MAX_SEQ_LEN,
            num_heads: 1,
            user_variant,
            dropout: 0.0,
        }
    }

    pub fn validate(&self, refined: &RefinedConfig) -> Result<(), SeqrecError> {
        if self.hidden_dim == 0 || self.max_seq_len == 0 {
            return Err(SeqrecError::Config(
                "hidden_dim and max_seq_len must be >= 1".into(),
            ));
        }
        if self.num_heads == 0 || !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(SeqrecError::Config(format!(
                "num_heads {} must divide hidden_dim {}",
                self.num_heads, self.hidden_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(SeqrecError::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        let expected = expected_hidden_dim(self.user_variant, refined);
        if self.hidden_dim != expected {
            return Err(SeqrecError::Config(format!(
                "{} needs hidden_dim {expected} for this table, got {}",
                self.user_variant, self.hidden_dim
            )));
        }
        Ok(())
    }
}

fn expected_hidden_dim(variant: UserVariant, refined: &RefinedConfig) -> usize {
    match variant {
        UserVariant::ConcatUser => refined.base_dim,
        UserVariant::SequenceRefined => refined.refined_dim(),
    }
}

/// Encoder parameters stored as one flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Vec<f64>,
}

pub(crate) enum EncoderCache {
    Gru(gru::Cache),
    Attention(attention::Cache),
}

impl Model {
    /// Xavier-uniform weights, zero biases, unit layer-norm gains.
    pub fn new(
        config: ModelConfig,
        refined: &RefinedConfig,
        seed: u64,
    ) -> Result<Self, SeqrecError> {
        config.validate(refined)?;
        let d = config.hidden_dim;
        let bound = square_xavier_std(d) * 3f64.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (count, weights, gains) = match config.encoder {
            EncoderKind::Gru => (gru::param_count(d), gru::weight_ranges(d), Vec::new()),
            EncoderKind::Attention => {
                let (w, g) = attention::init_ranges(d, config.max_seq_len);
                (attention::param_count(d, config.max_seq_len), w, g)
            }
        };
        let mut params = vec![0.0; count];
        for range in weights {
            for p in &mut params[range] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        for range in gains {
            params[range].iter_mut().for_each(|g| *g = 1.0);
        }
        Ok(Self { config, params })
    }

    pub fn dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub(crate) fn encode(&self, inputs: &[f64]) -> (Vec<f64>, EncoderCache) {
        let c = &self.config;
        match c.encoder {
            EncoderKind::Gru => {
                let (out, cache) = gru::forward(&self.params, c.hidden_dim, inputs);
                (out, EncoderCache::Gru(cache))
            }
            EncoderKind::Attention => {
                let (out, cache) = attention::forward(
                    &self.params,
                    c.hidden_dim,
                    c.max_seq_len,
                    c.num_heads,
                    inputs,
                );
                (out, EncoderCache::Attention(cache))
            }
        }
    }

    pub(crate) fn encode_backward(
        &self,
        cache: &EncoderCache,
        d_out: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let c = &self.config;
        match cache {
            EncoderCache::Gru(cache) => {
                gru::backward(&self.params, c.hidden_dim, cache, d_out, grad)
            }
            EncoderCache::Attention(cache) => attention::backward(
                &self.params,
                c.hidden_dim,
                c.max_seq_len,
                c.num_heads,
                cache,
                d_out,
                grad,
            ),
        }
    }

    /// Encoder input rows for a sequence of item indices (`t × hidden_dim`).
    pub(crate) fn inputs(&self, table: &EmbeddingTable, items: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(items.len() * self.dim());
        for &idx in items {
            out.extend_from_slice(table.base_row(idx));
            if self.config.user_variant == UserVariant::SequenceRefined {
                out.extend(table.guided_row(idx).iter().map(|g| table.mu() * g));
            }
        }
        out
    }
}

pub(crate) fn item_indices(
    table: &EmbeddingTable,
    items: &[String],
) -> Result<Vec<usize>, SeqrecError> {
    items
        .iter()
        .map(|id| {
            table
                .index_of(id)
                .ok_or_else(|| SeqrecError::UnknownItem(id.clone()))
        })
        .collect()
}

/// Representation of the user after `items` (only the last `max_seq_len`
/// items are read).
pub fn forward_user(
    model: &Model,
    table: &EmbeddingTable,
    items: &[String],
    user_guided: Option<&[f64]>,
) -> Result<Vec<f64>, SeqrecError> {
    if items.is_empty() {
        return Err(SeqrecError::EmptySequence);
    }
    model.config.validate(table.config())?;
    let start = items.len().saturating_sub(model.config.max_seq_len);
    let idx = item_indices(table, &items[start..])?;
    let (out, _) = model.encode(&model.inputs(table, &idx));
    let d = model.dim();
    let last = out[out.len() - d..].to_vec();
    user_representation(model, table, last, user_guided, None)
}

pub(crate) fn user_representation(
    model: &Model,
    table: &EmbeddingTable,
    mut encoded: Vec<f64>,
    user_guided: Option<&[f64]>,
    user_id: Option<&str>,
) -> Result<Vec<f64>, SeqrecError> {
    if model.config.user_variant == UserVariant::ConcatUser && table.guided_dim() > 0 {
        let guided = user_guided.ok_or_else(|| {
            SeqrecError::MissingUserGuided(user_id.unwrap_or("<anonymous>").to_string())
        })?;
        if guided.len() != table.guided_dim() {
            return Err(SeqrecError::Config(format!(
                "user guided vector has {} entries, table has {}",
                guided.len(),
                table.guided_dim()
            )));
        }
        encoded.extend(guided.iter().map(|g| table.mu() * g));
    }
    Ok(encoded)
}

/// Inner product of two refined vectors, summed separately over the base
/// and guided blocks.
pub fn refined_dot(a: &[f64], b: &[f64], base_dim: usize) -> f64 {
    linalg::dot(&a[..base_dim], &b[..base_dim]) + linalg::dot(&a[base_dim..], &b[base_dim..])
}

/// Scores of every item in table order.
pub fn score_all(user_rep: &[f64], table: &EmbeddingTable) -> Vec<f64> {
    let d_b = table.base_dim();
    let mu = table.mu();
    (0..table.len())
        .map(|idx| {
            let guided: f64 = user_rep[d_b..]
                .iter()
                .zip(table.guided_row(idx))
                .map(|(u, g)| u * (mu * g))
                .sum();
            linalg::dot(&user_rep[..d_b], table.base_row(idx)) + guided
        })
        .collect()
}

/// `⟨user_rep, refined(item)⟩` for each candidate.
pub fn score_candidates(
    user_rep: &[f64],
    table: &EmbeddingTable,
    candidates: &[String],
) -> Result<Vec<f64>, SeqrecError> {
    if candidates.is_empty() {
        return Err(SeqrecError::EmptySequence);
    }
    if user_rep.len() != table.refined_dim() {
        return Err(SeqrecError::Config(format!(
            "user representation has {} entries, items have {}",
            user_rep.len(),
            table.refined_dim()
        )));
    }
    let idx = item_indices(table, candidates)?;
    Ok(idx
        .into_iter()
        .map(|i| refined_dot(user_rep, &table.refined_row(i), table.base_dim()))
        .collect())
}

/// Candidate positions ordered by descending score, ties by id ascending.
pub fn rank_candidates(ids: &[String], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    order
}

/// 1-based rank of `target` under the same ordering as [`rank_candidates`].
pub fn rank_of(ids: &[String], scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    1 + scores
        .iter()
        .zip(ids)
        .enumerate()
        .filter(|&(i, (s, id))| i != target && (*s > t || (*s == t && id < &ids[target])))
        .count()
}
