//! Normalization of aspect scores and assembly of refined embeddings.
//!
//! Raw 1-10 scores are centred per aspect and rescaled so every coordinate
//! has the standard deviation a Xavier-initialized embedding would have.
//! The refined embedding of an item is `base ⊕ μ·guided`; the guided half is
//! frozen once the table is built.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const TABLE_FORMAT: &str = "guidedrec-table";
pub const NORMALIZER_FORMAT: &str = "guidedrec-normalizer";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GuidedError {
    #[error("need at least 2 scored items to fit a normalizer, got {0}")]
    TooFewRows(usize),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid refined config: {0}")]
    InvalidConfig(String),
    #[error("missing guided scores for {} item(s): {}", .0.len(), .0.join(", "))]
    MissingScores(Vec<String>),
    #[error("duplicate item id {0}")]
    DuplicateItem(String),
    #[error("a guided table needs a normalizer")]
    MissingNormalizer,
    #[error("{path}: {message}")]
    Archive { path: String, message: String },
}

/// Standard deviation of Xavier initialization for a `fan_in -> fan_out` map.
pub fn xavier_std(fan_in: usize, fan_out: usize) -> f64 {
    (2.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Target scale for a refined dimension `d_r`, treating the embedding as a
/// square `d_r -> d_r` layer.
pub fn square_xavier_std(refined_dim: usize) -> f64 {
    xavier_std(refined_dim, refined_dim)
}

/// Per-aspect affine map `x -> (x - mean) / std * target_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub per_dim_mean: Vec<f64>,
    pub per_dim_std: Vec<f64>,
    pub target_std: f64,
    pub epsilon: f64,
}

impl Normalizer {
    pub fn m(&self) -> usize {
        self.per_dim_mean.len()
    }

    pub fn is_degenerate(&self, dim: usize) -> bool {
        self.per_dim_std[dim] < self.epsilon
    }

    pub fn degenerate_dims(&self) -> Vec<usize> {
        (0..self.m()).filter(|&j| self.is_degenerate(j)).collect()
    }

    pub fn normalize(&self, scores: &[f64]) -> Result<Vec<f64>, GuidedError> {
        normalize(self, scores)
    }
}

/// Fits per-aspect mean and population standard deviation over item scores;
/// the target scale is the square-layer Xavier std for `refined_dim`.
pub fn fit_normalizer(
    rows: &[Vec<f64>],
    refined_dim: usize,
    epsilon: f64,
) -> Result<Normalizer, GuidedError> {
    if refined_dim == 0 {
        return Err(GuidedError::InvalidConfig(
            "refined dimension must be >= 1".into(),
        ));
    }
    fit_normalizer_with_target(rows, square_xavier_std(refined_dim), epsilon)
}

pub fn fit_normalizer_with_target(
    rows: &[Vec<f64>],
    target_std: f64,
    epsilon: f64,
) -> Result<Normalizer, GuidedError> {
    if rows.len() < 2 {
        return Err(GuidedError::TooFewRows(rows.len()));
    }
    if !(target_std > 0.0) || !(epsilon > 0.0) {
        return Err(GuidedError::InvalidConfig(
            "target std and epsilon must be > 0".into(),
        ));
    }
    let m = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(GuidedError::LengthMismatch {
            expected: m,
            got: bad.len(),
        });
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; m];
    for row in rows {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; m];
    for row in rows {
        for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
    Ok(Normalizer {
        per_dim_mean: mean,
        per_dim_std: std,
        target_std,
        epsilon,
    })
}

/// Applies the normalizer; degenerate aspects map to 0.
pub fn normalize(normalizer: &Normalizer, scores: &[f64]) -> Result<Vec<f64>, GuidedError> {
    if scores.len() != normalizer.m() {
        return Err(GuidedError::LengthMismatch {
            expected: normalizer.m(),
            got: scores.len(),
        });
    }
    Ok(scores
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            if normalizer.is_degenerate(j) {
                0.0
            } else {
                (x - normalizer.per_dim_mean[j]) / normalizer.per_dim_std[j] * normalizer.target_std
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedConfig {
    pub base_dim: usize,
    pub guided_dim: usize,
    pub mu: f64,
}

impl RefinedConfig {
    pub fn new(base_dim: usize, guided_dim: usize, mu: f64) -> Result<Self, GuidedError> {
        let config = Self {
            base_dim,
            guided_dim,
            mu,
        };
        config.validate()?;
        Ok(config)
    }

    /// A table without guided coordinates.
    pub fn pure_base(base_dim: usize) -> Result<Self, GuidedError> {
        Self::new(base_dim, 0, 1.0)
    }

    pub fn refined_dim(&self) -> usize {
        self.base_dim + self.guided_dim
    }

    pub fn validate(&self) -> Result<(), GuidedError> {
        if self.base_dim == 0 {
            return Err(GuidedError::InvalidConfig("base_dim must be >= 1".into()));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(GuidedError::InvalidConfig(format!(
                "mu must be > 0, got {}",
                self.mu
            )));
        }
        Ok(())
    }
}

/// `base ⊕ mu·guided`, base first.
pub fn refine(base: &[f64], guided: &[f64], mu: f64) -> Result<Vec<f64>, GuidedError> {
    if base.is_empty() {
        return Err(GuidedError::InvalidConfig(
            "base part must be non-empty".into(),
        ));
    }
    if !(mu > 0.0) {
        return Err(GuidedError::InvalidConfig(format!(
            "mu must be > 0, got {mu}"
        )));
    }
    let mut out = Vec::with_capacity(base.len() + guided.len());
    out.extend_from_slice(base);
    out.extend(guided.iter().map(|g| mu * g));
    Ok(out)
}

/// Item embedding table: a trainable base block and a frozen guided block,
/// both row-major with one row per item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableData")]
pub struct EmbeddingTable {
    config: RefinedConfig,
    item_ids: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    base: Vec<f64>,
    guided: Vec<f64>,
    /// User guided vectors, normalized with the item statistics.
    user_guided: BTreeMap<String, Vec<f64>>,
    normalizer: Option<Normalizer>,
}

impl EmbeddingTable {
    pub fn config(&self) -> &RefinedConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn index_of(&self, item_id: &str) -> Option<usize> {
        self.index.get(item_id).copied()
    }

    pub fn base_dim(&self) -> usize {
        self.config.base_dim
    }

    pub fn guided_dim(&self) -> usize {
        self.config.guided_dim
    }

    pub fn refined_dim(&self) -> usize {
        self.config.refined_dim()
    }

    pub fn mu(&self) -> f64 {
        self.config.mu
    }

    pub fn normalizer(&self) -> Option<&Normalizer> {
        self.normalizer.as_ref()
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn base_mut(&mut self) -> &mut [f64] {
        &mut self.base
    }

    /// The frozen guided block (no mutable access is offered).
    pub fn guided(&self) -> &[f64] {
        &self.guided
    }

    pub fn base_row(&self, idx: usize) -> &[f64] {
        let d = self.config.base_dim;
        &self.base[idx * d..(idx + 1) * d]
    }

    pub fn guided_row(&self, idx: usize) -> &[f64] {
        let m = self.config.guided_dim;
        &self.guided[idx * m..(idx + 1) * m]
    }

    pub fn refined_row(&self, idx: usize) -> Vec<f64> {
        let mut out = self.base_row(idx).to_vec();
        out.extend(self.guided_row(idx).iter().map(|g| self.config.mu * g));
        out
    }

    /// All refined rows, row-major `len × refined_dim`.
    pub fn refined_matrix(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.refined_dim());
        for idx in 0..self.len() {
            out.extend(self.refined_row(idx));
        }
        out
    }

    /// Overwrites one guided coordinate; only for sensitivity probes.
    pub(crate) fn set_guided_for_probe(&mut self, flat_index: usize, value: f64) {
        self.guided[flat_index] = value;
    }

    pub fn user_guided(&self, user_id: &str) -> Option<&[f64]> {
        self.user_guided.get(user_id).map(Vec::as_slice)
    }

    pub fn user_guided_map(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.user_guided
    }

    /// Normalizes raw user scores with the item statistics and attaches them.
    pub fn attach_user_scores(
        &mut self,
        user_scores: &BTreeMap<String, Vec<f64>>,
    ) -> Result<(), GuidedError> {
        let normalizer = self
            .normalizer
            .as_ref()
            .ok_or(GuidedError::MissingNormalizer)?;
        let mut normalized = BTreeMap::new();
        for (user, scores) in user_scores {
            normalized.insert(user.clone(), normalize(normalizer, scores)?);
        }
        self.user_guided = normalized;
        Ok(())
    }

    fn rebuild_index(&mut self) -> Result<(), GuidedError> {
        self.index = HashMap::with_capacity(self.item_ids.len());
        for (idx, id) in self.item_ids.iter().enumerate() {
            if self.index.insert(id.clone(), idx).is_some() {
                return Err(GuidedError::DuplicateItem(id.clone()));
            }
        }
        Ok(())
    }
}

/// Serialized form of a table; the id index is rebuilt on load.
#[derive(Deserialize)]
struct TableData {
    config: RefinedConfig,
    item_ids: Vec<String>,
    base: Vec<f64>,
    guided: Vec<f64>,
    user_guided: BTreeMap<String, Vec<f64>>,
    normalizer: Option<Normalizer>,
}

impl TryFrom<TableData> for EmbeddingTable {
    type Error = GuidedError;

    fn try_from(data: TableData) -> Result<Self, Self::Error> {
        data.config.validate()?;
        let n = data.item_ids.len();
        if data.base.len() != n * data.config.base_dim
            || data.guided.len() != n * data.config.guided_dim
        {
            return Err(GuidedError::InvalidConfig(
                "matrix sizes disagree with the config".into(),
            ));
        }
        let mut table = EmbeddingTable {
            config: data.config,
            item_ids: data.item_ids,
            index: HashMap::new(),
            base: data.base,
            guided: data.guided,
            user_guided: data.user_guided,
            normalizer: data.normalizer,
        };
        table.rebuild_index()?;
        Ok(table)
    }
}

/// Builds an embedding table. The base block is drawn uniformly from
/// `±s·√3` where `s` is the normalizer's target std (or the square-layer
/// Xavier std of the base dim for pure-base tables), so both halves start at
/// the same scale.
pub fn build_table(
    item_ids: &[String],
    guided_scores: Option<&BTreeMap<String, Vec<f64>>>,
    normalizer: Option<&Normalizer>,
    config: RefinedConfig,
    init_seed: u64,
) -> Result<EmbeddingTable, GuidedError> {
    config.validate()?;
    let mut guided = Vec::with_capacity(item_ids.len() * config.guided_dim);
    let init_std = if config.guided_dim == 0 {
        square_xavier_std(config.refined_dim())
    } else {
        let normalizer = normalizer.ok_or(GuidedError::MissingNormalizer)?;
        if normalizer.m() != config.guided_dim {
            return Err(GuidedError::LengthMismatch {
                expected: config.guided_dim,
                got: normalizer.m(),
            });
        }
        let scores = guided_scores.ok_or_else(|| GuidedError::MissingScores(item_ids.to_vec()))?;
        let missing: Vec<String> = item_ids
            .iter()
            .filter(|id| !scores.contains_key(*id))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(GuidedError::MissingScores(missing));
        }
        for id in item_ids {
            guided.extend(normalize(normalizer, &scores[id])?);
        }
        normalizer.target_std
    };

    let bound = init_std * 3f64.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let base = (0..item_ids.len() * config.base_dim)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();

    let mut table = EmbeddingTable {
        config,
        item_ids: item_ids.to_vec(),
        index: HashMap::new(),
        base,
        guided,
        user_guided: BTreeMap::new(),
        normalizer: if config.guided_dim == 0 {
            None
        } else {
            normalizer.cloned()
        },
    };
    table.rebuild_index()?;
    Ok(table)
}

#[derive(Serialize, Deserialize)]
struct Archive<T> {
    format: String,
    version: u32,
    body: T,
}

fn write_json<T: Serialize>(path: &Path, format: &str, body: T) -> Result<(), GuidedError> {
    let archive = Archive {
        format: format.to_string(),
        version: ARCHIVE_VERSION,
        body,
    };
    let text = serde_json::to_string(&archive).map_err(|e| archive_error(path, e))?;
    fs::write(path, text).map_err(|e| archive_error(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, format: &str) -> Result<T, GuidedError> {
    let text = fs::read_to_string(path).map_err(|e| archive_error(path, e))?;
    let archive: Archive<T> = serde_json::from_str(&text).map_err(|e| archive_error(path, e))?;
    if archive.format != format || archive.version != ARCHIVE_VERSION {
        return Err(archive_error(
            path,
            format!(
                "expected {format} v{ARCHIVE_VERSION}, found {} v{}",
                archive.format, archive.version
            ),
        ));
    }
    Ok(archive.body)
}

fn archive_error(path: &Path, e: impl ToString) -> GuidedError {
    GuidedError::Archive {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn save_table(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<(), GuidedError> {
    write_json(path.as_ref(), TABLE_FORMAT, table)
}

pub fn load_table(path: impl AsRef<Path>) -> Result<EmbeddingTable, GuidedError> {
    read_json(path.as_ref(), TABLE_FORMAT)
}

pub fn save_normalizer(path: impl AsRef<Path>, normalizer: &Normalizer) -> Result<(), GuidedError> {
    write_json(path.as_ref(), NORMALIZER_FORMAT, normalizer)
}

pub fn load_normalizer(path: impl AsRef<Path>) -> Result<Normalizer, GuidedError> {
    read_json(path.as_ref(), NORMALIZER_FORMAT)
}
