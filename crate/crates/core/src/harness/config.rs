//! Experiment configuration: one TOML document, unknown keys rejected.
//!
//! ```toml
//! seeds = [0, 1, 2, 3, 4]
//!
//! [data]
//! source = "synthetic"        # or "files" / "archive"
//! num_users = 300
//!
//! [catalog]
//! domain = "movies"
//!
//! [backend]
//! kind = "oracle"             # mock | oracle | http | surrogate
//!
//! [refined]
//! base_dim = 48
//! guided_dim = 12
//! mu = 1.0
//!
//! [model]
//! encoder = "attention"
//! user_variant = "sequence_refined"
//!
//! [train]
//! epochs = 20
//!
//! [out]
//! dir = "runs/planted"
//! ks = [1, 5, 10, 20]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::aspects::Domain;
use crate::corpus::{FilterConfig, SyntheticSpec};
use crate::scorer::{FinetuneConfig, ScoringOptions, LAMBDA_BAD, LAMBDA_OK};
use crate::seqrec::{EncoderKind, UserVariant, DEFAULT_MAX_SEQ_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Independent replicates; each seeds model init, table init and
    /// batch order.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    #[serde(default)]
    pub catalog: CatalogConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub refined: RefinedSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub finetune: FinetuneSection,
    #[serde(default)]
    pub out: OutConfig,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

/// Where interactions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    /// Planted-preference generator.
    Synthetic(SyntheticSection),
    /// Review and metadata JSON-lines files, k-core filtered.
    Files(FilesSection),
    /// A dataset archive written by `synth` or `ingest`.
    Archive(ArchiveSection),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub num_users: usize,
    pub num_items: usize,
    pub m: usize,
    pub seq_len_min: usize,
    pub seq_len_max: usize,
    pub noise_scale: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let spec = SyntheticSpec::default();
        Self {
            num_users: spec.num_users,
            num_items: spec.num_items,
            m: spec.m,
            seq_len_min: spec.seq_len_min,
            seq_len_max: spec.seq_len_max,
            noise_scale: spec.noise_scale,
            temperature: spec.temperature,
            seed: spec.seed,
        }
    }
}

impl SyntheticSection {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            num_users: self.num_users,
            num_items: self.num_items,
            m: self.m,
            seq_len_min: self.seq_len_min,
            seq_len_max: self.seq_len_max,
            noise_scale: self.noise_scale,
            temperature: self.temperature,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesSection {
    pub reviews: PathBuf,
    pub metadata: PathBuf,
    #[serde(default = "five")]
    pub min_item_interactions: usize,
    #[serde(default = "five")]
    pub min_user_interactions: usize,
}

fn five() -> usize {
    5
}

impl FilesSection {
    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            min_item_interactions: self.min_item_interactions,
            min_user_interactions: self.min_user_interactions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogConfig {
    /// movies | clothing | games | generic
    pub domain: String,
    /// JSON array of `{name, description}`; overrides `domain`.
    pub file: Option<PathBuf>,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            domain: Domain::Movies.to_string(),
            file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    Mock,
    Oracle,
    Http,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendChoice,
    /// Seed of the deterministic mock.
    pub seed: u64,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: f64,
    /// JSON-lines score cache, read before and written after scoring.
    pub cache: Option<PathBuf>,
    pub max_in_flight: usize,
    pub format_retries: usize,
    pub max_reviews: usize,
    /// Largest tolerated share of unscorable items or users; they fall back
    /// to the item-corpus mean.
    pub exclusion_budget: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let options = ScoringOptions::default();
        Self {
            kind: BackendChoice::Oracle,
            seed: 0,
            endpoint: None,
            model: None,
            temperature: 0.0,
            cache: None,
            max_in_flight: options.max_in_flight,
            format_retries: options.format_retries,
            max_reviews: options.max_reviews,
            exclusion_budget: 0.0,
        }
    }
}

impl BackendConfig {
    pub fn scoring_options(&self) -> ScoringOptions {
        ScoringOptions {
            format_retries: self.format_retries,
            max_in_flight: self.max_in_flight,
            max_reviews: self.max_reviews,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinedSection {
    /// When false both arms are pure-base models of the same total size.
    pub enabled: bool,
    pub base_dim: usize,
    pub guided_dim: usize,
    pub mu: f64,
}

impl Default for RefinedSection {
    fn default() -> Self {
        Self {
            enabled: true,
            base_dim: 48,
            guided_dim: 12,
            mu: 1.0,
        }
    }
}

impl RefinedSection {
    /// Embedding size of the Base arm.
    pub fn total_dim(&self) -> usize {
        self.base_dim + self.guided_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub encoder: EncoderKind,
    pub user_variant: UserVariant,
    pub max_seq_len: usize,
    pub num_heads: usize,
    pub dropout: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::Attention,
            user_variant: UserVariant::ConcatUser,
            max_seq_len: DEFAULT_MAX_SEQ_LEN,
            num_heads: 1,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 0.0,
        }
    }
}

/// Settings of the like/dislike fine-tune used by the task ablation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSection {
    pub like_threshold: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub lambda_ok: f64,
    pub lambda_bad: f64,
    pub weight_decay: f64,
    /// Labeled pairs drawn per user on planted data.
    pub pairs_per_user: usize,
    /// Share of users whose pairs are held out for AUC.
    pub held_out_fraction: f64,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        let defaults = FinetuneConfig::default();
        Self {
            like_threshold: defaults.like_threshold,
            epochs: defaults.epochs,
            learning_rate: defaults.learning_rate,
            batch_size: defaults.batch_size,
            seed: defaults.seed,
            lambda_ok: LAMBDA_OK,
            lambda_bad: LAMBDA_BAD,
            weight_decay: defaults.weight_decay,
            pairs_per_user: 40,
            held_out_fraction: 0.2,
        }
    }
}

impl FinetuneSection {
    pub fn finetune_config(&self) -> FinetuneConfig {
        FinetuneConfig {
            like_threshold: self.like_threshold,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed: self.seed,
            lambda_ok: self.lambda_ok,
            lambda_bad: self.lambda_bad,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutConfig {
    /// Report directory; nothing is written when absent.
    pub dir: Option<PathBuf>,
    pub ks: Vec<usize>,
}

impl Default for OutConfig {
    fn default() -> Self {
        Self {
            dir: None,
            ks: vec![1, 5, 10, 20],
        }
    }
}

impl ExperimentConfig {
    /// Defaults everywhere except the data source.
    pub fn with_data(data: DataConfig) -> Self {
        Self {
            seeds: default_seeds(),
            data,
            catalog: CatalogConfig::default(),
            backend: BackendConfig::default(),
            refined: RefinedSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            finetune: FinetuneSection::default(),
            out: OutConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// The config as recorded in reports: everything that shapes results,
    /// without the output location.
    pub fn recorded(&self) -> Self {
        let mut config = self.clone();
        config.out.dir = None;
        config
    }

    /// SHA-256 over the canonical JSON form of [`Self::recorded`].
    pub fn fingerprint(&self) -> String {
        let body = serde_json::to_string(&self.recorded()).expect("config serializes");
        hex::encode(Sha256::digest(body.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        let r = &self.refined;
        if r.base_dim == 0 || r.guided_dim == 0 {
            return bad("refined.base_dim and refined.guided_dim must be >= 1".into());
        }
        if !(r.mu > 0.0) {
            return bad(format!("refined.mu must be > 0, got {}", r.mu));
        }
        if self.train.batch_size == 0
            || !(self.train.learning_rate > 0.0)
            || self.train.weight_decay < 0.0
        {
            return bad("train needs batch_size >= 1, learning_rate > 0, weight_decay >= 0".into());
        }
        if self.out.ks.is_empty() || self.out.ks.contains(&0) {
            return bad("out.ks must be non-empty and positive".into());
        }
        if !(0.0..=1.0).contains(&self.backend.exclusion_budget) {
            return bad("backend.exclusion_budget must lie in [0, 1]".into());
        }
        if !(self.finetune.held_out_fraction > 0.0 && self.finetune.held_out_fraction < 1.0) {
            return bad("finetune.held_out_fraction must lie in (0, 1)".into());
        }
        if let DataConfig::Synthetic(s) = &self.data {
            if s.m < r.guided_dim && self.catalog.file.is_none() {
                // The oracle emits the first `guided_dim` planted aspects.
                return bad(format!(
                    "synthetic data plants {} aspects but refined.guided_dim is {}",
                    s.m, r.guided_dim
                ));
            }
        }
        if self.backend.kind == BackendChoice::Http && self.backend.endpoint.is_none() {
            return bad("backend.kind = \"http\" needs backend.endpoint".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let config = ExperimentConfig::from_toml("[data]\nsource = \"synthetic\"\n").unwrap();
        assert_eq!(config.seeds, [0, 1, 2, 3, 4]);
        assert_eq!(config.refined.total_dim(), 60);
        assert_eq!(
            config.data,
            DataConfig::Synthetic(SyntheticSection::default())
        );
        assert_eq!(config.out.ks, [1, 5, 10, 20]);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in [
            "[data]\nsource = \"synthetic\"\nnum_userz = 3\n",
            "bogus = 1\n[data]\nsource = \"synthetic\"\n",
            "[data]\nsource = \"synthetic\"\n[train]\nepoch = 3\n",
            "[data]\nsource = \"nowhere\"\n",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn toml_round_trip_and_fingerprint() {
        let text = "seeds = [3]\n[data]\nsource = \"archive\"\npath = \"d.json\"\n[model]\nencoder = \"gru\"\n";
        let config = ExperimentConfig::from_toml(text).unwrap();
        let back = ExperimentConfig::from_toml(&config.to_toml()).unwrap();
        assert_eq!(back, config);
        assert_eq!(back.fingerprint(), config.fingerprint());
        let mut other = config.clone();
        other.seeds = vec![4];
        assert_ne!(other.fingerprint(), config.fingerprint());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(
            ExperimentConfig::from_toml("seeds = []\n[data]\nsource = \"synthetic\"\n").is_err()
        );
        assert!(ExperimentConfig::from_toml("[data]\nsource = \"synthetic\"\nm = 3\n").is_err());
        assert!(ExperimentConfig::from_toml(
            "[data]\nsource = \"synthetic\"\n[backend]\nkind = \"http\"\n"
        )
        .is_err());
    }
}
