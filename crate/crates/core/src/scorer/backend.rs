//! Scoring backends: an OpenAI-style chat endpoint plus three local
//! deterministic stand-ins.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::http::{HttpChatBackend, HttpChatConfig};
use super::parse::render_score_block;
use super::surrogate::SurrogateScorer;
use crate::aspects::{format_block_names, PromptPair};
use crate::corpus::PlantedTruth;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transient backend failure: {0}")]
    Retryable(String),
    #[error("backend failure: {0}")]
    Fatal(String),
    #[error("oracle has no planted scores for {0}")]
    UnknownSubject(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectKind {
    Item,
    User,
}

/// The item or user a prompt is about.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Subject {
    pub kind: SubjectKind,
    pub id: String,
}

impl Subject {
    pub fn item(id: impl Into<String>) -> Self {
        Self {
            kind: SubjectKind::Item,
            id: id.into(),
        }
    }

    pub fn user(id: impl Into<String>) -> Self {
        Self {
            kind: SubjectKind::User,
            id: id.into(),
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            SubjectKind::Item => "item",
            SubjectKind::User => "user",
        };
        write!(f, "{kind}:{}", self.id)
    }
}

pub enum BackendKind {
    HttpChat(HttpChatBackend),
    MockDeterministic { seed: u64 },
    PlantedOracle(Arc<PlantedTruth>),
    TrainableSurrogate(Arc<SurrogateScorer>),
}

/// A scoring backend with a request counter.
pub struct ScorerBackend {
    kind: BackendKind,
    fingerprint: String,
    requests: AtomicUsize,
}

impl fmt::Debug for ScorerBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScorerBackend")
            .field("kind", &self.kind_name())
            .field("fingerprint", &self.fingerprint)
            .finish()
    }
}

fn digest(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p);
    }
    hex::encode(hasher.finalize())
}

impl ScorerBackend {
    fn with_kind(kind: BackendKind, fingerprint: String) -> Self {
        Self {
            kind,
            fingerprint,
            requests: AtomicUsize::new(0),
        }
    }

    pub fn http_chat(config: HttpChatConfig) -> Result<Self, BackendError> {
        let fp = digest(&[
            b"http_chat",
            config.endpoint.as_bytes(),
            config.model.as_bytes(),
            &config.temperature.to_le_bytes(),
        ]);
        Ok(Self::with_kind(
            BackendKind::HttpChat(HttpChatBackend::new(config)?),
            fp,
        ))
    }

    pub fn mock(seed: u64) -> Self {
        Self::with_kind(
            BackendKind::MockDeterministic { seed },
            digest(&[b"mock_deterministic", &seed.to_le_bytes()]),
        )
    }

    pub fn oracle(truth: Arc<PlantedTruth>) -> Self {
        let body = serde_json::to_vec(truth.as_ref()).expect("truth serializes");
        Self::with_kind(
            BackendKind::PlantedOracle(truth),
            digest(&[b"planted_oracle", &body]),
        )
    }

    pub fn surrogate(scorer: Arc<SurrogateScorer>) -> Self {
        let fp = digest(&[b"trainable_surrogate", scorer.fingerprint().as_bytes()]);
        Self::with_kind(BackendKind::TrainableSurrogate(scorer), fp)
    }

    pub fn kind(&self) -> &BackendKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            BackendKind::HttpChat(_) => "http_chat",
            BackendKind::MockDeterministic { .. } => "mock_deterministic",
            BackendKind::PlantedOracle(_) => "planted_oracle",
            BackendKind::TrainableSurrogate(_) => "trainable_surrogate",
        }
    }

    /// Identity hash; changes whenever responses could change.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Number of requests issued so far.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    /// Sends one prompt and returns the raw response text.
    pub fn request(&self, subject: &Subject, prompt: &PromptPair) -> Result<String, BackendError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        match &self.kind {
            BackendKind::HttpChat(client) => client.complete(prompt),
            BackendKind::MockDeterministic { seed } => {
                let names = format_block_names(&prompt.system);
                let scores = mock_scores(prompt, *seed, names.len());
                Ok(render_score_block(
                    names.iter().map(String::as_str),
                    &scores,
                ))
            }
            BackendKind::PlantedOracle(truth) => {
                let planted = match subject.kind {
                    SubjectKind::Item => truth.item_aspects.get(&subject.id),
                    SubjectKind::User => truth.user_prefs.get(&subject.id),
                }
                .ok_or_else(|| BackendError::UnknownSubject(subject.to_string()))?;
                let names = format_block_names(&prompt.system);
                let rounded: Vec<f64> =
                    planted.iter().map(|v| v.round().clamp(1.0, 10.0)).collect();
                Ok(render_score_block(
                    names.iter().map(String::as_str),
                    &rounded,
                ))
            }
            BackendKind::TrainableSurrogate(scorer) => Ok(scorer.emit(prompt)),
        }
    }
}

/// Integer scores in `1..=10` derived from a hash of the prompt and seed.
pub fn mock_scores(prompt: &PromptPair, seed: u64, m: usize) -> Vec<f64> {
    let base = digest(&[
        &seed.to_le_bytes(),
        prompt.system.as_bytes(),
        prompt.user.as_bytes(),
    ]);
    (0..m)
        .map(|j| {
            let h = digest(&[base.as_bytes(), &(j as u64).to_le_bytes()]);
            let v = u64::from_str_radix(&h[..12], 16).expect("hex digest");
            1.0 + (v % 10) as f64
        })
        .collect()
}
