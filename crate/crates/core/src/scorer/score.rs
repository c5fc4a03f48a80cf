//! Scoring items and users through a backend, with caching and retries.

use chrono::Utc;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{BackendError, ScorerBackend, Subject};
use super::cache::{subject_fingerprint, CacheEntry, CacheKey, ScoreCache};
use super::parse::{parse_scores, FormatReport};
use crate::aspects::{
    render_item_prompt, render_user_prompt, AspectCatalog, AspectError, PromptPair,
};
use crate::corpus::{Interaction, ItemRecord};

/// Aspect scores for one subject, before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidedScores {
    pub subject_id: String,
    pub scores: Vec<f64>,
    pub catalog_fingerprint: String,
    pub backend_fingerprint: String,
    pub raw_text: String,
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("{subject} stayed unscorable after {attempts} attempts (missing {:?})", report.missing_aspects)]
    Unscorable {
        subject: Subject,
        attempts: usize,
        report: FormatReport,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] AspectError),
    #[error("could not build scoring thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringOptions {
    /// Extra attempts after a malformed response.
    pub format_retries: usize,
    /// Upper bound on concurrently outstanding backend requests.
    pub max_in_flight: usize,
    pub max_reviews: usize,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            format_retries: 3,
            max_in_flight: 4,
            max_reviews: crate::aspects::DEFAULT_MAX_REVIEWS,
        }
    }
}

/// Scores one rendered prompt: cache lookup, then request and parse with
/// up to `format_retries` re-asks on malformed output.
pub fn score_prompt(
    backend: &ScorerBackend,
    subject: &Subject,
    prompt: &PromptPair,
    catalog: &AspectCatalog,
    cache: &ScoreCache,
    options: &ScoringOptions,
) -> Result<GuidedScores, ScoreError> {
    let key = CacheKey {
        subject_fingerprint: subject_fingerprint(subject, prompt),
        catalog_fingerprint: catalog.fingerprint(),
        backend_fingerprint: backend.fingerprint().to_string(),
    };
    if let Some(hit) = cache.get(&key) {
        return Ok(GuidedScores {
            subject_id: subject.id.clone(),
            scores: hit.scores,
            catalog_fingerprint: key.catalog_fingerprint,
            backend_fingerprint: key.backend_fingerprint,
            raw_text: hit.raw_text,
        });
    }

    let attempts = options.format_retries + 1;
    let mut last_report = FormatReport::default();
    for attempt in 1..=attempts {
        let raw = backend.request(subject, prompt)?;
        match parse_scores(&raw, catalog) {
            Ok(parsed) => {
                cache.insert(CacheEntry {
                    subject: subject.clone(),
                    key: key.clone(),
                    scores: parsed.values.clone(),
                    raw_text: raw.clone(),
                    created_at: Utc::now().to_rfc3339(),
                });
                return Ok(GuidedScores {
                    subject_id: subject.id.clone(),
                    scores: parsed.values,
                    catalog_fingerprint: key.catalog_fingerprint,
                    backend_fingerprint: key.backend_fingerprint,
                    raw_text: raw,
                });
            }
            Err(err) => {
                warn!("{subject}: malformed scores on attempt {attempt}/{attempts}: {err}");
                last_report = err.report;
            }
        }
    }
    Err(ScoreError::Unscorable {
        subject: subject.clone(),
        attempts,
        report: last_report,
    })
}

pub fn score_item(
    backend: &ScorerBackend,
    item: &ItemRecord,
    catalog: &AspectCatalog,
    cache: &ScoreCache,
    options: &ScoringOptions,
) -> Result<GuidedScores, ScoreError> {
    let prompt = render_item_prompt(item, catalog);
    score_prompt(
        backend,
        &Subject::item(&item.item_id),
        &prompt,
        catalog,
        cache,
        options,
    )
}

pub fn score_user(
    backend: &ScorerBackend,
    user_id: &str,
    history: &[(&Interaction, &ItemRecord)],
    catalog: &AspectCatalog,
    cache: &ScoreCache,
    options: &ScoringOptions,
) -> Result<GuidedScores, ScoreError> {
    let prompt = render_user_prompt(history, catalog, options.max_reviews)?;
    score_prompt(
        backend,
        &Subject::user(user_id),
        &prompt,
        catalog,
        cache,
        options,
    )
}

/// Scores many prompts with at most `options.max_in_flight` concurrent
/// requests. Results come back in input order.
pub fn score_many(
    backend: &ScorerBackend,
    requests: &[(Subject, PromptPair)],
    catalog: &AspectCatalog,
    cache: &ScoreCache,
    options: &ScoringOptions,
) -> Result<Vec<Result<GuidedScores, ScoreError>>, ScoreError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.max_in_flight.max(1))
        .build()
        .map_err(|e| ScoreError::Pool(e.to_string()))?;
    Ok(pool.install(|| {
        requests
            .par_iter()
            .map(|(subject, prompt)| {
                score_prompt(backend, subject, prompt, catalog, cache, options)
            })
            .collect()
    }))
}
