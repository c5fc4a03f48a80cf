//! Aspect scoring: backends, rule-based parsing, caching and the
//! surrogate fine-tuning loop.

mod backend;
mod cache;
mod finetune;
mod http;
mod parse;
mod score;
mod surrogate;

pub use backend::{mock_scores, BackendError, BackendKind, ScorerBackend, Subject, SubjectKind};
pub use cache::{cache_load, cache_store, subject_fingerprint, CacheEntry, CacheKey, ScoreCache};
pub use finetune::{
    composite_finetune_loss, finetune_classification, format_loss_diag, like_labels,
    ClassificationTask, FinetuneConfig, FinetuneError, FinetuneOutcome, LAMBDA_BAD, LAMBDA_OK,
};
pub use http::{HttpChatBackend, HttpChatConfig, API_KEY_ENV};
pub use parse::{
    parse_scores, render_score_block, FormatError, FormatReport, ParsedScores, SCORE_MAX, SCORE_MIN,
};
pub use score::{
    score_item, score_many, score_prompt, score_user, GuidedScores, ScoreError, ScoringOptions,
};
pub use surrogate::{hashed_features, SparseFeatures, SurrogateScorer, FEATURE_BUCKETS};
