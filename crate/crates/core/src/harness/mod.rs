//! Config-driven experiments: Base vs Refined comparisons, ablations and
//! per-aspect explanations.

mod ablation;
mod config;
mod explain;
mod pipeline;
mod reference;
mod report;

use thiserror::Error;

use crate::aspects::AspectError;
use crate::corpus::CorpusError;
use crate::guided::GuidedError;
use crate::metrics::MetricError;
use crate::scorer::{BackendError, FinetuneError, ScoreError};
use crate::seqrec::SeqrecError;

pub use ablation::{
    ablate_base_dim, ablate_finetune_task, ablate_guided_dim, ablate_mu, AblationReport,
    AblationRow, BaseDimReport, BaseDimRow, TaskAblationReport,
};
pub use config::{
    ArchiveSection, BackendChoice, BackendConfig, CatalogConfig, DataConfig, ExperimentConfig,
    FilesSection, FinetuneSection, ModelSection, OutConfig, RefinedSection, SyntheticSection,
    TrainSection,
};
pub use explain::{interpretability_report, AspectExplanation, InterpretabilityReport};
pub use pipeline::{
    build_backend, fit_item_normalizer, prepare_data, render_prompts, resolve_catalog,
    run_experiment, score_subjects, ArmResult, ComparisonReport, GuidedInputs, PreparedData,
    ScoringSummary, SeedComparison,
};
pub use reference::{reference_rows, ReferenceRow};
pub use report::{
    load_guided_inputs, render_ablation, render_base_dim, render_comparison, render_task_ablation,
    write_ablation, write_base_dim, write_comparison, write_task_ablation, write_text_and_json,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{excluded} of {total} {kind} were unscorable, above the exclusion budget {budget}")]
    ScoringBudget {
        kind: &'static str,
        excluded: usize,
        total: usize,
        budget: f64,
    },
    #[error("unknown {kind} id {id:?}")]
    UnknownId { kind: &'static str, id: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Aspect(#[from] AspectError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Guided(#[from] GuidedError),
    #[error(transparent)]
    Seqrec(#[from] SeqrecError),
    #[error(transparent)]
    Finetune(#[from] FinetuneError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}
