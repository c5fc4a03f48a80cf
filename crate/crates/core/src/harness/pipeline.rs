//! Data preparation, scoring and the Base-vs-Refined comparison.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BackendChoice, DataConfig, ExperimentConfig};
use super::HarnessError;
use crate::aspects::{
    builtin_catalog, generic_catalog, render_item_prompt, render_user_prompt, truncate_catalog,
};
use crate::aspects::{AspectCatalog, PromptPair};
use crate::corpus::{
    generate_synthetic, load_metadata, load_reviews, preprocess, read_archive, split_leave_one_out,
    Dataset, PlantedTruth, SplitDataset,
};
use crate::guided::{build_table, fit_normalizer, Normalizer, RefinedConfig, DEFAULT_EPSILON};
use crate::metrics::{improvement, MetricReport};
use crate::scorer::{
    cache_load, cache_store, score_many, HttpChatConfig, ScoreCache, ScorerBackend, Subject,
    SurrogateScorer,
};
use crate::seqrec::{evaluate, train, Model, ModelConfig, TrainConfig};

const MODEL_SALT: u64 = 0x6d6f_6465_6c00_0000;
const TABLE_SALT: u64 = 0x7461_626c_6500_0000;

/// A loaded dataset with its split and, for planted data, the truth.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: Dataset,
    pub split: SplitDataset,
    pub truth: Option<Arc<PlantedTruth>>,
}

pub fn prepare_data(config: &DataConfig) -> Result<PreparedData, HarnessError> {
    let (dataset, truth) = match config {
        DataConfig::Synthetic(section) => {
            let (dataset, truth) = generate_synthetic(&section.spec())?;
            (dataset, Some(truth))
        }
        DataConfig::Files(files) => {
            let reviews = load_reviews(&files.reviews)?;
            let metadata = load_metadata(&files.metadata)?;
            info!(
                "loaded {} reviews ({} malformed), {} items ({} malformed, {} duplicates)",
                reviews.records.len(),
                reviews.malformed,
                metadata.records.len(),
                metadata.malformed,
                metadata.duplicates
            );
            (
                preprocess(&reviews.records, &metadata.records, files.filter())?,
                None,
            )
        }
        DataConfig::Archive(archive) => {
            let archive = read_archive(&archive.path)?;
            (archive.dataset, archive.truth)
        }
    };
    let split = split_leave_one_out(&dataset);
    Ok(PreparedData {
        dataset,
        split,
        truth: truth.map(Arc::new),
    })
}

/// Number of aspects the configured catalog offers; `None` for the
/// generic catalog, which is generated at any size.
pub(crate) fn catalog_capacity(config: &ExperimentConfig) -> Result<Option<usize>, HarnessError> {
    Ok(match &config.catalog.file {
        Some(path) => Some(AspectCatalog::from_file(path)?.len()),
        None if config.catalog.domain.eq_ignore_ascii_case("generic") => None,
        None => Some(builtin_catalog(config.catalog.domain.parse()?)?.len()),
    })
}

/// The configured catalog cut to `guided_dim` aspects.
pub fn resolve_catalog(config: &ExperimentConfig) -> Result<AspectCatalog, HarnessError> {
    let k = config.refined.guided_dim;
    let full = match &config.catalog.file {
        Some(path) => AspectCatalog::from_file(path)?,
        None if config.catalog.domain.eq_ignore_ascii_case("generic") => generic_catalog(k)?,
        None => builtin_catalog(config.catalog.domain.parse()?)?,
    };
    Ok(truncate_catalog(&full, k)?)
}

pub fn build_backend(
    config: &ExperimentConfig,
    data: &PreparedData,
) -> Result<ScorerBackend, HarnessError> {
    let b = &config.backend;
    Ok(match b.kind {
        BackendChoice::Mock => ScorerBackend::mock(b.seed),
        BackendChoice::Oracle => {
            let truth = data.truth.clone().ok_or_else(|| {
                HarnessError::Config("the oracle backend needs planted data".into())
            })?;
            ScorerBackend::oracle(truth)
        }
        BackendChoice::Http => {
            let mut http = HttpChatConfig::new(
                b.endpoint.clone().expect("validated"),
                b.model.clone().unwrap_or_else(|| "default".to_string()),
            );
            http.temperature = b.temperature;
            ScorerBackend::http_chat(http)?
        }
        BackendChoice::Surrogate => {
            ScorerBackend::surrogate(Arc::new(SurrogateScorer::new(config.refined.guided_dim)))
        }
    })
}

/// Raw aspect scores (1-10) for every item and user, plus the prompts they
/// were produced from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidedInputs {
    pub aspects: Vec<String>,
    pub catalog_fingerprint: String,
    pub backend: String,
    pub items: BTreeMap<String, Vec<f64>>,
    pub users: BTreeMap<String, Vec<f64>>,
    /// Subjects that stayed unscorable and were imputed with the item mean.
    pub excluded_items: Vec<String>,
    pub excluded_users: Vec<String>,
    #[serde(skip)]
    pub user_prompts: BTreeMap<String, PromptPair>,
}

/// Prompts for every item and for every user's training history.
pub fn render_prompts(
    data: &PreparedData,
    catalog: &AspectCatalog,
    max_reviews: usize,
) -> (
    Vec<(Subject, PromptPair)>,
    Vec<(Subject, Option<PromptPair>)>,
) {
    let items = data
        .dataset
        .items
        .values()
        .map(|item| {
            (
                Subject::item(&item.item_id),
                render_item_prompt(item, catalog),
            )
        })
        .collect();
    let users = data
        .split
        .users
        .iter()
        .map(|user| {
            let history: Vec<_> = data.dataset.users[&user.user_id][..user.train_end]
                .iter()
                .map(|i| (i, &data.dataset.items[&i.item_id]))
                .collect();
            (
                Subject::user(&user.user_id),
                render_user_prompt(&history, catalog, max_reviews).ok(),
            )
        })
        .collect();
    (items, users)
}

/// Scores all items and users, reading and updating the configured cache.
pub fn score_subjects(
    config: &ExperimentConfig,
    data: &PreparedData,
    backend: &ScorerBackend,
    catalog: &AspectCatalog,
) -> Result<GuidedInputs, HarnessError> {
    let options = config.backend.scoring_options();
    let cache = match &config.backend.cache {
        Some(path) => {
            let (cache, corrupt) = cache_load(path).map_err(|e| io_error(path, e))?;
            if corrupt > 0 {
                warn!("{}: skipped {corrupt} corrupt cache lines", path.display());
            }
            cache
        }
        None => ScoreCache::default(),
    };
    let (item_prompts, user_prompts) = render_prompts(data, catalog, options.max_reviews);

    let scored_items = score_many(backend, &item_prompts, catalog, &cache, &options)?;
    let mut items = BTreeMap::new();
    let mut excluded_items = Vec::new();
    for ((subject, _), result) in item_prompts.iter().zip(scored_items) {
        match result {
            Ok(scores) => {
                items.insert(subject.id.clone(), scores.scores);
            }
            Err(e) => {
                warn!("excluding {subject}: {e}");
                excluded_items.push(subject.id.clone());
            }
        }
    }

    let renderable: Vec<(Subject, PromptPair)> = user_prompts
        .iter()
        .filter_map(|(s, p)| p.clone().map(|p| (s.clone(), p)))
        .collect();
    let scored_users = score_many(backend, &renderable, catalog, &cache, &options)?;
    let mut users = BTreeMap::new();
    let mut excluded_users: Vec<String> = user_prompts
        .iter()
        .filter(|(_, p)| p.is_none())
        .map(|(s, _)| s.id.clone())
        .collect();
    for ((subject, _), result) in renderable.iter().zip(scored_users) {
        match result {
            Ok(scores) => {
                users.insert(subject.id.clone(), scores.scores);
            }
            Err(e) => {
                warn!("excluding {subject}: {e}");
                excluded_users.push(subject.id.clone());
            }
        }
    }
    excluded_users.sort();

    let budget = config.backend.exclusion_budget;
    for (kind, excluded, total) in [
        ("items", excluded_items.len(), item_prompts.len()),
        ("users", excluded_users.len(), user_prompts.len()),
    ] {
        if total > 0 && excluded as f64 / total as f64 > budget {
            return Err(HarnessError::ScoringBudget {
                kind,
                excluded,
                total,
                budget,
            });
        }
    }
    if items.len() < 2 {
        return Err(HarnessError::ScoringBudget {
            kind: "items",
            excluded: excluded_items.len(),
            total: item_prompts.len(),
            budget,
        });
    }
    let mean = column_mean(items.values());
    for id in &excluded_items {
        items.insert(id.clone(), mean.clone());
    }
    for id in &excluded_users {
        users.insert(id.clone(), mean.clone());
    }

    if let Some(path) = &config.backend.cache {
        cache_store(&cache, path).map_err(|e| io_error(path, e))?;
    }
    info!(
        "scored {} items and {} users with {} ({} backend requests, {} cache hits)",
        items.len(),
        users.len(),
        backend.kind_name(),
        backend.request_count(),
        cache.hits()
    );
    Ok(GuidedInputs {
        aspects: catalog.names().map(str::to_string).collect(),
        catalog_fingerprint: catalog.fingerprint(),
        backend: backend.kind_name().to_string(),
        items,
        users,
        excluded_items,
        excluded_users,
        user_prompts: user_prompts
            .into_iter()
            .filter_map(|(s, p)| p.map(|p| (s.id, p)))
            .collect(),
    })
}

fn column_mean<'a>(rows: impl Iterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0.0;
    for row in rows {
        if sum.is_empty() {
            sum = vec![0.0; row.len()];
        }
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
        n += 1.0;
    }
    sum.into_iter().map(|s| s / n).collect()
}

fn io_error(path: &Path, e: impl ToString) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Item normalizer for a refined dimension of `base_dim + guided_dim`.
pub fn fit_item_normalizer(
    guided: &GuidedInputs,
    refined_dim: usize,
) -> Result<Normalizer, HarnessError> {
    let rows: Vec<Vec<f64>> = guided.items.values().cloned().collect();
    Ok(fit_normalizer(&rows, refined_dim, DEFAULT_EPSILON)?)
}

/// Outcome of training and evaluating one arm for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub metrics: MetricReport,
    pub final_loss: Option<f64>,
}

/// One arm: a pure-base table of `total_dim`, or a refined table.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Arm {
    Base { dim: usize },
    Refined { config: RefinedConfig },
}

pub(crate) fn run_arm(
    config: &ExperimentConfig,
    data: &PreparedData,
    guided: Option<(&GuidedInputs, &Normalizer)>,
    arm: Arm,
    seed: u64,
) -> Result<ArmResult, HarnessError> {
    let item_ids = data.dataset.item_ids();
    let (refined, table) = match arm {
        Arm::Base { dim } => {
            let refined = RefinedConfig::pure_base(dim)?;
            (
                refined,
                build_table(&item_ids, None, None, refined, seed ^ TABLE_SALT)?,
            )
        }
        Arm::Refined { config: refined } => {
            let (inputs, normalizer) =
                guided.ok_or_else(|| HarnessError::Config("refined arm without scores".into()))?;
            let mut table = build_table(
                &item_ids,
                Some(&inputs.items),
                Some(normalizer),
                refined,
                seed ^ TABLE_SALT,
            )?;
            table.attach_user_scores(&inputs.users)?;
            (refined, table)
        }
    };
    let m = &config.model;
    let mut model_config = ModelConfig::for_table(m.encoder, m.user_variant, &refined);
    model_config.max_seq_len = m.max_seq_len;
    model_config.num_heads = m.num_heads;
    model_config.dropout = m.dropout;
    let model = Model::new(model_config, &refined, seed ^ MODEL_SALT)?;
    let t = &config.train;
    let train_config = TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        learning_rate: t.learning_rate,
        seed,
        mu: refined.mu,
        guided_enabled: refined.guided_dim > 0,
        weight_decay: t.weight_decay,
    };
    let outcome = train(&model, &table, &data.split, &train_config)?;
    let metrics = evaluate(&outcome.model, &outcome.table, &data.split, &config.out.ks)?;
    Ok(ArmResult {
        metrics,
        final_loss: outcome.loss_curve.last().copied(),
    })
}

/// Base-arm results keyed by (seed, dimension), shared across the rows of
/// an ablation whose base arm does not change.
pub(crate) type BaseMemo = HashMap<(u64, usize), ArmResult>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub base: ArmResult,
    pub refined: ArmResult,
    pub improvement: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringSummary {
    pub backend: String,
    pub aspects: Vec<String>,
    pub catalog_fingerprint: String,
    pub items_scored: usize,
    pub users_scored: usize,
    pub excluded_items: Vec<String>,
    pub excluded_users: Vec<String>,
    pub degenerate_aspects: Vec<String>,
}

/// Base vs Refined over all seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub label: String,
    pub config_fingerprint: String,
    pub config: ExperimentConfig,
    pub scoring: ScoringSummary,
    pub per_seed: Vec<SeedComparison>,
    pub mean_base: MetricReport,
    pub mean_refined: MetricReport,
    /// Relative change of the seed-mean metrics, in percent.
    pub improvement: BTreeMap<String, Option<f64>>,
    /// Wall-clock time; kept out of report files so they stay reproducible.
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl ComparisonReport {
    pub fn seeds(&self) -> Vec<u64> {
        self.per_seed.iter().map(|s| s.seed).collect()
    }

    /// Seeds where Ref. beat Base. on `metric`.
    pub fn wins(&self, metric: &str) -> usize {
        self.per_seed
            .iter()
            .filter(|s| s.refined.metrics.get(metric) > s.base.metrics.get(metric))
            .count()
    }
}

/// Runs both arms for every seed on already-scored data.
pub(crate) fn compare(
    config: &ExperimentConfig,
    data: &PreparedData,
    guided: &GuidedInputs,
    label: &str,
    memo: &mut BaseMemo,
) -> Result<ComparisonReport, HarnessError> {
    let start = Instant::now();
    config.validate()?;
    let r = &config.refined;
    let total = r.total_dim();
    let normalizer = fit_item_normalizer(guided, total)?;
    let ref_arm = if r.enabled {
        Arm::Refined {
            config: RefinedConfig::new(r.base_dim, r.guided_dim, r.mu)?,
        }
    } else {
        Arm::Base { dim: total }
    };

    let mut jobs: Vec<(u64, bool)> = Vec::new();
    for &seed in &config.seeds {
        if !memo.contains_key(&(seed, total)) {
            jobs.push((seed, false));
        }
        jobs.push((seed, true));
    }
    let results: Vec<Result<ArmResult, HarnessError>> = jobs
        .par_iter()
        .map(|&(seed, is_ref)| {
            let arm = if is_ref {
                ref_arm
            } else {
                Arm::Base { dim: total }
            };
            run_arm(config, data, Some((guided, &normalizer)), arm, seed)
        })
        .collect();
    let mut refined_results = BTreeMap::new();
    for ((seed, is_ref), result) in jobs.into_iter().zip(results) {
        let result = result?;
        if is_ref {
            refined_results.insert(seed, result);
        } else {
            memo.insert((seed, total), result);
        }
    }

    let per_seed: Vec<SeedComparison> = config
        .seeds
        .iter()
        .map(|&seed| {
            let base = memo[&(seed, total)].clone();
            let refined = refined_results
                .remove(&seed)
                .expect("every seed has a refined run");
            SeedComparison {
                seed,
                improvement: improvement(&base.metrics, &refined.metrics),
                base,
                refined,
            }
        })
        .collect();
    let bases: Vec<MetricReport> = per_seed.iter().map(|s| s.base.metrics.clone()).collect();
    let refs: Vec<MetricReport> = per_seed.iter().map(|s| s.refined.metrics.clone()).collect();
    let mean_base = MetricReport::mean(&bases).expect("at least one seed");
    let mean_refined = MetricReport::mean(&refs).expect("at least one seed");
    let degenerate_aspects = normalizer
        .degenerate_dims()
        .into_iter()
        .map(|j| guided.aspects[j].clone())
        .collect();
    Ok(ComparisonReport {
        label: label.to_string(),
        config_fingerprint: config.fingerprint(),
        config: config.recorded(),
        scoring: ScoringSummary {
            backend: guided.backend.clone(),
            aspects: guided.aspects.clone(),
            catalog_fingerprint: guided.catalog_fingerprint.clone(),
            items_scored: guided.items.len() - guided.excluded_items.len(),
            users_scored: guided.users.len() - guided.excluded_users.len(),
            excluded_items: guided.excluded_items.clone(),
            excluded_users: guided.excluded_users.clone(),
            degenerate_aspects,
        },
        improvement: improvement(&mean_base, &mean_refined),
        mean_base,
        mean_refined,
        per_seed,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Prepares data, scores it and compares the arms. Report files are
/// written when `out.dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ComparisonReport, HarnessError> {
    let start = Instant::now();
    config.validate()?;
    let data = prepare_data(&config.data)?;
    let catalog = resolve_catalog(config)?;
    let backend = build_backend(config, &data)?;
    let guided = score_subjects(config, &data, &backend, &catalog)?;
    let mut report = compare(config, &data, &guided, "run", &mut BaseMemo::new())?;
    report.runtime_secs = start.elapsed().as_secs_f64();
    if let Some(dir) = &config.out.dir {
        super::report::write_comparison(dir, &report, &guided)?;
    }
    info!("experiment finished in {:.1}s", report.runtime_secs);
    Ok(report)
}
