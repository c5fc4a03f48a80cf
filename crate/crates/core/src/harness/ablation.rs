//! Sweeps over guided size, base size, mu and the scorer's training task.

use std::collections::BTreeMap;
use std::sync::Arc;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BackendChoice, ExperimentConfig};
use super::pipeline::{
    build_backend, catalog_capacity, compare, prepare_data, resolve_catalog, run_arm,
    score_subjects, Arm, BaseMemo, ComparisonReport, PreparedData,
};
use super::HarnessError;
use crate::corpus::{planted_pairs, LabeledPair};
use crate::metrics::MetricReport;
use crate::scorer::{finetune_classification, ClassificationTask, ScorerBackend, SurrogateScorer};

/// One row of a guided-dim or mu sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: f64,
    pub config_fingerprint: String,
    pub mean_base: MetricReport,
    pub mean_refined: MetricReport,
    /// Relative change of the seed means, in percent.
    pub improvement: BTreeMap<String, Option<f64>>,
    /// Seeds in which Ref. beat Base. on MRR.
    pub mrr_wins: usize,
    /// `(seed, base MRR, refined MRR)`.
    pub per_seed_mrr: Vec<(u64, f64, f64)>,
}

impl AblationRow {
    fn from_comparison(value: f64, report: &ComparisonReport) -> Self {
        Self {
            value,
            config_fingerprint: report.config_fingerprint.clone(),
            mean_base: report.mean_base.clone(),
            mean_refined: report.mean_refined.clone(),
            improvement: report.improvement.clone(),
            mrr_wins: report.wins("MRR"),
            per_seed_mrr: report
                .per_seed
                .iter()
                .map(|s| (s.seed, s.base.metrics.mrr, s.refined.metrics.mrr))
                .collect(),
        }
    }

    pub fn mrr_improvement(&self) -> Option<f64> {
        self.improvement.get("MRR").copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub parameter: String,
    pub config_fingerprint: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, value: f64) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.value == value)
    }
}

fn full_catalog_size(
    config: &ExperimentConfig,
    data: &PreparedData,
) -> Result<usize, HarnessError> {
    let size = catalog_capacity(config)?.unwrap_or(usize::MAX);
    Ok(match &data.truth {
        Some(truth) if config.backend.kind == BackendChoice::Oracle => size.min(truth.m()),
        _ => size,
    })
}

/// Runs the comparison once per guided size `k`, keeping the total size
/// fixed by shrinking the base block; the catalog is cut to its first `k`
/// aspects.
pub fn ablate_guided_dim(
    config: &ExperimentConfig,
    dims: &[usize],
) -> Result<AblationReport, HarnessError> {
    config.validate()?;
    let data = prepare_data(&config.data)?;
    let total = config.refined.total_dim();
    let m = full_catalog_size(config, &data)?;
    for &k in dims {
        if k == 0 || k > m || k >= total {
            return Err(HarnessError::Config(format!(
                "guided dim {k} must lie in 1..={} (catalog size {m}, total dim {total})",
                m.min(total - 1)
            )));
        }
    }
    let mut memo = BaseMemo::new();
    let mut rows = Vec::new();
    for &k in dims {
        let mut cfg = config.clone();
        cfg.refined.guided_dim = k;
        cfg.refined.base_dim = total - k;
        let catalog = resolve_catalog(&cfg)?;
        let backend = build_backend(&cfg, &data)?;
        let guided = score_subjects(&cfg, &data, &backend, &catalog)?;
        let report = compare(&cfg, &data, &guided, &format!("guided dim {k}"), &mut memo)?;
        info!(
            "guided dim {k}: MRR improvement {:?}",
            report.improvement.get("MRR")
        );
        rows.push(AblationRow::from_comparison(k as f64, &report));
    }
    Ok(AblationReport {
        parameter: "guided_dim".to_string(),
        config_fingerprint: config.fingerprint(),
        seeds: config.seeds.clone(),
        rows,
    })
}

/// Runs the comparison once per refinement weight; scores are computed once.
pub fn ablate_mu(
    config: &ExperimentConfig,
    values: &[f64],
) -> Result<AblationReport, HarnessError> {
    config.validate()?;
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(HarnessError::Config(format!(
            "mu values must be finite and > 0, got {v}"
        )));
    }
    let data = prepare_data(&config.data)?;
    let catalog = resolve_catalog(config)?;
    let backend = build_backend(config, &data)?;
    let guided = score_subjects(config, &data, &backend, &catalog)?;
    let mut memo = BaseMemo::new();
    let mut rows = Vec::new();
    for &mu in values {
        let mut cfg = config.clone();
        cfg.refined.mu = mu;
        let report = compare(&cfg, &data, &guided, &format!("mu {mu}"), &mut memo)?;
        info!(
            "mu {mu}: MRR improvement {:?}",
            report.improvement.get("MRR")
        );
        rows.push(AblationRow::from_comparison(mu, &report));
    }
    Ok(AblationReport {
        parameter: "mu".to_string(),
        config_fingerprint: config.fingerprint(),
        seeds: config.seeds.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseDimRow {
    pub dim: usize,
    /// Seed means.
    pub metrics: MetricReport,
    /// `metrics` divided by the refined reference, per metric.
    pub normalized: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseDimReport {
    pub config_fingerprint: String,
    pub seeds: Vec<u64>,
    pub reference_base_dim: usize,
    pub reference_guided_dim: usize,
    /// Seed-mean metrics of the refined reference.
    pub reference: MetricReport,
    pub reference_normalized: BTreeMap<String, f64>,
    pub rows: Vec<BaseDimRow>,
}

fn normalized(metrics: &MetricReport, reference: &MetricReport) -> BTreeMap<String, f64> {
    let reference: BTreeMap<String, f64> = reference.rows().into_iter().collect();
    metrics
        .rows()
        .into_iter()
        .filter_map(|(name, v)| {
            let r = *reference.get(&name)?;
            (r != 0.0).then(|| (name, v / r))
        })
        .collect()
}

/// Trains pure-base models of each size and the configured refined model,
/// and reports every metric relative to the refined one.
pub fn ablate_base_dim(
    config: &ExperimentConfig,
    dims: &[usize],
) -> Result<BaseDimReport, HarnessError> {
    config.validate()?;
    if dims.contains(&0) {
        return Err(HarnessError::Config("base dims must be >= 1".into()));
    }
    let data = prepare_data(&config.data)?;
    let catalog = resolve_catalog(config)?;
    let backend = build_backend(config, &data)?;
    let guided = score_subjects(config, &data, &backend, &catalog)?;
    let reference = compare(config, &data, &guided, "reference", &mut BaseMemo::new())?;

    let jobs: Vec<(usize, u64)> = dims
        .iter()
        .flat_map(|&d| config.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(dim, seed)| run_arm(config, &data, None, Arm::Base { dim }, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = dims
        .iter()
        .enumerate()
        .map(|(i, &dim)| {
            let per_seed: Vec<MetricReport> = results
                [i * config.seeds.len()..(i + 1) * config.seeds.len()]
                .iter()
                .map(|r| r.metrics.clone())
                .collect();
            let metrics = MetricReport::mean(&per_seed).expect("at least one seed");
            BaseDimRow {
                dim,
                normalized: normalized(&metrics, &reference.mean_refined),
                metrics,
            }
        })
        .collect();
    Ok(BaseDimReport {
        config_fingerprint: config.fingerprint(),
        seeds: config.seeds.clone(),
        reference_base_dim: config.refined.base_dim,
        reference_guided_dim: config.refined.guided_dim,
        reference_normalized: normalized(&reference.mean_refined, &reference.mean_refined),
        reference: reference.mean_refined,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAblationReport {
    pub config_fingerprint: String,
    pub seeds: Vec<u64>,
    /// Backend of the untrained path.
    pub base_backend: String,
    pub base: MetricReport,
    pub ref_base: MetricReport,
    pub ref_cls: MetricReport,
    pub auc_before: f64,
    pub auc_after: f64,
    pub train_pairs: usize,
    pub held_out_pairs: usize,
    pub finetune_loss_curve: Vec<f64>,
}

/// Like/dislike pairs: planted ratings of random items when the data has a
/// planted truth, otherwise the users' own training-split ratings.
fn labeled_pairs(config: &ExperimentConfig, data: &PreparedData) -> Vec<LabeledPair> {
    let f = &config.finetune;
    match &data.truth {
        Some(truth) => planted_pairs(truth, f.pairs_per_user, f.seed),
        None => data
            .split
            .users
            .iter()
            .flat_map(|u| {
                data.dataset.users[&u.user_id][..u.train_end]
                    .iter()
                    .map(|i| LabeledPair {
                        user_id: i.user_id.clone(),
                        item_id: i.item_id.clone(),
                        rating: i.rating,
                    })
            })
            .collect(),
    }
}

/// Holds out `fraction` of every user's pairs, so each user's scores are
/// fitted on some of their pairs and judged on the rest.
fn split_pairs(
    pairs: Vec<LabeledPair>,
    fraction: f64,
    seed: u64,
) -> (Vec<LabeledPair>, Vec<LabeledPair>) {
    let mut by_user: BTreeMap<String, Vec<LabeledPair>> = BTreeMap::new();
    for p in pairs {
        by_user.entry(p.user_id.clone()).or_default().push(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut held_out) = (Vec::new(), Vec::new());
    for (_, mut group) in by_user {
        group.shuffle(&mut rng);
        let n_held = if group.len() < 2 {
            0
        } else {
            ((group.len() as f64 * fraction).round() as usize).clamp(1, group.len() - 1)
        };
        held_out.extend(group.drain(..n_held));
        train.extend(group);
    }
    (train, held_out)
}

/// Compares guided scores from the untrained path (planted oracle when the
/// data has a truth, the deterministic mock otherwise) with scores from a
/// surrogate fine-tuned on like/dislike classification against the frozen
/// untrained item scores. The fine-tuned surrogate then scores items and
/// users alike.
pub fn ablate_finetune_task(config: &ExperimentConfig) -> Result<TaskAblationReport, HarnessError> {
    config.validate()?;
    if config.backend.kind != BackendChoice::Surrogate {
        return Err(HarnessError::Config(
            "the task ablation needs backend.kind = \"surrogate\"".into(),
        ));
    }
    let data = prepare_data(&config.data)?;
    let catalog = resolve_catalog(config)?;
    let mut base_cfg = config.clone();
    base_cfg.backend.kind = if data.truth.is_some() {
        BackendChoice::Oracle
    } else {
        BackendChoice::Mock
    };
    let base_backend = build_backend(&base_cfg, &data)?;
    let guided_base = score_subjects(&base_cfg, &data, &base_backend, &catalog)?;

    let (train, held_out) = split_pairs(
        labeled_pairs(config, &data),
        config.finetune.held_out_fraction,
        config.finetune.seed,
    );
    let task = ClassificationTask {
        catalog: catalog.clone(),
        user_prompts: guided_base.user_prompts.clone(),
        item_scores: guided_base.items.clone(),
        train,
        held_out,
    };
    let outcome = finetune_classification(
        &SurrogateScorer::new(catalog.len()),
        &task,
        &config.finetune.finetune_config(),
    )?;
    info!(
        "classification fine-tune: AUC {:.4} -> {:.4}",
        outcome.auc_before, outcome.auc
    );
    let surrogate = ScorerBackend::surrogate(Arc::new(outcome.surrogate));
    let guided_cls = score_subjects(config, &data, &surrogate, &catalog)?;

    let mut memo = BaseMemo::new();
    let ref_base = compare(config, &data, &guided_base, "Ref.(base)", &mut memo)?;
    let ref_cls = compare(config, &data, &guided_cls, "Ref.(cls)", &mut memo)?;
    Ok(TaskAblationReport {
        config_fingerprint: config.fingerprint(),
        seeds: config.seeds.clone(),
        base_backend: guided_base.backend.clone(),
        base: ref_base.mean_base.clone(),
        ref_base: ref_base.mean_refined,
        ref_cls: ref_cls.mean_refined,
        auc_before: outcome.auc_before,
        auc_after: outcome.auc,
        train_pairs: task.train.len(),
        held_out_pairs: task.held_out.len(),
        finetune_loss_curve: outcome.loss_curve,
    })
}
