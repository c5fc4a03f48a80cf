//! Plain-text tables and JSON files for every report kind.
//!
//! Text output contains only values derived from the config and seeds, so
//! repeated runs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::ablation::{AblationReport, BaseDimReport, TaskAblationReport};
use super::pipeline::{ComparisonReport, GuidedInputs};
use super::reference::reference_rows;
use super::HarnessError;
use crate::guided::save_normalizer;
use crate::metrics::{format_improvement, MetricReport};

fn io_error(path: &Path, e: impl ToString) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), HarnessError> {
    fs::write(path, body).map_err(|e| io_error(path, e))
}

fn to_json(value: &impl Serialize) -> String {
    let mut body = serde_json::to_string_pretty(value).expect("reports serialize");
    body.push('\n');
    body
}

/// Writes `<stem>.txt` and `<stem>.json` into `dir`, creating it if needed.
pub fn write_text_and_json(
    dir: &Path,
    stem: &str,
    text: &str,
    value: &impl Serialize,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    write_file(&dir.join(format!("{stem}.txt")), text)?;
    write_file(&dir.join(format!("{stem}.json")), &to_json(value))
}

pub fn load_guided_inputs(path: &Path) -> Result<GuidedInputs, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_error(path, e))
}

fn metric_table(out: &mut String, columns: &[&str], rows: &[(String, Vec<String>)]) {
    let first = rows
        .iter()
        .map(|(n, _)| n.len())
        .max()
        .unwrap_or(0)
        .max("Metric".len());
    let widths: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(c, h)| {
            rows.iter()
                .map(|(_, v)| v[c].len())
                .max()
                .unwrap_or(0)
                .max(h.len())
        })
        .collect();
    let _ = write!(out, "{:<first$}", "Metric");
    for (h, w) in columns.iter().zip(&widths) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for (name, values) in rows {
        let _ = write!(out, "{name:<first$}");
        for (v, w) in values.iter().zip(&widths) {
            let _ = write!(out, "  {v:>w$}");
        }
        out.push('\n');
    }
}

fn base_ref_imp_rows(base: &MetricReport, refined: &MetricReport) -> Vec<(String, Vec<String>)> {
    let imp = crate::metrics::improvement(base, refined);
    base.rows()
        .into_iter()
        .zip(refined.rows())
        .map(|((name, b), (_, r))| {
            let i = format_improvement(imp.get(&name).copied().flatten());
            (name, vec![format!("{b:.4}"), format!("{r:.4}"), i])
        })
        .collect()
}

fn seeds_line(seeds: &[u64]) -> String {
    seeds
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

fn setup_lines(out: &mut String, report: &ComparisonReport) {
    let c = &report.config;
    let r = &c.refined;
    let _ = writeln!(out, "config fingerprint: {}", report.config_fingerprint);
    let _ = writeln!(
        out,
        "encoder: {}, user variant: {}, epochs: {}, learning rate: {}, weight decay: {}",
        c.model.encoder,
        c.model.user_variant,
        c.train.epochs,
        c.train.learning_rate,
        c.train.weight_decay
    );
    if r.enabled {
        let _ = writeln!(
            out,
            "Base.: {} base dims | Ref.: {} base + {} guided dims, mu = {}",
            r.total_dim(),
            r.base_dim,
            r.guided_dim,
            r.mu
        );
    } else {
        let _ = writeln!(
            out,
            "guided refinement disabled: both arms use {} base dims",
            r.total_dim()
        );
    }
    let s = &report.scoring;
    let _ = writeln!(
        out,
        "scoring backend: {} ({} items, {} users scored; {} items and {} users imputed)",
        s.backend,
        s.items_scored,
        s.users_scored,
        s.excluded_items.len(),
        s.excluded_users.len()
    );
    let _ = writeln!(out, "aspects: {}", s.aspects.join(", "));
    if !s.degenerate_aspects.is_empty() {
        let _ = writeln!(
            out,
            "constant aspects (mapped to 0): {}",
            s.degenerate_aspects.join(", ")
        );
    }
    let _ = writeln!(out, "seeds: {}", seeds_line(&report.seeds()));
}

/// Base./Ref./Imp. table for the seed means, a per-seed MRR table and the
/// full-scale reference annotations.
pub fn render_comparison(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Base vs refined embeddings ({})", report.label);
    setup_lines(&mut out, report);
    let _ = writeln!(
        out,
        "\nMean over {} seeds ({} test users)",
        report.per_seed.len(),
        report.mean_base.n_users
    );
    metric_table(
        &mut out,
        &["Base.", "Ref.", "Imp."],
        &base_ref_imp_rows(&report.mean_base, &report.mean_refined),
    );

    let _ = writeln!(
        out,
        "\nPer-seed MRR (Ref. ahead in {} of {})",
        report.wins("MRR"),
        report.per_seed.len()
    );
    let rows: Vec<(String, Vec<String>)> = report
        .per_seed
        .iter()
        .map(|s| {
            (
                format!("seed {}", s.seed),
                vec![
                    format!("{:.4}", s.base.metrics.mrr),
                    format!("{:.4}", s.refined.metrics.mrr),
                    format_improvement(s.improvement.get("MRR").copied().flatten()),
                ],
            )
        })
        .collect();
    metric_table(&mut out, &["Base.", "Ref.", "Imp."], &rows);

    let _ = writeln!(
        out,
        "\nReference: published full-scale results on Amazon review data (not reproduced at this scale)"
    );
    let rows: Vec<(String, Vec<String>)> = reference_rows()
        .iter()
        .map(|r| {
            (
                format!("{} {} {}", r.dataset, r.model, r.metric),
                vec![
                    format!("{:.4}", r.base),
                    format!("{:.4}", r.refined),
                    format!("{:.2}%", r.printed_improvement),
                ],
            )
        })
        .collect();
    metric_table(&mut out, &["Base.", "Ref.", "Imp."], &rows);
    out
}

/// Writes `report.txt`, `report.json`, `guided_scores.json` and
/// `normalizer.json` into `dir`.
pub fn write_comparison(
    dir: &Path,
    report: &ComparisonReport,
    guided: &GuidedInputs,
) -> Result<(), HarnessError> {
    write_text_and_json(dir, "report", &render_comparison(report), report)?;
    write_file(&dir.join("guided_scores.json"), &to_json(guided))?;
    let normalizer =
        super::pipeline::fit_item_normalizer(guided, report.config.refined.total_dim())?;
    save_normalizer(dir.join("normalizer.json"), &normalizer)?;
    Ok(())
}

pub fn render_ablation(report: &AblationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Ablation over {}", report.parameter);
    let _ = writeln!(out, "config fingerprint: {}", report.config_fingerprint);
    let _ = writeln!(out, "seeds: {}", seeds_line(&report.seeds));
    let metrics: Vec<String> = report
        .rows
        .first()
        .map(|r| r.mean_base.rows().into_iter().map(|(n, _)| n).collect())
        .unwrap_or_default();

    let _ = writeln!(out, "\nMRR of the seed means");
    let rows: Vec<(String, Vec<String>)> = report
        .rows
        .iter()
        .map(|r| {
            (
                format!("{} = {}", report.parameter, r.value),
                vec![
                    format!("{:.4}", r.mean_base.mrr),
                    format!("{:.4}", r.mean_refined.mrr),
                    format_improvement(r.improvement.get("MRR").copied().flatten()),
                    format!("{}/{}", r.mrr_wins, report.seeds.len()),
                ],
            )
        })
        .collect();
    metric_table(&mut out, &["Base.", "Ref.", "Imp.", "Wins"], &rows);

    let _ = writeln!(out, "\nImprovement of Ref. over Base. per metric");
    let columns: Vec<String> = report.rows.iter().map(|r| format!("{}", r.value)).collect();
    let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows: Vec<(String, Vec<String>)> = metrics
        .iter()
        .map(|m| {
            (
                m.clone(),
                report
                    .rows
                    .iter()
                    .map(|r| format_improvement(r.improvement.get(m).copied().flatten()))
                    .collect(),
            )
        })
        .collect();
    metric_table(&mut out, &column_refs, &rows);
    out
}

pub fn write_ablation(dir: &Path, stem: &str, report: &AblationReport) -> Result<(), HarnessError> {
    write_text_and_json(dir, stem, &render_ablation(report), report)
}

pub fn render_base_dim(report: &BaseDimReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Pure base embeddings of varying size vs the refined reference"
    );
    let _ = writeln!(out, "config fingerprint: {}", report.config_fingerprint);
    let _ = writeln!(out, "seeds: {}", seeds_line(&report.seeds));
    let _ = writeln!(
        out,
        "reference Ref.({}): {} base + {} guided dims; values are seed means divided by the reference",
        report.reference_base_dim + report.reference_guided_dim,
        report.reference_base_dim,
        report.reference_guided_dim
    );
    let mut columns: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("Base.({})", r.dim))
        .collect();
    columns.push(format!(
        "Ref.({})",
        report.reference_base_dim + report.reference_guided_dim
    ));
    let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows: Vec<(String, Vec<String>)> = report
        .reference
        .rows()
        .into_iter()
        .map(|(name, _)| {
            let mut values: Vec<String> = report
                .rows
                .iter()
                .map(|r| {
                    r.normalized
                        .get(&name)
                        .map_or("n/a".to_string(), |v| format!("{v:.4}"))
                })
                .collect();
            values.push(
                report
                    .reference_normalized
                    .get(&name)
                    .map_or("n/a".to_string(), |v| format!("{v:.4}")),
            );
            (name, values)
        })
        .collect();
    metric_table(&mut out, &column_refs, &rows);

    let _ = writeln!(out, "\nAbsolute MRR");
    let mut rows: Vec<(String, Vec<String>)> = report
        .rows
        .iter()
        .map(|r| {
            (
                format!("Base.({})", r.dim),
                vec![format!("{:.4}", r.metrics.mrr)],
            )
        })
        .collect();
    rows.push((
        columns.last().cloned().unwrap_or_default(),
        vec![format!("{:.4}", report.reference.mrr)],
    ));
    metric_table(&mut out, &["MRR"], &rows);
    out
}

pub fn write_base_dim(dir: &Path, report: &BaseDimReport) -> Result<(), HarnessError> {
    write_text_and_json(dir, "ablation_base_dim", &render_base_dim(report), report)
}

pub fn render_task_ablation(report: &TaskAblationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Guided scores from the base path vs a like/dislike fine-tuned scorer"
    );
    let _ = writeln!(out, "config fingerprint: {}", report.config_fingerprint);
    let _ = writeln!(out, "seeds: {}", seeds_line(&report.seeds));
    let _ = writeln!(
        out,
        "Ref.(base): {} scores; Ref.(cls): scores from the fine-tuned surrogate",
        report.base_backend
    );
    let _ = writeln!(
        out,
        "classification AUC on {} held-out pairs: {:.4} before, {:.4} after fine-tuning ({} training pairs)",
        report.held_out_pairs, report.auc_before, report.auc_after, report.train_pairs
    );
    let _ = writeln!(out);
    let imp_base = crate::metrics::improvement(&report.base, &report.ref_base);
    let imp_cls = crate::metrics::improvement(&report.base, &report.ref_cls);
    let rows: Vec<(String, Vec<String>)> = report
        .base
        .rows()
        .into_iter()
        .zip(report.ref_base.rows())
        .zip(report.ref_cls.rows())
        .map(|(((name, b), (_, rb)), (_, rc))| {
            let ib = format_improvement(imp_base.get(&name).copied().flatten());
            let ic = format_improvement(imp_cls.get(&name).copied().flatten());
            (
                name,
                vec![
                    format!("{b:.4}"),
                    format!("{rb:.4}"),
                    format!("{rc:.4}"),
                    ib,
                    ic,
                ],
            )
        })
        .collect();
    metric_table(
        &mut out,
        &[
            "Base.",
            "Ref.(base)",
            "Ref.(cls)",
            "Imp.(base)",
            "Imp.(cls)",
        ],
        &rows,
    );
    out
}

pub fn write_task_ablation(dir: &Path, report: &TaskAblationReport) -> Result<(), HarnessError> {
    write_text_and_json(dir, "ablation_task", &render_task_ablation(report), report)
}
