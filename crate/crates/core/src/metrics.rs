//! Ranking and classification metrics.
//!
//! Every ranking metric here works on 1-based ranks of a single relevant
//! item per user, so NDCG has an ideal DCG of 1 and reduces to
//! `1 / log2(rank + 1)` inside the cutoff.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("rank list is empty")]
    EmptyRanks,
    #[error("rank must be >= 1, got {0}")]
    InvalidRank(usize),
    #[error("cutoff k must be >= 1")]
    InvalidCutoff,
    #[error("labels and scores differ in length ({labels} vs {scores})")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("AUC needs at least one positive and one negative label")]
    DegenerateLabels,
}

/// Aggregate ranking quality for one evaluation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mrr: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
    pub n_users: usize,
}

impl MetricReport {
    /// Builds a report from per-user ranks for the given cutoffs.
    pub fn from_ranks(ranks: &[usize], ks: &[usize]) -> Result<Self, MetricError> {
        let mrr = mrr(ranks)?;
        let mut recall_at = BTreeMap::new();
        let mut ndcg_at = BTreeMap::new();
        for &k in ks {
            recall_at.insert(k, recall_at_k(ranks, k)?);
            ndcg_at.insert(k, ndcg_at_k(ranks, k)?);
        }
        Ok(Self {
            mrr,
            recall_at,
            ndcg_at,
            n_users: ranks.len(),
        })
    }

    /// Metric rows in table order: MRR, Recall@k..., NDCG@k...
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![("MRR".to_string(), self.mrr)];
        rows.extend(
            self.recall_at
                .iter()
                .map(|(k, v)| (format!("Recall@{k}"), *v)),
        );
        rows.extend(self.ndcg_at.iter().map(|(k, v)| (format!("NDCG@{k}"), *v)));
        rows
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.rows()
            .into_iter()
            .find(|(name, _)| name == metric)
            .map(|(_, v)| v)
    }

    /// Element-wise mean of several reports with identical cutoffs.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let avg = |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let recall_at = first
            .recall_at
            .keys()
            .map(|k| (*k, avg(&|r: &MetricReport| r.recall_at[k])))
            .collect();
        let ndcg_at = first
            .ndcg_at
            .keys()
            .map(|k| (*k, avg(&|r: &MetricReport| r.ndcg_at[k])))
            .collect();
        Some(MetricReport {
            mrr: avg(&|r: &MetricReport| r.mrr),
            recall_at,
            ndcg_at,
            n_users: first.n_users,
        })
    }
}

fn check_ranks(ranks: &[usize]) -> Result<(), MetricError> {
    match ranks.iter().find(|&&r| r == 0) {
        Some(&r) => Err(MetricError::InvalidRank(r)),
        None => Ok(()),
    }
}

/// Mean reciprocal rank.
pub fn mrr(ranks: &[usize]) -> Result<f64, MetricError> {
    if ranks.is_empty() {
        return Err(MetricError::EmptyRanks);
    }
    check_ranks(ranks)?;
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of users whose relevant item sits in the top `k`.
pub fn recall_at_k(ranks: &[usize], k: usize) -> Result<f64, MetricError> {
    if k == 0 {
        return Err(MetricError::InvalidCutoff);
    }
    check_ranks(ranks)?;
    if ranks.is_empty() {
        return Ok(0.0);
    }
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    Ok(hits as f64 / ranks.len() as f64)
}

/// Binary-relevance NDCG with a single relevant item.
pub fn ndcg_at_k(ranks: &[usize], k: usize) -> Result<f64, MetricError> {
    if k == 0 {
        return Err(MetricError::InvalidCutoff);
    }
    check_ranks(ranks)?;
    if ranks.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = ranks
        .iter()
        .map(|&r| match r {
            // exact, so that NDCG@1 == Recall@1 bit for bit
            1 => 1.0,
            r if r <= k => 1.0 / ((r + 1) as f64).log2(),
            _ => 0.0,
        })
        .sum();
    Ok(total / ranks.len() as f64)
}

/// Area under the ROC curve in Mann-Whitney form; tied scores count one half.
pub fn auc_roc(labels: &[bool], scores: &[f64]) -> Result<f64, MetricError> {
    if labels.len() != scores.len() {
        return Err(MetricError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::DegenerateLabels);
    }

    // Sort once and assign average ranks to tie groups.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos = n_pos as f64;
    let u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg as f64))
}

/// Relative change of the refined arm over the base arm, in percent.
///
/// A zero base value has no defined relative change and maps to `None`.
pub fn improvement(base: &MetricReport, refined: &MetricReport) -> BTreeMap<String, Option<f64>> {
    let refined_rows: BTreeMap<String, f64> = refined.rows().into_iter().collect();
    base.rows()
        .into_iter()
        .filter_map(|(name, b)| {
            let r = *refined_rows.get(&name)?;
            let imp = if b == 0.0 {
                None
            } else {
                Some(100.0 * (r - b) / b)
            };
            Some((name, imp))
        })
        .collect()
}

/// Renders an improvement value as it appears in report tables.
pub fn format_improvement(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.2}%"),
        None => "n/a".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mrr_examples() {
        assert_eq!(mrr(&[1]).unwrap(), 1.0);
        assert_relative_eq!(mrr(&[1, 4, 2]).unwrap(), 1.75 / 3.0, epsilon = 1e-15);
        assert_eq!(mrr(&[]), Err(MetricError::EmptyRanks));
        assert_eq!(mrr(&[0]), Err(MetricError::InvalidRank(0)));
    }

    #[test]
    fn recall_inclusion_and_exclusion() {
        assert_eq!(recall_at_k(&[3], 5).unwrap(), 1.0);
        assert_eq!(recall_at_k(&[3], 2).unwrap(), 0.0);
        assert_eq!(recall_at_k(&[1, 2, 3, 10], 2).unwrap(), 0.5);
        assert_eq!(recall_at_k(&[1], 0), Err(MetricError::InvalidCutoff));
    }

    #[test]
    fn ndcg_closed_form() {
        assert_eq!(ndcg_at_k(&[1], 10).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&[3], 5).unwrap(), 0.5);
        assert_eq!(ndcg_at_k(&[6], 5).unwrap(), 0.0);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[true, false], &[0.9, 0.1]).unwrap(), 1.0);
        assert_eq!(
            auc_roc(&[true, false, true], &[0.3, 0.3, 0.3]).unwrap(),
            0.5
        );
        // pairs: (0.8>0.7),(0.8>0.5),(0.6<0.7),(0.6>0.5) -> 3/4
        let auc = auc_roc(&[true, false, true, false], &[0.8, 0.7, 0.6, 0.5]).unwrap();
        assert_eq!(auc, 0.75);
        assert_eq!(
            auc_roc(&[true, true], &[0.1, 0.2]),
            Err(MetricError::DegenerateLabels)
        );
    }

    #[test]
    fn improvement_guards_zero_base() {
        let mut base = MetricReport::from_ranks(&[1, 2], &[1, 5]).unwrap();
        let refined = base.clone();
        assert!(improvement(&base, &refined)
            .values()
            .all(|v| *v == Some(0.0)));

        base.mrr = 0.2054;
        let mut refined = base.clone();
        refined.mrr = 0.2227;
        let imp = improvement(&base, &refined)["MRR"].unwrap();
        assert_relative_eq!(imp, 8.4226, epsilon = 1e-3);

        let mut zero = base.clone();
        zero.recall_at.insert(1, 0.0);
        assert_eq!(improvement(&zero, &refined)["Recall@1"], None);
        assert_eq!(format_improvement(None), "n/a");
    }

    #[test]
    fn report_rows_order() {
        let report = MetricReport::from_ranks(&[1, 3, 30], &[1, 5, 10, 20]).unwrap();
        let names: Vec<_> = report.rows().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            [
                "MRR",
                "Recall@1",
                "Recall@5",
                "Recall@10",
                "Recall@20",
                "NDCG@1",
                "NDCG@5",
                "NDCG@10",
                "NDCG@20"
            ]
        );
        assert_eq!(report.recall_at[&1], report.ndcg_at[&1]);
    }
}
