//! Per-aspect comparison of one user's and one item's guided scores.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::pipeline::GuidedInputs;
use super::HarnessError;
use crate::scorer::{SCORE_MAX, SCORE_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectExplanation {
    pub aspect: String,
    pub user_score: f64,
    pub item_score: f64,
    /// `|user - item| / 9`: 0 is perfect alignment, 1 the widest gap.
    pub normalized_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretabilityReport {
    pub user_id: String,
    pub item_id: String,
    pub aspects: Vec<AspectExplanation>,
}

impl InterpretabilityReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Aspect alignment of user {} and item {}",
            self.user_id, self.item_id
        );
        let width = self
            .aspects
            .iter()
            .map(|a| a.aspect.len())
            .max()
            .unwrap_or(0)
            .max("Aspect".len());
        let _ = writeln!(
            out,
            "{:<width$}  {:>5}  {:>5}  {:>10}",
            "Aspect", "User", "Item", "Difference"
        );
        for a in &self.aspects {
            let _ = writeln!(
                out,
                "{:<width$}  {:>5.1}  {:>5.1}  {:>10.4}",
                a.aspect, a.user_score, a.item_score, a.normalized_difference
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Raw scores and normalized differences on `selected` aspects (all of them
/// when `selected` is empty), in the order given.
pub fn interpretability_report(
    user_id: &str,
    item_id: &str,
    scores: &GuidedInputs,
    selected: &[String],
) -> Result<InterpretabilityReport, HarnessError> {
    let user = scores
        .users
        .get(user_id)
        .ok_or_else(|| HarnessError::UnknownId {
            kind: "user",
            id: user_id.to_string(),
        })?;
    let item = scores
        .items
        .get(item_id)
        .ok_or_else(|| HarnessError::UnknownId {
            kind: "item",
            id: item_id.to_string(),
        })?;
    let positions: Vec<usize> = if selected.is_empty() {
        (0..scores.aspects.len()).collect()
    } else {
        selected
            .iter()
            .map(|name| {
                scores
                    .aspects
                    .iter()
                    .position(|a| a.eq_ignore_ascii_case(name.trim()))
                    .ok_or_else(|| HarnessError::UnknownId {
                        kind: "aspect",
                        id: name.clone(),
                    })
            })
            .collect::<Result<_, _>>()?
    };
    let aspects = positions
        .into_iter()
        .map(|j| AspectExplanation {
            aspect: scores.aspects[j].clone(),
            user_score: user[j],
            item_score: item[j],
            normalized_difference: (user[j] - item[j]).abs() / (SCORE_MAX - SCORE_MIN),
        })
        .collect();
    Ok(InterpretabilityReport {
        user_id: user_id.to_string(),
        item_id: item_id.to_string(),
        aspects,
    })
}
