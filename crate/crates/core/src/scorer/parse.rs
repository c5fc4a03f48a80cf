//! Rule-based extraction of `aspect: rating` lines.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aspects::AspectCatalog;

pub const SCORE_MIN: f64 = 1.0;
pub const SCORE_MAX: f64 = 10.0;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatReport {
    pub valid: bool,
    pub missing_aspects: Vec<String>,
    pub extra_lines: usize,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("malformed score block: missing {:?}", report.missing_aspects)]
pub struct FormatError {
    pub report: FormatReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedScores {
    pub values: Vec<f64>,
    pub report: FormatReport,
}

/// Leading decimal number of `s`, e.g. `"7"`, `"7.5/10"`, `"-2"`.
fn leading_number(s: &str) -> Option<f64> {
    let s = s.trim_start();
    let bytes = s.as_bytes();
    let mut end = 0;
    if matches!(bytes.first(), Some(b'+' | b'-')) {
        end += 1;
    }
    let digits_start = end;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end < bytes.len() && bytes[end] == b'.' {
        let frac_start = end + 1;
        let mut frac_end = frac_start;
        while frac_end < bytes.len() && bytes[frac_end].is_ascii_digit() {
            frac_end += 1;
        }
        if frac_end > frac_start {
            end = frac_end;
        }
    }
    if end == digits_start {
        return None;
    }
    // exponent forms appear in shortest round-trip float output
    if end < bytes.len() && matches!(bytes[end], b'e' | b'E') {
        let mut exp_end = end + 1;
        if matches!(bytes.get(exp_end), Some(b'+' | b'-')) {
            exp_end += 1;
        }
        let exp_digits = exp_end;
        while exp_end < bytes.len() && bytes[exp_end].is_ascii_digit() {
            exp_end += 1;
        }
        if exp_end > exp_digits {
            end = exp_end;
        }
    }
    s[..end].parse::<f64>().ok().filter(|v| v.is_finite())
}

fn strip_decoration(name: &str) -> &str {
    name.trim()
        .trim_start_matches(['-', '*', '#', ' '])
        .trim_end_matches('*')
        .trim()
}

/// Parses a backend response against a catalog.
///
/// Names match case-insensitively; the first occurrence of each aspect wins.
/// Out-of-range values are clamped into `[1, 10]` and counted. Any aspect
/// without a recoverable value makes the whole block a [`FormatError`].
pub fn parse_scores(text: &str, catalog: &AspectCatalog) -> Result<ParsedScores, FormatError> {
    let mut values: Vec<Option<f64>> = vec![None; catalog.len()];
    let mut report = FormatReport::default();

    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = line.split_once(':').and_then(|(name, rest)| {
            let idx = catalog.position(strip_decoration(name))?;
            Some((idx, leading_number(rest)))
        });
        match parsed {
            Some((idx, Some(v))) if values[idx].is_none() => {
                let clamped = v.clamp(SCORE_MIN, SCORE_MAX);
                if clamped != v {
                    report.clamped += 1;
                }
                values[idx] = Some(clamped);
            }
            _ => report.extra_lines += 1,
        }
    }

    report.missing_aspects = catalog
        .names()
        .zip(&values)
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| n.to_string())
        .collect();
    report.valid = report.missing_aspects.is_empty();
    if !report.valid {
        return Err(FormatError { report });
    }
    Ok(ParsedScores {
        values: values
            .into_iter()
            .map(|v| v.expect("checked above"))
            .collect(),
        report,
    })
}

/// Writes scores in the response format the prompts request. Values use the
/// shortest exact decimal form, so parsing the block returns them unchanged.
pub fn render_score_block<'a>(names: impl IntoIterator<Item = &'a str>, scores: &[f64]) -> String {
    names
        .into_iter()
        .zip(scores)
        .map(|(name, v)| format!("{name}: {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}
