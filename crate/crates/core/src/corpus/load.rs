//! Line-delimited JSON readers for review and metadata dumps.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use indexmap::IndexMap;
use log::warn;
use serde_json::{Map, Value};

use super::{CorpusError, Interaction, ItemRecord};

/// Parsed records plus bookkeeping about what was dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadOutcome<T> {
    pub records: Vec<T>,
    /// Lines that could not be parsed or violated a required-field rule.
    pub malformed: usize,
    /// Records dropped as duplicates of an earlier record.
    pub duplicates: usize,
}

fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    BufReader::new(file)
        .lines()
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err)
}

fn first_str(obj: &Map<String, Value>, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| match obj.get(*k) {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        _ => None,
    })
}

fn first_f64(obj: &Map<String, Value>, keys: &[&str]) -> Option<f64> {
    keys.iter().find_map(|k| match obj.get(*k) {
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::String(s)) => s.trim().parse().ok(),
        _ => None,
    })
}

fn text_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_review(line: &str) -> Option<Interaction> {
    let value: Value = serde_json::from_str(line).ok()?;
    let obj = value.as_object()?;
    let interaction = Interaction {
        user_id: first_str(obj, &["user_id", "reviewerID"])?,
        item_id: first_str(obj, &["item_id", "parent_asin", "asin"])?,
        rating: first_f64(obj, &["rating", "overall"])?,
        timestamp: first_f64(obj, &["timestamp"])? as i64,
        summary: first_str(obj, &["summary", "title"]).unwrap_or_default(),
        review_text: first_str(obj, &["text", "review_text", "reviewText"]).unwrap_or_default(),
    };
    interaction.is_valid().then_some(interaction)
}

/// Reads one review record per line. Malformed lines are skipped and counted.
pub fn load_reviews(path: impl AsRef<Path>) -> Result<LoadOutcome<Interaction>, CorpusError> {
    let path = path.as_ref();
    let mut records = Vec::new();
    let mut malformed = 0;
    for (lineno, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_review(line) {
            Some(r) => records.push(r),
            None => {
                malformed += 1;
                warn!(
                    "{}:{}: skipping malformed review record",
                    path.display(),
                    lineno + 1
                );
            }
        }
    }
    Ok(LoadOutcome {
        records,
        malformed,
        duplicates: 0,
    })
}

fn parse_item(line: &str) -> Option<ItemRecord> {
    let value: Value = serde_json::from_str(line).ok()?;
    let obj = value.as_object()?;
    let item_id = first_str(obj, &["item_id", "parent_asin", "asin"])?;
    let title = first_str(obj, &["title"]).filter(|t| !t.trim().is_empty())?;
    let description = match obj.get("description") {
        Some(Value::Array(parts)) => parts.iter().map(text_value).collect::<Vec<_>>().join("\n"),
        Some(Value::String(s)) => s.clone(),
        _ => String::new(),
    };
    let categories = match obj.get("categories") {
        Some(Value::Array(cats)) => cats.iter().map(text_value).collect(),
        Some(Value::String(s)) => vec![s.clone()],
        _ => Vec::new(),
    };
    let details: IndexMap<String, String> = match obj.get("details") {
        Some(Value::Object(map)) => map
            .iter()
            .map(|(k, v)| (k.clone(), text_value(v)))
            .collect(),
        _ => IndexMap::new(),
    };
    Some(ItemRecord {
        item_id,
        title,
        description,
        categories,
        details,
        average_rating: first_f64(obj, &["average_rating"]),
        rating_count: first_f64(obj, &["rating_count", "rating_number"]).map(|c| c as u64),
    })
}

/// Reads item metadata, keeping the first record of each item id.
pub fn load_metadata(path: impl AsRef<Path>) -> Result<LoadOutcome<ItemRecord>, CorpusError> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let (mut malformed, mut duplicates) = (0, 0);
    for (lineno, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_item(line) {
            Some(item) if seen.insert(item.item_id.clone()) => records.push(item),
            Some(_) => duplicates += 1,
            None => {
                malformed += 1;
                warn!(
                    "{}:{}: skipping malformed metadata record",
                    path.display(),
                    lineno + 1
                );
            }
        }
    }
    Ok(LoadOutcome {
        records,
        malformed,
        duplicates,
    })
}
