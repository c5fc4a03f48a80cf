//! Deduplication and iterated k-core filtering.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{chrono_key, CorpusError, Dataset, Interaction, ItemRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_item_interactions: usize,
    pub min_user_interactions: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_item_interactions: 5,
            min_user_interactions: 5,
        }
    }
}

/// Cleans raw interactions into a [`Dataset`].
///
/// Exact `(user_id, item_id, timestamp)` duplicates are dropped (first wins),
/// interactions on items without metadata are dropped, and the item and user
/// thresholds are applied alternately until neither removes anything.
pub fn preprocess(
    interactions: &[Interaction],
    item_records: &[ItemRecord],
    filter: FilterConfig,
) -> Result<Dataset, CorpusError> {
    let min_item = filter.min_item_interactions.max(1);
    let min_user = filter.min_user_interactions.max(1);

    let catalog: HashMap<&str, &ItemRecord> = item_records
        .iter()
        .map(|r| (r.item_id.as_str(), r))
        .collect();

    let mut seen = HashSet::new();
    let mut kept: Vec<&Interaction> = interactions
        .iter()
        .filter(|i| i.is_valid() && catalog.contains_key(i.item_id.as_str()))
        .filter(|i| seen.insert((i.user_id.as_str(), i.item_id.as_str(), i.timestamp)))
        .collect();
    let after_dedup = kept.len();

    loop {
        let before = kept.len();
        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        for i in &kept {
            *item_counts.entry(i.item_id.as_str()).or_default() += 1;
        }
        kept.retain(|i| item_counts[i.item_id.as_str()] >= min_item);

        let mut user_counts: HashMap<&str, usize> = HashMap::new();
        for i in &kept {
            *user_counts.entry(i.user_id.as_str()).or_default() += 1;
        }
        kept.retain(|i| user_counts[i.user_id.as_str()] >= min_user);

        if kept.len() == before {
            break;
        }
    }

    if kept.is_empty() {
        return Err(CorpusError::EmptyDataset(format!(
            "{} raw interactions, {} after dedup and catalog join, {} items in metadata, \
             thresholds item>={min_item} user>={min_user}",
            interactions.len(),
            after_dedup,
            item_records.len()
        )));
    }

    let mut users: BTreeMap<String, Vec<Interaction>> = BTreeMap::new();
    let mut items = BTreeMap::new();
    for i in kept {
        users.entry(i.user_id.clone()).or_default().push(i.clone());
        items
            .entry(i.item_id.clone())
            .or_insert_with(|| catalog[i.item_id.as_str()].clone());
    }
    for seq in users.values_mut() {
        seq.sort_by(|a, b| chrono_key(a).cmp(&chrono_key(b)));
    }
    Ok(Dataset { items, users })
}
