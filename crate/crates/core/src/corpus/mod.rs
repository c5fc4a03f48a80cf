//! Interaction datasets in the Amazon-reviews shape: loading, cleaning,
//! leave-one-out splitting and a planted synthetic generator.

mod archive;
mod load;
mod preprocess;
mod split;
mod synthetic;

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use archive::{read_archive, write_archive, DatasetArchive, ARCHIVE_FORMAT, ARCHIVE_VERSION};
pub use load::{load_metadata, load_reviews, LoadOutcome};
pub use preprocess::{preprocess, FilterConfig};
pub use split::{split_leave_one_out, SplitDataset, UserSplit};
pub use synthetic::{
    generate_synthetic, planted_pairs, rating_from_quantile, LabeledPair, PlantedTruth,
    SyntheticSpec,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset is empty after preprocessing ({0})")]
    EmptyDataset(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid archive: {0}")]
    Archive(String),
}

/// One rated user-item interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
    /// Epoch milliseconds.
    pub timestamp: i64,
    #[serde(default)]
    pub summary: String,
    #[serde(default)]
    pub review_text: String,
}

impl Interaction {
    pub fn is_valid(&self) -> bool {
        !self.user_id.is_empty()
            && !self.item_id.is_empty()
            && (1.0..=5.0).contains(&self.rating)
            && self.timestamp >= 0
    }
}

/// Item metadata; its rendering is the item's text description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub details: IndexMap<String, String>,
    #[serde(default)]
    pub average_rating: Option<f64>,
    #[serde(default)]
    pub rating_count: Option<u64>,
}

impl ItemRecord {
    pub fn new(item_id: impl Into<String>, title: impl Into<String>) -> Self {
        Self {
            item_id: item_id.into(),
            title: title.into(),
            description: String::new(),
            categories: Vec::new(),
            details: IndexMap::new(),
            average_rating: None,
            rating_count: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_users: usize,
    pub num_items: usize,
    pub num_reviews: usize,
}

/// Cleaned dataset. User sequences are sorted by `(timestamp, item_id)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub items: BTreeMap<String, ItemRecord>,
    pub users: BTreeMap<String, Vec<Interaction>>,
}

impl Dataset {
    pub fn stats(&self) -> DatasetStats {
        dataset_stats(self)
    }

    /// Item ids in catalog order; this order defines embedding-table rows.
    pub fn item_ids(&self) -> Vec<String> {
        self.items.keys().cloned().collect()
    }

    pub fn sequence(&self, user_id: &str) -> Option<&[Interaction]> {
        self.users.get(user_id).map(Vec::as_slice)
    }

    /// Flattens back into an interaction list (user order, then sequence order).
    pub fn interactions(&self) -> Vec<Interaction> {
        self.users.values().flatten().cloned().collect()
    }
}

pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    DatasetStats {
        num_users: dataset.users.len(),
        num_items: dataset.items.len(),
        num_reviews: dataset.users.values().map(Vec::len).sum(),
    }
}

/// Ordering key for interactions inside a user sequence.
pub(crate) fn chrono_key(i: &Interaction) -> (i64, &str) {
    (i.timestamp, i.item_id.as_str())
}
