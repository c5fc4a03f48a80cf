//! Persistent score cache, one JSON record per line.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::Subject;
use crate::aspects::PromptPair;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub subject_fingerprint: String,
    pub catalog_fingerprint: String,
    pub backend_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub subject: Subject,
    #[serde(flatten)]
    pub key: CacheKey,
    pub scores: Vec<f64>,
    pub raw_text: String,
    pub created_at: String,
}

/// Hash of the subject identity together with its rendered prompt, so any
/// change to the item text or the user history yields a new key.
pub fn subject_fingerprint(subject: &Subject, prompt: &PromptPair) -> String {
    let mut hasher = Sha256::new();
    for part in [
        subject.to_string().as_str(),
        prompt.system.as_str(),
        prompt.user.as_str(),
    ] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Default)]
pub struct ScoreCache {
    entries: RwLock<HashMap<CacheKey, CacheEntry>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl PartialEq for ScoreCache {
    fn eq(&self, other: &Self) -> bool {
        *self.entries.read().unwrap() == *other.entries.read().unwrap()
    }
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &CacheKey) -> Option<CacheEntry> {
        let found = self.entries.read().unwrap().get(key).cloned();
        let counter = if found.is_some() {
            &self.hits
        } else {
            &self.misses
        };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    /// Inserts or replaces; the last write for a key wins.
    pub fn insert(&self, entry: CacheEntry) {
        self.entries
            .write()
            .unwrap()
            .insert(entry.key.clone(), entry);
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    /// Entries sorted by key.
    pub fn entries(&self) -> Vec<CacheEntry> {
        let mut all: Vec<_> = self.entries.read().unwrap().values().cloned().collect();
        all.sort_by(|a, b| a.key.cmp(&b.key));
        all
    }
}

/// Loads a cache file. A missing file yields an empty cache; corrupt lines
/// are skipped and counted in the second return value.
pub fn cache_load(path: impl AsRef<Path>) -> std::io::Result<(ScoreCache, usize)> {
    let path = path.as_ref();
    let cache = ScoreCache::new();
    if !path.exists() {
        return Ok((cache, 0));
    }
    let mut corrupt = 0;
    for (lineno, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CacheEntry>(&line) {
            Ok(entry) => cache.insert(entry),
            Err(e) => {
                corrupt += 1;
                warn!(
                    "{}:{}: skipping corrupt cache record ({e})",
                    path.display(),
                    lineno + 1
                );
            }
        }
    }
    Ok((cache, corrupt))
}

pub fn cache_store(cache: &ScoreCache, path: impl AsRef<Path>) -> std::io::Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for entry in cache.entries() {
        serde_json::to_writer(&mut out, &entry)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
