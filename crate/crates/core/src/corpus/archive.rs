//! Single-file JSON archive for datasets (and optional planted truth).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, PlantedTruth};

pub const ARCHIVE_FORMAT: &str = "guidedrec-dataset";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetArchive {
    pub format: String,
    pub version: u32,
    pub dataset: Dataset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PlantedTruth>,
}

impl DatasetArchive {
    pub fn new(dataset: Dataset, truth: Option<PlantedTruth>) -> Self {
        Self {
            format: ARCHIVE_FORMAT.to_string(),
            version: ARCHIVE_VERSION,
            dataset,
            truth,
        }
    }
}

pub fn write_archive(path: impl AsRef<Path>, archive: &DatasetArchive) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let body = serde_json::to_string(archive).map_err(|e| CorpusError::Archive(e.to_string()))?;
    fs::write(path, body).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<DatasetArchive, CorpusError> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let archive: DatasetArchive =
        serde_json::from_str(&body).map_err(|e| CorpusError::Archive(e.to_string()))?;
    if archive.format != ARCHIVE_FORMAT || archive.version != ARCHIVE_VERSION {
        return Err(CorpusError::Archive(format!(
            "unsupported archive {} v{}",
            archive.format, archive.version
        )));
    }
    Ok(archive)
}
