//! Model checkpoints: config fingerprint plus encoder and table parameters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, SeqrecError};
use crate::guided::EmbeddingTable;

pub const CHECKPOINT_FORMAT: &str = "guidedrec-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format: String,
    pub version: u32,
    pub config_fingerprint: String,
    pub model: Model,
    pub table: EmbeddingTable,
}

impl ModelCheckpoint {
    pub fn new(model: Model, table: EmbeddingTable) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config_fingerprint: fingerprint(&model, &table),
            model,
            table,
        }
    }
}

fn fingerprint(model: &Model, table: &EmbeddingTable) -> String {
    let body = serde_json::to_string(&(&model.config, table.config())).expect("configs serialize");
    hex::encode(Sha256::digest(body.as_bytes()))
}

fn error(path: &Path, e: impl ToString) -> SeqrecError {
    SeqrecError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    checkpoint: &ModelCheckpoint,
) -> Result<(), SeqrecError> {
    let path = path.as_ref();
    let body = serde_json::to_string(checkpoint).map_err(|e| error(path, e))?;
    fs::write(path, body).map_err(|e| error(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint, SeqrecError> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|e| error(path, e))?;
    let checkpoint: ModelCheckpoint = serde_json::from_str(&body).map_err(|e| error(path, e))?;
    if checkpoint.format != CHECKPOINT_FORMAT || checkpoint.version != CHECKPOINT_VERSION {
        return Err(error(
            path,
            format!(
                "unsupported checkpoint {} v{}",
                checkpoint.format, checkpoint.version
            ),
        ));
    }
    if checkpoint.config_fingerprint != fingerprint(&checkpoint.model, &checkpoint.table) {
        return Err(error(path, "config fingerprint mismatch"));
    }
    checkpoint
        .model
        .config
        .validate(checkpoint.table.config())?;
    Ok(checkpoint)
}
