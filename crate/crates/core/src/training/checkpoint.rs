//! Versioned JSON checkpoints.
//!
//! ```text
//! {
//!   "format": "amsrn-checkpoint",
//!   "version": 1,
//!   "config": { ... },
//!   "vocab": { "hash": "<sha256 hex>", "size": 10003, "path": "vocab.txt" },
//!   "model": { "kind": "lstm" | "amsrn", "lstm": {...}, "attention": {...} },
//!   "meta": { "epoch": 4, "best_epoch": 3, "best_valid_ppl": 141.2 }
//! }
//! ```
//!
//! Matrices are `{"shape": [rows, cols], "data": [[...], ...]}`. Floats are
//! written in shortest round-trip form, so loading reproduces every weight
//! bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::Model;

use super::config::TrainConfig;

pub const CHECKPOINT_FORMAT: &str = "amsrn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabRef {
    pub hash: String,
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl VocabRef {
    pub fn of(vocab: &Vocabulary, path: Option<&Path>) -> Self {
        VocabRef {
            hash: vocab.hash(),
            size: vocab.len(),
            path: path.map(|p| p.display().to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Epochs run.
    pub epoch: usize,
    /// Epoch whose parameters are stored (0 = initialization).
    pub best_epoch: usize,
    pub best_valid_ppl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub vocab: VocabRef,
    pub model: Model,
    pub meta: TrainingMeta,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, vocab: VocabRef, model: Model, meta: TrainingMeta) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config,
            vocab,
            model,
            meta,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text)?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("not a checkpoint (format {:?})", header.format)));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::FormatVersion {
                found: header.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        ckpt.model.validate()?;
        if ckpt.model.vocab_size() != ckpt.vocab.size {
            return Err(Error::Config(format!(
                "model vocabulary size {} does not match recorded vocabulary size {}",
                ckpt.model.vocab_size(),
                ckpt.vocab.size
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }

    /// Fails unless `vocab` is the vocabulary this checkpoint was trained with.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let hash = vocab.hash();
        if hash != self.vocab.hash {
            return Err(Error::Config(format!(
                "vocabulary hash {hash} does not match checkpoint vocabulary {}",
                self.vocab.hash
            )));
        }
        Ok(())
    }
}
