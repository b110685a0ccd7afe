use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::SelectionMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::Config(format!("unknown optimizer {s:?} (expected sgd or adam)"))),
        }
    }
}

/// Order in which training sentences are visited each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentenceOrder {
    /// Reshuffled every epoch from the run seed.
    Shuffle,
    /// Corpus order.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Hidden and embedding size.
    pub d: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip: f64,
    /// Weight of the attention-entropy term.
    pub lambda: f64,
    pub seed: u64,
    pub order: SentenceOrder,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    /// Selection mode of the attention head (ignored for a plain LSTM).
    pub mode: SelectionMode,
    /// Half-width of the uniform init for key and selection weights.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 50,
            lr: 0.1,
            optimizer: OptimizerKind::Sgd,
            epochs: 10,
            clip: 5.0,
            lambda: 0.0,
            seed: 1,
            order: SentenceOrder::Shuffle,
            patience: 3,
            mode: SelectionMode::Tied,
            init_scale: crate::lstm::INIT_SCALE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.clip >= 0.0) {
            return Err(Error::Config(format!("clip must be non-negative, got {}", self.clip)));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::Config(format!("init scale must be non-negative, got {}", self.init_scale)));
        }
        Ok(())
    }
}
