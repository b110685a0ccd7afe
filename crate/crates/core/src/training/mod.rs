//! Two-phase training (LSTM pretraining, then attention fine-tuning),
//! checkpoints and evaluation.

mod ablation;
mod checkpoint;
mod config;
mod eval;
mod optim;
mod train;

pub use ablation::{ablate, AblationRow, ABLATION_HEADER, ABLATION_MODES};
pub use checkpoint::{Checkpoint, TrainingMeta, VocabRef, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{OptimizerKind, SentenceOrder, TrainConfig};
pub use eval::{evaluate, evaluate_checkpoint, sentence_ranking, Evaluation, Improvement};
pub use optim::{clip_grad_norm, Optimizer};
pub use train::{
    append_metrics, continue_lstm, init_amsrn, train_amsrn, train_lstm, train_model, EpochMetrics, TrainOutcome,
    METRICS_HEADER,
};
