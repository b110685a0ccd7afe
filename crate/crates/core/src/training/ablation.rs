//! Selection-mode comparison from one shared pretrained LSTM.

use crate::attention::SelectionMode;
use crate::corpus::{Corpus, Vocabulary};
use crate::error::Result;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::eval::evaluate;
use super::train::{train_amsrn, EpochMetrics};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub mode: SelectionMode,
    /// Validation perplexity of the shared pretrained LSTM.
    pub lstm_valid_ppl: f64,
    /// Validation perplexity of this mode before fine-tuning.
    pub init_valid_ppl: f64,
    pub valid_ppl: f64,
    pub test_ppl: f64,
    pub best_epoch: usize,
    pub params: usize,
}

pub const ABLATION_HEADER: &str = "mode\tparams\tlstm_valid_ppl\tinit_valid_ppl\tvalid_ppl\ttest_ppl\tbest_epoch";

impl AblationRow {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.mode,
            self.params,
            self.lstm_valid_ppl,
            self.init_valid_ppl,
            self.valid_ppl,
            self.test_ppl,
            self.best_epoch
        )
    }
}

/// Independent, tied and complement selection.
pub const ABLATION_MODES: [SelectionMode; 3] = [
    SelectionMode::Independent,
    SelectionMode::Tied,
    SelectionMode::Complement,
];

/// Fine-tunes one attention model per mode from the same LSTM checkpoint
/// with the same seed and budget, then scores each on `test`.
#[allow(clippy::too_many_arguments)]
pub fn ablate(
    config: &TrainConfig,
    lstm_checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    train: &Corpus,
    valid: &Corpus,
    test: &Corpus,
    modes: &[SelectionMode],
    mut on_epoch: impl FnMut(SelectionMode, &EpochMetrics),
) -> Result<Vec<AblationRow>> {
    lstm_checkpoint.check_vocab(vocab)?;
    let lstm_valid_ppl = evaluate(&lstm_checkpoint.model, valid, false)?.ppl;
    modes
        .iter()
        .map(|&mode| {
            let cfg = TrainConfig {
                mode,
                ..config.clone()
            };
            let out = train_amsrn(&cfg, lstm_checkpoint, vocab, train, valid, |m| on_epoch(mode, m))?;
            let model = &out.checkpoint.model;
            Ok(AblationRow {
                mode,
                lstm_valid_ppl,
                init_valid_ppl: out.history[0].valid_ppl,
                valid_ppl: out.checkpoint.meta.best_valid_ppl.unwrap_or(f64::NAN),
                test_ppl: evaluate(model, test, false)?.ppl,
                best_epoch: out.checkpoint.meta.best_epoch,
                params: crate::params::ParamSet::num_params(model),
            })
        })
        .collect()
}
