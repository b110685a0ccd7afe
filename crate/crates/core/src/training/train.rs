use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

use crate::attention::AmsrnParams;
use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::lstm::LstmParams;
use crate::math::Rng;
use crate::model::Model;

use super::checkpoint::{Checkpoint, TrainingMeta, VocabRef};
use super::config::{SentenceOrder, TrainConfig};
use super::eval::evaluate;
use super::optim::{clip_grad_norm, Optimizer};

// Independent RNG streams derived from the run seed.
const STREAM_LSTM_INIT: u64 = 0;
const STREAM_ORDER: u64 = 1;
const STREAM_ATTENTION_INIT: u64 = 2;

/// One row of the training log. Epoch 0 describes the initial parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    /// Summed training NLL `C` over the epoch.
    pub train_nll: f64,
    /// Summed training attention entropy `L_reg` over the epoch.
    pub train_lreg: f64,
    /// `C + lambda * L_reg`.
    pub train_objective: f64,
    pub train_tokens: usize,
    pub valid_ppl: f64,
    pub valid_lreg: f64,
    pub valid_mean_entropy: f64,
    pub best_valid_ppl: f64,
}

pub const METRICS_HEADER: &str =
    "epoch\tlr\ttrain_c\ttrain_lreg\ttrain_total\ttrain_tokens\tvalid_ppl\tvalid_lreg\tvalid_mean_entropy\tbest_valid_ppl";

impl EpochMetrics {
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.epoch,
            self.lr,
            self.train_nll,
            self.train_lreg,
            self.train_objective,
            self.train_tokens,
            self.valid_ppl,
            self.valid_lreg,
            self.valid_mean_entropy,
            self.best_valid_ppl
        );
        s
    }
}

/// Appends rows to a tab-separated log, writing the header to a new file.
pub fn append_metrics(path: impl AsRef<Path>, rows: &[EpochMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let empty = file.metadata().map(|m| m.len() == 0).unwrap_or(true);
    let mut text = String::new();
    if empty {
        text.push_str(METRICS_HEADER);
        text.push('\n');
    }
    for row in rows {
        text.push_str(&row.to_tsv());
        text.push('\n');
    }
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochMetrics>,
}

/// Runs the training loop from `model`: per-sentence updates of
/// `C + lambda * L_reg` with gradient-norm clipping, validation after every
/// epoch, learning-rate halving whenever validation perplexity fails to
/// improve, and early stopping after `patience` such epochs. The returned
/// checkpoint holds the parameters with the best validation perplexity
/// (epoch 0 being the starting point).
pub fn train_model(
    config: &TrainConfig,
    model: Model,
    vocab: VocabRef,
    train: &Corpus,
    valid: &Corpus,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    if model.d() != config.d {
        return Err(Error::Config(format!("model has d={} but config says d={}", model.d(), config.d)));
    }
    if model.vocab_size() != vocab.size {
        return Err(Error::Config(format!(
            "model vocabulary size {} does not match vocabulary size {}",
            model.vocab_size(),
            vocab.size
        )));
    }
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Ingestion("training and validation corpora must be non-empty".into()));
    }

    let mut model = model;
    let mut history = Vec::new();
    let initial_train = evaluate(&model, train, false)?;
    let initial_valid = evaluate(&model, valid, false)?;
    let mut lr = config.lr;
    let mut best = model.clone();
    let mut best_ppl = initial_valid.ppl;
    let mut best_epoch = 0;
    let first = EpochMetrics {
        epoch: 0,
        lr,
        train_nll: initial_train.total_nll,
        train_lreg: initial_train.total_entropy,
        train_objective: initial_train.total_nll + config.lambda * initial_train.total_entropy,
        train_tokens: initial_train.tokens,
        valid_ppl: initial_valid.ppl,
        valid_lreg: initial_valid.total_entropy,
        valid_mean_entropy: initial_valid.mean_entropy(),
        best_valid_ppl: best_ppl,
    };
    on_epoch(&first);
    history.push(first);

    let mut order_rng = Rng::stream(config.seed, STREAM_ORDER);
    let mut optimizer = Optimizer::new(config.optimizer, &model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stalled = 0;
    let mut epochs_run = 0;

    for epoch in 1..=config.epochs {
        if config.order == SentenceOrder::Shuffle {
            order.sort_unstable();
            order_rng.shuffle(&mut order);
        }
        let (mut nll, mut lreg, mut tokens) = (0.0, 0.0, 0);
        for &idx in &order {
            let (loss, mut grads) = model.sentence_gradient(&train.sentences[idx], config.lambda)?;
            let objective = loss.objective(config.lambda);
            if !objective.is_finite() {
                return Err(Error::NonFiniteLoss {
                    sentence: idx,
                    value: objective,
                });
            }
            nll += loss.nll;
            lreg += loss.entropy;
            tokens += loss.tokens;
            clip_grad_norm(&mut grads, config.clip);
            optimizer.step(&mut model, &grads, lr)?;
        }
        epochs_run = epoch;

        let valid_eval = evaluate(&model, valid, false)?;
        let improved = valid_eval.ppl < best_ppl;
        if improved {
            best = model.clone();
            best_ppl = valid_eval.ppl;
            best_epoch = epoch;
            stalled = 0;
        }
        let row = EpochMetrics {
            epoch,
            lr,
            train_nll: nll,
            train_lreg: lreg,
            train_objective: nll + config.lambda * lreg,
            train_tokens: tokens,
            valid_ppl: valid_eval.ppl,
            valid_lreg: valid_eval.total_entropy,
            valid_mean_entropy: valid_eval.mean_entropy(),
            best_valid_ppl: best_ppl,
        };
        on_epoch(&row);
        history.push(row);
        if !improved {
            stalled += 1;
            lr *= 0.5;
            if stalled >= config.patience {
                break;
            }
        }
    }

    let meta = TrainingMeta {
        epoch: epochs_run,
        best_epoch,
        best_valid_ppl: Some(best_ppl),
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(config.clone(), vocab, best, meta),
        history,
    })
}

/// Trains a plain LSTM language model from a fresh initialization.
pub fn train_lstm(
    config: &TrainConfig,
    vocab: &Vocabulary,
    vocab_path: Option<&Path>,
    train: &Corpus,
    valid: &Corpus,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = Rng::stream(config.seed, STREAM_LSTM_INIT);
    let lstm = LstmParams::init(vocab.len(), config.d, &mut rng)?;
    train_model(
        config,
        Model::Lstm { lstm },
        VocabRef::of(vocab, vocab_path),
        train,
        valid,
        on_epoch,
    )
}

/// The attention model at initialization on top of a pretrained LSTM
/// checkpoint. Its predictions equal the LSTM's exactly.
pub fn init_amsrn(config: &TrainConfig, lstm_checkpoint: &Checkpoint, vocab: &Vocabulary) -> Result<Model> {
    config.validate()?;
    lstm_checkpoint.check_vocab(vocab)?;
    let Model::Lstm { lstm } = &lstm_checkpoint.model else {
        return Err(Error::Config("the initial checkpoint must be a plain LSTM".into()));
    };
    if lstm.d() != config.d {
        return Err(Error::Config(format!(
            "pretrained LSTM has d={} but config says d={}",
            lstm.d(),
            config.d
        )));
    }
    let mut rng = Rng::stream(config.seed, STREAM_ATTENTION_INIT);
    let attention = AmsrnParams::from_lstm(lstm, config.mode, config.init_scale, &mut rng);
    Ok(Model::Amsrn {
        lstm: lstm.clone(),
        attention,
    })
}

/// Fine-tunes the attention model, all parameters jointly, starting from a
/// pretrained LSTM checkpoint.
pub fn train_amsrn(
    config: &TrainConfig,
    lstm_checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    train: &Corpus,
    valid: &Corpus,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    let model = init_amsrn(config, lstm_checkpoint, vocab)?;
    let vocab_ref = lstm_checkpoint.vocab.clone();
    train_model(config, model, vocab_ref, train, valid, on_epoch)
}

/// Continues training a plain LSTM checkpoint; the matched-budget baseline
/// for an attention model fine-tuned from the same checkpoint.
pub fn continue_lstm(
    config: &TrainConfig,
    lstm_checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    train: &Corpus,
    valid: &Corpus,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    lstm_checkpoint.check_vocab(vocab)?;
    if lstm_checkpoint.model.is_amsrn() {
        return Err(Error::Config("expected a plain LSTM checkpoint".into()));
    }
    train_model(
        config,
        lstm_checkpoint.model.clone(),
        lstm_checkpoint.vocab.clone(),
        train,
        valid,
        on_epoch,
    )
}
