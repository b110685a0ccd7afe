use rayon::prelude::*;

use crate::attention::{AttentionTrace, SentenceLoss};
use crate::corpus::{perplexity, Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::model::Model;

use super::checkpoint::Checkpoint;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub ppl: f64,
    pub total_nll: f64,
    pub tokens: usize,
    /// Summed attention entropy, `L_reg` of the corpus.
    pub total_entropy: f64,
    /// Number of attention steps (0 for a plain LSTM).
    pub attention_steps: usize,
    pub sentence_nll: Vec<f64>,
    pub sentence_tokens: Vec<usize>,
    /// One trace per sentence when requested and the model has attention.
    pub traces: Option<Vec<AttentionTrace>>,
}

impl Evaluation {
    pub fn mean_entropy(&self) -> f64 {
        if self.attention_steps == 0 {
            0.0
        } else {
            self.total_entropy / self.attention_steps as f64
        }
    }
}

/// Scores every sentence (in parallel) and reduces in corpus order.
pub fn evaluate(model: &Model, corpus: &Corpus, with_traces: bool) -> Result<Evaluation> {
    let scored: Vec<(SentenceLoss, Option<AttentionTrace>)> = corpus
        .sentences
        .par_iter()
        .map(|s| model.score(s))
        .collect::<Result<_>>()?;

    let mut total_nll = 0.0;
    let mut total_entropy = 0.0;
    let mut tokens = 0;
    let mut sentence_nll = Vec::with_capacity(scored.len());
    let mut sentence_tokens = Vec::with_capacity(scored.len());
    let mut traces = Vec::new();
    for (loss, trace) in scored {
        total_nll += loss.nll;
        total_entropy += loss.entropy;
        tokens += loss.tokens;
        sentence_nll.push(loss.nll);
        sentence_tokens.push(loss.tokens);
        if let Some(trace) = trace {
            traces.push(trace);
        }
    }
    let attention_steps = if model.is_amsrn() { tokens } else { 0 };
    Ok(Evaluation {
        ppl: perplexity(total_nll, tokens)?,
        total_nll,
        tokens,
        total_entropy,
        attention_steps,
        sentence_nll,
        sentence_tokens,
        traces: (with_traces && model.is_amsrn()).then_some(traces),
    })
}

/// `evaluate` after checking that `vocab` matches the checkpoint.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    vocab: &Vocabulary,
    corpus: &Corpus,
    with_traces: bool,
) -> Result<Evaluation> {
    ckpt.check_vocab(vocab)?;
    evaluate(&ckpt.model, corpus, with_traces)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Improvement {
    /// Sentence index in corpus order.
    pub index: usize,
    pub baseline_nll: f64,
    pub model_nll: f64,
    /// `baseline_nll - model_nll`
    pub improvement: f64,
}

/// Sentences sorted by NLL reduction, largest first; ties keep corpus order.
pub fn sentence_ranking(baseline: &[f64], model: &[f64]) -> Result<Vec<Improvement>> {
    if baseline.len() != model.len() {
        return Err(Error::shape(
            "sentence_ranking",
            format!("{} baseline sentences", baseline.len()),
            format!("{} model sentences", model.len()),
        ));
    }
    let mut ranked: Vec<Improvement> = baseline
        .iter()
        .zip(model)
        .enumerate()
        .map(|(index, (&b, &m))| Improvement {
            index,
            baseline_nll: b,
            model_nll: m,
            improvement: b - m,
        })
        .collect();
    ranked.sort_by(|a, b| b.improvement.total_cmp(&a.improvement));
    Ok(ranked)
}
