//! Attention-based memory selection recurrent language model.
//!
//! An LSTM language model whose hidden states are kept in a per-sentence
//! memory bank and re-read by an attention head that learns, per step, which
//! hidden dimensions take part in scoring and which in extraction. All
//! gradients are hand-derived and checked against finite differences.

pub mod attention;
pub mod corpus;
pub mod error;
pub mod lstm;
pub mod math;
pub mod model;
pub mod params;
pub mod synth;
pub mod trace;
pub mod training;

pub use attention::{
    amsrn_backward, amsrn_forward, amsrn_loss, amsrn_score, attention_entropy, attention_key, attention_scores,
    attention_weights, output_distribution, relevant_vector, selection_vectors, AmsrnParams,
    AttentionStep, AttentionTrace, SelectionMap, SelectionMode, SentenceLoss,
};
pub use corpus::{build_vocab, perplexity, Corpus, CorpusStats, EncodedSentence, Vocabulary};
pub use error::{Error, Result};
pub use lstm::{lstm_backward, lstm_cell, lstm_lm_forward, lstm_loss, run_sentence, LstmParams, LstmState, MemoryBank};
pub use model::Model;
pub use params::ParamSet;
