//! Attention-trace export.
//!
//! One JSON object per line, one line per sentence (format version 1):
//!
//! ```text
//! {"format":"amsrn-trace","version":1,"sentence":0,
//!  "tokens":["<s>","the","cat"],
//!  "steps":[{"position":1,"target":"the","alpha":[1.0],"entropy":0.0,
//!            "w1_mean":0.5,"w2_mean":0.5,"highlight":[0]}, ...]}
//! ```
//!
//! `tokens` are the input symbols of the sentence. At step `position = t` the
//! model predicts `target` from memory slots `0..t`; `alpha[i]` is the weight
//! of slot `i`. Slot 0 is the initial state and is labelled `<s>`; slot
//! `i >= 1` is the state right after reading `tokens[i - 1]`. `highlight`
//! lists the slots whose weight reaches the highlight threshold. With
//! verbose output every step also carries the full `w1` and `w2` vectors.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionTrace;
use crate::corpus::{EncodedSentence, Vocabulary, BOS};
use crate::error::{Error, Result};

pub const TRACE_FORMAT: &str = "amsrn-trace";
pub const TRACE_VERSION: u32 = 1;

/// Weight a slot needs to be highlighted at step `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Twice the uniform weight, `2 / t`, capped at 1 so that the single
    /// slot of step 1 is always highlighted.
    TwiceUniform,
    Fixed(f64),
}

impl Threshold {
    pub fn at(self, t: usize) -> f64 {
        match self {
            Threshold::TwiceUniform => f64::min(2.0 / t as f64, 1.0),
            Threshold::Fixed(x) => x,
        }
    }
}

/// Slots with `alpha >= threshold`.
pub fn highlighted(alpha: &[f64], threshold: f64) -> Vec<usize> {
    alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a >= threshold)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub position: usize,
    pub target: String,
    pub alpha: Vec<f64>,
    pub entropy: f64,
    pub w1_mean: f64,
    pub w2_mean: f64,
    pub highlight: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub format: String,
    pub version: u32,
    pub sentence: usize,
    pub tokens: Vec<String>,
    pub steps: Vec<StepRecord>,
}

impl SentenceRecord {
    pub fn new(
        index: usize,
        sentence: &EncodedSentence,
        trace: &AttentionTrace,
        vocab: &Vocabulary,
        threshold: Threshold,
        verbose: bool,
    ) -> Result<Self> {
        if trace.steps.len() != sentence.num_targets() {
            return Err(Error::shape(
                "trace",
                format!("{} steps", trace.steps.len()),
                format!("{} targets", sentence.num_targets()),
            ));
        }
        let tokens = vocab.decode(sentence.inputs()).into_iter().map(str::to_owned).collect();
        let targets = vocab.decode(sentence.targets());
        let steps = trace
            .steps
            .iter()
            .zip(targets)
            .map(|(step, target)| StepRecord {
                position: step.position,
                target: target.to_owned(),
                alpha: step.alpha.as_slice().to_vec(),
                entropy: step.entropy,
                w1_mean: step.w1.mean(),
                w2_mean: step.w2.mean(),
                highlight: highlighted(step.alpha.as_slice(), threshold.at(step.position)),
                w1: verbose.then(|| step.w1.as_slice().to_vec()),
                w2: verbose.then(|| step.w2.as_slice().to_vec()),
            })
            .collect();
        Ok(SentenceRecord {
            format: TRACE_FORMAT.into(),
            version: TRACE_VERSION,
            sentence: index,
            tokens,
            steps,
        })
    }

    /// Label of memory slot `i`.
    pub fn slot_label(&self, i: usize) -> &str {
        if i == 0 {
            BOS
        } else {
            &self.tokens[i - 1]
        }
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let rec: SentenceRecord = serde_json::from_str(line)?;
        if rec.format != TRACE_FORMAT || rec.version != TRACE_VERSION {
            return Err(Error::FormatVersion {
                found: rec.version,
                expected: TRACE_VERSION,
            });
        }
        Ok(rec)
    }

    /// Plain-text view: one line per prediction, highlighted slots in brackets.
    ///
    /// ```text
    /// #0  <s> the cat sat
    ///   1 the    <= [<s>]
    ///   2 cat    <= <s> [<s>]
    /// ```
    pub fn render(&self) -> String {
        let width = self.steps.iter().map(|s| s.target.chars().count()).max().unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "#{}  {}", self.sentence, self.tokens.join(" "));
        for step in &self.steps {
            let sources: Vec<String> = (0..step.alpha.len())
                .map(|i| {
                    let label = self.slot_label(i);
                    if step.highlight.contains(&i) {
                        format!("[{label}]")
                    } else {
                        label.to_owned()
                    }
                })
                .collect();
            let _ = writeln!(
                out,
                "{:>3} {:<width$} <= {}",
                step.position,
                step.target,
                sources.join(" ")
            );
        }
        out
    }
}
