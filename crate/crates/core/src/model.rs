use serde::{Deserialize, Serialize};

use crate::attention::{amsrn_backward, amsrn_forward, amsrn_score, AmsrnParams, AttentionTrace, SentenceLoss};
use crate::corpus::EncodedSentence;
use crate::error::Result;
use crate::lstm::{lstm_backward, lstm_lm_forward, lstm_loss, LstmParams};
use crate::math::Vector;
use crate::params::ParamSet;

/// A plain LSTM language model or an LSTM with the attention head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Lstm { lstm: LstmParams },
    Amsrn { lstm: LstmParams, attention: AmsrnParams },
}

impl Model {
    pub fn lstm(&self) -> &LstmParams {
        match self {
            Model::Lstm { lstm } | Model::Amsrn { lstm, .. } => lstm,
        }
    }

    pub fn attention(&self) -> Option<&AmsrnParams> {
        match self {
            Model::Lstm { .. } => None,
            Model::Amsrn { attention, .. } => Some(attention),
        }
    }

    pub fn is_amsrn(&self) -> bool {
        matches!(self, Model::Amsrn { .. })
    }

    pub fn vocab_size(&self) -> usize {
        self.lstm().vocab_size()
    }

    pub fn d(&self) -> usize {
        self.lstm().d()
    }

    pub fn validate(&self) -> Result<()> {
        self.lstm().validate()?;
        if let Some(att) = self.attention() {
            att.validate()?;
        }
        Ok(())
    }

    pub fn sentence_loss(&self, sentence: &EncodedSentence) -> Result<SentenceLoss> {
        self.score(sentence).map(|(loss, _)| loss)
    }

    /// Loss of one sentence and, for an AMSRN, its attention trace.
    pub fn score(&self, sentence: &EncodedSentence) -> Result<(SentenceLoss, Option<AttentionTrace>)> {
        let (inputs, targets) = (sentence.inputs(), sentence.targets());
        match self {
            Model::Lstm { lstm } => {
                let loss = SentenceLoss {
                    nll: lstm_loss(lstm, inputs, targets)?,
                    entropy: 0.0,
                    tokens: targets.len(),
                };
                Ok((loss, None))
            }
            Model::Amsrn { lstm, attention } => {
                let (loss, trace) = amsrn_score(lstm, attention, inputs, targets)?;
                Ok((loss, Some(trace)))
            }
        }
    }

    /// Loss and gradient of `C + lambda * L_reg`; `lambda` has no effect on a
    /// plain LSTM.
    pub fn sentence_gradient(&self, sentence: &EncodedSentence, lambda: f64) -> Result<(SentenceLoss, Model)> {
        let (inputs, targets) = (sentence.inputs(), sentence.targets());
        match self {
            Model::Lstm { lstm } => {
                let (nll, grads) = lstm_backward(lstm, inputs, targets)?;
                let loss = SentenceLoss {
                    nll,
                    entropy: 0.0,
                    tokens: targets.len(),
                };
                Ok((loss, Model::Lstm { lstm: grads }))
            }
            Model::Amsrn { lstm, attention } => {
                let (loss, gl, ga) = amsrn_backward(lstm, attention, inputs, targets, lambda)?;
                Ok((loss, Model::Amsrn { lstm: gl, attention: ga }))
            }
        }
    }

    /// Next-token distributions for every input position, plus the attention
    /// trace for an AMSRN.
    pub fn distributions(&self, inputs: &[usize]) -> Result<(Vec<Vector>, Option<AttentionTrace>)> {
        match self {
            Model::Lstm { lstm } => Ok((lstm_lm_forward(lstm, inputs)?.0, None)),
            Model::Amsrn { lstm, attention } => {
                let (dists, trace) = amsrn_forward(lstm, attention, inputs)?;
                Ok((dists, Some(trace)))
            }
        }
    }
}

impl ParamSet for Model {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            Model::Lstm { lstm } => lstm.tensors(),
            Model::Amsrn { lstm, attention } => {
                let mut out = lstm.tensors();
                out.extend(attention.tensors());
                out
            }
        }
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        match self {
            Model::Lstm { lstm } => lstm.tensors_mut(),
            Model::Amsrn { lstm, attention } => {
                let mut out = lstm.tensors_mut();
                out.extend(attention.tensors_mut());
                out
            }
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Model::Lstm { lstm } => Model::Lstm { lstm: lstm.zeros_like() },
            Model::Amsrn { lstm, attention } => Model::Amsrn {
                lstm: lstm.zeros_like(),
                attention: attention.zeros_like(),
            },
        }
    }
}
