//! Attention head with per-dimension memory selection.
//!
//! At prediction step `t` the head reads the bank `[h_0 .. h_{t-1}]`:
//!
//! ```text
//! w1, w2  = selection vectors from h_t (see `SelectionMode`)
//! k       = W_kh h_t + b_k
//! e_i     = (h_i * w1) . k
//! alpha   = softmax(e)
//! r       = sum_i alpha_i (h_i * w2)
//! P       = softmax(W_ph h_t + W_pr r + b_p)
//! ```
//!
//! Training minimises `C + lambda * L_reg` where `C` is the summed
//! next-token NLL and `L_reg` the summed entropy of every `alpha`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{backprop_through_time, check_alignment, check_tokens, forward_cached, LstmParams};
use crate::math::ops::{affine, matvec_t, sigmoid, softmax, softmax_cross_entropy};
use crate::math::{Matrix, Rng, Vector};
use crate::params::ParamSet;

/// Probabilities below this contribute nothing to the entropy.
pub const ENTROPY_FLOOR: f64 = 1e-300;

/// How the two selection vectors are produced from `h_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// No selection: `w1 = w2 = 1`.
    None,
    /// Two sigmoid layers: `w1 = σ(W_hh1 h + b_h1)`, `w2 = σ(W_hh2 h + b_h2)`.
    Independent,
    /// One sigmoid layer shared by both: `w2 = w1 = σ(W_hh1 h + b_h1)`.
    Tied,
    /// One sigmoid layer produces `w2 = σ(W_hh1 h + b_h1)`; `w1 = 1 - w2`.
    Complement,
}

impl SelectionMode {
    pub const ALL: [SelectionMode; 4] = [
        SelectionMode::None,
        SelectionMode::Independent,
        SelectionMode::Tied,
        SelectionMode::Complement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMode::None => "none",
            SelectionMode::Independent => "independent",
            SelectionMode::Tied => "tied",
            SelectionMode::Complement => "complement",
        }
    }

    fn selection_maps(self) -> usize {
        match self {
            SelectionMode::None => 0,
            SelectionMode::Tied | SelectionMode::Complement => 1,
            SelectionMode::Independent => 2,
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SelectionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown selection mode {s:?} (expected none, independent, tied or complement)"
                ))
            })
    }
}

/// Affine map followed by a sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionMap {
    pub w: Matrix,
    pub b: Vector,
}

impl SelectionMap {
    fn apply(&self, h: &Vector) -> Result<Vector> {
        Ok(sigmoid(&affine(&self.w, h, &self.b)?))
    }

    fn zeros(d: usize) -> Self {
        SelectionMap {
            w: Matrix::zeros(d, d),
            b: Vector::zeros(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmsrnParams {
    pub mode: SelectionMode,
    /// `d x d`
    pub w_kh: Matrix,
    pub b_k: Vector,
    /// `W_hh1, b_h1`; absent in mode `none`.
    pub select1: Option<SelectionMap>,
    /// `W_hh2, b_h2`; present only in mode `independent`.
    pub select2: Option<SelectionMap>,
    /// `|v| x d`
    pub w_ph: Matrix,
    /// `|v| x d`
    pub w_pr: Matrix,
    pub b_p: Vector,
}

impl AmsrnParams {
    pub fn zeros(mode: SelectionMode, vocab_size: usize, d: usize) -> Self {
        let maps = mode.selection_maps();
        AmsrnParams {
            mode,
            w_kh: Matrix::zeros(d, d),
            b_k: Vector::zeros(d),
            select1: (maps >= 1).then(|| SelectionMap::zeros(d)),
            select2: (maps >= 2).then(|| SelectionMap::zeros(d)),
            w_ph: Matrix::zeros(vocab_size, d),
            w_pr: Matrix::zeros(vocab_size, d),
            b_p: Vector::zeros(vocab_size),
        }
    }

    /// Starting point for fine-tuning on top of a trained LSTM: the output
    /// head copies the LSTM head, `W_pr = 0`, and the key and selection
    /// weights are uniform in `[-scale, scale]` with zero biases. At this
    /// point the model's predictions equal the LSTM's exactly.
    pub fn from_lstm(lstm: &LstmParams, mode: SelectionMode, scale: f64, rng: &mut Rng) -> Self {
        let d = lstm.d();
        let mut p = AmsrnParams::zeros(mode, lstm.vocab_size(), d);
        p.w_kh = rng.uniform_matrix(d, d, scale);
        for map in [&mut p.select1, &mut p.select2].into_iter().flatten() {
            map.w = rng.uniform_matrix(d, d, scale);
        }
        p.w_ph = lstm.w_out.clone();
        p.b_p = lstm.b_out.clone();
        p
    }

    pub fn d(&self) -> usize {
        self.w_kh.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.w_ph.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        let v = self.vocab_size();
        let check = |name: &'static str, got: (usize, usize), want: (usize, usize)| {
            if got != want {
                Err(Error::shape(name, format!("{got:?}"), format!("expected {want:?}")))
            } else {
                Ok(())
            }
        };
        check("w_kh", self.w_kh.shape(), (d, d))?;
        check("b_k", (self.b_k.len(), 1), (d, 1))?;
        check("w_ph", self.w_ph.shape(), (v, d))?;
        check("w_pr", self.w_pr.shape(), (v, d))?;
        check("b_p", (self.b_p.len(), 1), (v, 1))?;
        let present = self.select1.is_some() as usize + self.select2.is_some() as usize;
        if present != self.mode.selection_maps() || (self.select2.is_some() && self.select1.is_none()) {
            return Err(Error::Config(format!(
                "mode {} expects {} selection map(s), found {present}",
                self.mode,
                self.mode.selection_maps()
            )));
        }
        for map in [&self.select1, &self.select2].into_iter().flatten() {
            check("w_hh", map.w.shape(), (d, d))?;
            check("b_h", (map.b.len(), 1), (d, 1))?;
        }
        Ok(())
    }

    fn check_compatible(&self, lstm: &LstmParams) -> Result<()> {
        lstm.validate()?;
        self.validate()?;
        if self.d() != lstm.d() || self.vocab_size() != lstm.vocab_size() {
            return Err(Error::Config(format!(
                "attention head is d={} |v|={} but the LSTM is d={} |v|={}",
                self.d(),
                self.vocab_size(),
                lstm.d(),
                lstm.vocab_size()
            )));
        }
        Ok(())
    }
}

impl ParamSet for AmsrnParams {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = vec![("w_kh", self.w_kh.as_slice()), ("b_k", self.b_k.as_slice())];
        if let Some(m) = &self.select1 {
            out.push(("w_hh1", m.w.as_slice()));
            out.push(("b_h1", m.b.as_slice()));
        }
        if let Some(m) = &self.select2 {
            out.push(("w_hh2", m.w.as_slice()));
            out.push(("b_h2", m.b.as_slice()));
        }
        out.push(("w_ph", self.w_ph.as_slice()));
        out.push(("w_pr", self.w_pr.as_slice()));
        out.push(("b_p", self.b_p.as_slice()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = vec![
            ("w_kh", self.w_kh.as_mut_slice()),
            ("b_k", self.b_k.as_mut_slice()),
        ];
        if let Some(m) = &mut self.select1 {
            out.push(("w_hh1", m.w.as_mut_slice()));
            out.push(("b_h1", m.b.as_mut_slice()));
        }
        if let Some(m) = &mut self.select2 {
            out.push(("w_hh2", m.w.as_mut_slice()));
            out.push(("b_h2", m.b.as_mut_slice()));
        }
        out.push(("w_ph", self.w_ph.as_mut_slice()));
        out.push(("w_pr", self.w_pr.as_mut_slice()));
        out.push(("b_p", self.b_p.as_mut_slice()));
        out
    }

    fn zeros_like(&self) -> Self {
        AmsrnParams::zeros(self.mode, self.vocab_size(), self.d())
    }
}

/// Selection vectors `(w_h1, w_h2)` for the current hidden state.
pub fn selection_vectors(params: &AmsrnParams, h_t: &Vector) -> Result<(Vector, Vector)> {
    params.validate()?;
    check_hidden(params, h_t)?;
    select(params, h_t).map(|s| (s.w1, s.w2))
}

struct Selection {
    w1: Vector,
    w2: Vector,
    // Raw sigmoid outputs of the learned maps, for the backward pass.
    s1: Option<Vector>,
    s2: Option<Vector>,
}

fn select(params: &AmsrnParams, h: &Vector) -> Result<Selection> {
    let d = h.len();
    let s1 = params.select1.as_ref().map(|m| m.apply(h)).transpose()?;
    let s2 = params.select2.as_ref().map(|m| m.apply(h)).transpose()?;
    let (w1, w2) = match params.mode {
        SelectionMode::None => (Vector::filled(d, 1.0), Vector::filled(d, 1.0)),
        SelectionMode::Independent => (s1.clone().expect("validated"), s2.clone().expect("validated")),
        SelectionMode::Tied => {
            let s = s1.clone().expect("validated");
            (s.clone(), s)
        }
        SelectionMode::Complement => {
            let s = s1.clone().expect("validated");
            (s.map(|x| 1.0 - x), s)
        }
    };
    Ok(Selection { w1, w2, s1, s2 })
}

fn check_hidden(params: &AmsrnParams, h: &Vector) -> Result<()> {
    if h.len() != params.d() {
        return Err(Error::shape("hidden state", h.shape_str(), format!("d = {}", params.d())));
    }
    Ok(())
}

/// `k_t = W_kh h_t + b_k`
pub fn attention_key(params: &AmsrnParams, h_t: &Vector) -> Result<Vector> {
    check_hidden(params, h_t)?;
    affine(&params.w_kh, h_t, &params.b_k)
}

/// `e_i = (h_i * w1) . k` for every bank entry, in bank order.
pub fn attention_scores(bank: &[Vector], w_h1: &Vector, key: &Vector) -> Result<Vector> {
    if bank.is_empty() {
        return Err(Error::Domain("attention over an empty memory bank".into()));
    }
    if w_h1.len() != key.len() {
        return Err(Error::shape("attention_scores", w_h1.shape_str(), key.shape_str()));
    }
    bank.iter()
        .map(|h| {
            if h.len() != key.len() {
                return Err(Error::shape("attention_scores", h.shape_str(), key.shape_str()));
            }
            Ok(h.iter().zip(w_h1.iter()).zip(key.iter()).map(|((h, w), k)| h * w * k).sum())
        })
        .collect()
}

/// Softmax of the scores.
pub fn attention_weights(scores: &Vector) -> Result<Vector> {
    softmax(scores)
}

/// `r = sum_i alpha_i (h_i * w2)`
pub fn relevant_vector(bank: &[Vector], alpha: &Vector, w_h2: &Vector) -> Result<Vector> {
    if alpha.len() != bank.len() {
        return Err(Error::shape("relevant_vector", format!("bank of {}", bank.len()), alpha.shape_str()));
    }
    let mut r = Vector::zeros(w_h2.len());
    for (h, &a) in bank.iter().zip(alpha.iter()) {
        if h.len() != w_h2.len() {
            return Err(Error::shape("relevant_vector", h.shape_str(), w_h2.shape_str()));
        }
        for j in 0..r.len() {
            r[j] += a * (h[j] * w_h2[j]);
        }
    }
    Ok(r)
}

fn output_logits(params: &AmsrnParams, h_t: &Vector, r_t: &Vector) -> Result<Vector> {
    let mut logits = affine(&params.w_ph, h_t, &params.b_p)?;
    for (i, l) in logits.as_mut_slice().iter_mut().enumerate() {
        *l += params.w_pr.row(i).iter().zip(r_t.iter()).map(|(w, r)| w * r).sum::<f64>();
    }
    Ok(logits)
}

/// `softmax(W_ph h_t + W_pr r_t + b_p)`
pub fn output_distribution(params: &AmsrnParams, h_t: &Vector, r_t: &Vector) -> Result<Vector> {
    check_hidden(params, h_t)?;
    check_hidden(params, r_t)?;
    softmax(&output_logits(params, h_t, r_t)?)
}

/// Entropy `-Σ α ln α` in nats, with `0 ln 0 = 0`.
pub fn attention_entropy(alpha: &Vector) -> Result<f64> {
    let total = alpha.sum();
    if alpha.is_empty() || !((total - 1.0).abs() <= 1e-9) || alpha.iter().any(|&a| a < 0.0) {
        return Err(Error::Domain(format!(
            "attention weights must form a probability vector (sum = {total})"
        )));
    }
    Ok(entropy_unchecked(alpha))
}

fn entropy_unchecked(alpha: &Vector) -> f64 {
    alpha
        .iter()
        .filter(|&&a| a >= ENTROPY_FLOOR)
        .map(|&a| -a * a.ln())
        .sum()
}

/// What the head computed at one prediction step.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStep {
    /// 1-based prediction step `t`; `alpha` covers bank slots `0..t`.
    pub position: usize,
    pub alpha: Vector,
    pub w1: Vector,
    pub w2: Vector,
    pub key: Vector,
    pub relevant: Vector,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttentionTrace {
    pub steps: Vec<AttentionStep>,
}

impl AttentionTrace {
    /// `Σ_t H(α_t)`, this sentence's share of `L_reg`.
    pub fn total_entropy(&self) -> f64 {
        self.steps.iter().map(|s| s.entropy).sum()
    }
}

struct StepCache {
    sel: Selection,
    key: Vector,
    alpha: Vector,
    // Σ α_i h_i, so that r = w2 * pooled.
    pooled: Vector,
    relevant: Vector,
    logits: Vector,
    entropy: f64,
}

fn head_step(params: &AmsrnParams, bank: &[Vector], h_t: &Vector) -> Result<StepCache> {
    let sel = select(params, h_t)?;
    let key = affine(&params.w_kh, h_t, &params.b_k)?;
    let scores = attention_scores(bank, &sel.w1, &key)?;
    let alpha = softmax(&scores)?;
    let mut pooled = Vector::zeros(h_t.len());
    for (h, &a) in bank.iter().zip(alpha.iter()) {
        pooled.add_scaled(a, h)?;
    }
    let relevant = relevant_vector(bank, &alpha, &sel.w2)?;
    let logits = output_logits(params, h_t, &relevant)?;
    let entropy = entropy_unchecked(&alpha);
    Ok(StepCache {
        sel,
        key,
        alpha,
        pooled,
        relevant,
        logits,
        entropy,
    })
}

/// Next-token distributions and the attention trace for one sentence.
pub fn amsrn_forward(
    lstm: &LstmParams,
    att: &AmsrnParams,
    tokens: &[usize],
) -> Result<(Vec<Vector>, AttentionTrace)> {
    att.check_compatible(lstm)?;
    let fwd = forward_cached(lstm, tokens)?;
    let states = fwd.bank.states();
    let mut dists = Vec::with_capacity(tokens.len());
    let mut trace = AttentionTrace::default();
    for t in 1..=tokens.len() {
        let step = head_step(att, &states[..t], &states[t])?;
        dists.push(softmax(&step.logits)?);
        trace.steps.push(AttentionStep {
            position: t,
            alpha: step.alpha,
            w1: step.sel.w1,
            w2: step.sel.w2,
            key: step.key,
            relevant: step.relevant,
            entropy: step.entropy,
        });
    }
    Ok((dists, trace))
}

/// Per-sentence objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SentenceLoss {
    /// Summed next-token NLL `C` (nats).
    pub nll: f64,
    /// Summed attention entropy `L_reg` (zero for a plain LSTM).
    pub entropy: f64,
    /// Number of predicted tokens.
    pub tokens: usize,
}

impl SentenceLoss {
    pub fn objective(&self, lambda: f64) -> f64 {
        self.nll + lambda * self.entropy
    }
}

/// Objective terms without gradients.
pub fn amsrn_loss(
    lstm: &LstmParams,
    att: &AmsrnParams,
    inputs: &[usize],
    targets: &[usize],
) -> Result<SentenceLoss> {
    amsrn_score(lstm, att, inputs, targets).map(|(loss, _)| loss)
}

/// Objective terms together with the attention trace that produced them.
pub fn amsrn_score(
    lstm: &LstmParams,
    att: &AmsrnParams,
    inputs: &[usize],
    targets: &[usize],
) -> Result<(SentenceLoss, AttentionTrace)> {
    check_alignment(inputs, targets)?;
    check_tokens(targets, lstm.vocab_size())?;
    att.check_compatible(lstm)?;
    let fwd = forward_cached(lstm, inputs)?;
    let states = fwd.bank.states();
    let mut loss = SentenceLoss {
        tokens: targets.len(),
        ..Default::default()
    };
    let mut trace = AttentionTrace::default();
    for (idx, &y) in targets.iter().enumerate() {
        let t = idx + 1;
        let step = head_step(att, &states[..t], &states[t])?;
        loss.nll += softmax_cross_entropy(&step.logits, y)?.0;
        loss.entropy += step.entropy;
        trace.steps.push(AttentionStep {
            position: t,
            alpha: step.alpha,
            w1: step.sel.w1,
            w2: step.sel.w2,
            key: step.key,
            relevant: step.relevant,
            entropy: step.entropy,
        });
    }
    Ok((loss, trace))
}

/// Gradients of `C + lambda * L_reg` for one sentence with respect to every
/// LSTM and attention parameter, including the paths through bank reads.
pub fn amsrn_backward(
    lstm: &LstmParams,
    att: &AmsrnParams,
    inputs: &[usize],
    targets: &[usize],
    lambda: f64,
) -> Result<(SentenceLoss, LstmParams, AmsrnParams)> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be non-negative, got {lambda}")));
    }
    check_alignment(inputs, targets)?;
    check_tokens(targets, lstm.vocab_size())?;
    att.check_compatible(lstm)?;
    let fwd = forward_cached(lstm, inputs)?;
    let states = fwd.bank.states();
    let d = lstm.d();

    let mut g_lstm = lstm.zeros_like();
    let mut g_att = att.zeros_like();
    let mut dh = vec![Vector::zeros(d); inputs.len() + 1];
    let mut loss = SentenceLoss {
        tokens: targets.len(),
        ..Default::default()
    };

    for (idx, &y) in targets.iter().enumerate() {
        let t = idx + 1;
        let bank = &states[..t];
        let h_t = &states[t];
        let step = head_step(att, bank, h_t)?;
        let (nll, dlogits) = softmax_cross_entropy(&step.logits, y)?;
        loss.nll += nll;
        loss.entropy += step.entropy;

        // Output layer.
        g_att.w_ph.add_outer(1.0, &dlogits, h_t)?;
        g_att.w_pr.add_outer(1.0, &dlogits, &step.relevant)?;
        g_att.b_p.add_scaled(1.0, &dlogits)?;
        let mut dh_t = matvec_t(&att.w_ph, &dlogits)?;
        let dr = matvec_t(&att.w_pr, &dlogits)?;

        // r = w2 * pooled, pooled = Σ α_i h_i.
        let dw2: Vector = (0..d).map(|j| dr[j] * step.pooled[j]).collect();
        let dpooled: Vector = (0..d).map(|j| dr[j] * step.sel.w2[j]).collect();
        let mut dalpha: Vector = bank
            .iter()
            .map(|h| h.iter().zip(dpooled.iter()).map(|(a, b)| a * b).sum())
            .collect();
        for (i, &a) in step.alpha.iter().enumerate() {
            dh[i].add_scaled(a, &dpooled)?;
        }

        // Entropy term: dH/dα_i = -(ln α_i + 1).
        if lambda != 0.0 {
            for (g, &a) in dalpha.as_mut_slice().iter_mut().zip(step.alpha.iter()) {
                if a >= ENTROPY_FLOOR {
                    *g -= lambda * (a.ln() + 1.0);
                }
            }
        }

        // Softmax over scores.
        let inner: f64 = step.alpha.iter().zip(dalpha.iter()).map(|(a, g)| a * g).sum();
        let de: Vec<f64> = step
            .alpha
            .iter()
            .zip(dalpha.iter())
            .map(|(a, g)| a * (g - inner))
            .collect();

        // e_i = Σ_j h_i[j] w1[j] k[j].
        let w1 = &step.sel.w1;
        let key = &step.key;
        let mut dw1 = Vector::zeros(d);
        let mut dkey = Vector::zeros(d);
        for (i, (h, &de_i)) in bank.iter().zip(&de).enumerate() {
            if de_i == 0.0 {
                continue;
            }
            for j in 0..d {
                dh[i][j] += de_i * w1[j] * key[j];
                dw1[j] += de_i * h[j] * key[j];
                dkey[j] += de_i * h[j] * w1[j];
            }
        }

        // Key.
        g_att.w_kh.add_outer(1.0, &dkey, h_t)?;
        g_att.b_k.add_scaled(1.0, &dkey)?;
        dh_t.add_scaled(1.0, &matvec_t(&att.w_kh, &dkey)?)?;

        // Selection maps: gradient reaching each sigmoid output.
        let (ds1, ds2) = match att.mode {
            SelectionMode::None => (None, None),
            SelectionMode::Independent => (Some(dw1), Some(dw2)),
            SelectionMode::Tied => {
                let mut ds = dw1;
                ds.add_scaled(1.0, &dw2)?;
                (Some(ds), None)
            }
            SelectionMode::Complement => {
                let mut ds = dw2;
                ds.add_scaled(-1.0, &dw1)?;
                (Some(ds), None)
            }
        };
        let maps = [
            (ds1, step.sel.s1.as_ref(), att.select1.as_ref(), g_att.select1.as_mut()),
            (ds2, step.sel.s2.as_ref(), att.select2.as_ref(), g_att.select2.as_mut()),
        ];
        for (ds, s, map, gmap) in maps {
            let (Some(ds), Some(s), Some(map), Some(gmap)) = (ds, s, map, gmap) else {
                continue;
            };
            let da: Vector = (0..d).map(|j| ds[j] * s[j] * (1.0 - s[j])).collect();
            gmap.w.add_outer(1.0, &da, h_t)?;
            gmap.b.add_scaled(1.0, &da)?;
            dh_t.add_scaled(1.0, &matvec_t(&map.w, &da)?)?;
        }

        dh[t].add_scaled(1.0, &dh_t)?;
    }

    backprop_through_time(lstm, &fwd, &dh, &mut g_lstm)?;
    Ok((loss, g_lstm, g_att))
}
