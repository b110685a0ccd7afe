//! Single-layer LSTM language model and the hidden-state memory bank.
//!
//! Gate pre-activations are stacked as `[input | forget | output | candidate]`,
//! each block `d` rows tall:
//!
//! ```text
//! z  = W_x x + W_h h_prev + b
//! i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
//! c  = f * c_prev + i * g
//! h  = o * tanh(c)
//! ```
//!
//! No peepholes. `h_0` and `c_0` are zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::ops::{affine, matvec_t, sigmoid_scalar, softmax, softmax_cross_entropy};
use crate::math::{Matrix, Rng, Vector};
use crate::params::ParamSet;

pub const INIT_SCALE: f64 = 0.08;
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// `|v| x d`, one row per token.
    pub embedding: Matrix,
    /// `4d x d` input-to-gates.
    pub w_x: Matrix,
    /// `4d x d` hidden-to-gates.
    pub w_h: Matrix,
    /// `4d` gate bias.
    pub b: Vector,
    /// `|v| x d` language-model head.
    pub w_out: Matrix,
    pub b_out: Vector,
}

impl LstmParams {
    /// Uniform `[-0.08, 0.08]` weights, forget bias 1.0, zero output head.
    ///
    /// With a zero head every position predicts the uniform distribution,
    /// so an untrained model scores perplexity `|v|`.
    pub fn init(vocab_size: usize, d: usize, rng: &mut Rng) -> Result<Self> {
        if vocab_size == 0 || d == 0 {
            return Err(Error::Config(format!(
                "vocabulary size and d must be positive (got {vocab_size}, {d})"
            )));
        }
        let embedding = rng.uniform_matrix(vocab_size, d, INIT_SCALE);
        let w_x = rng.uniform_matrix(4 * d, d, INIT_SCALE);
        let w_h = rng.uniform_matrix(4 * d, d, INIT_SCALE);
        let mut b = Vector::zeros(4 * d);
        for j in d..2 * d {
            b[j] = FORGET_BIAS;
        }
        Ok(LstmParams {
            embedding,
            w_x,
            w_h,
            b,
            w_out: Matrix::zeros(vocab_size, d),
            b_out: Vector::zeros(vocab_size),
        })
    }

    /// All-zero parameters.
    pub fn zeros(vocab_size: usize, d: usize) -> Self {
        LstmParams {
            embedding: Matrix::zeros(vocab_size, d),
            w_x: Matrix::zeros(4 * d, d),
            w_h: Matrix::zeros(4 * d, d),
            b: Vector::zeros(4 * d),
            w_out: Matrix::zeros(vocab_size, d),
            b_out: Vector::zeros(vocab_size),
        }
    }

    pub fn d(&self) -> usize {
        self.embedding.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (v, d) = self.embedding.shape();
        let expect = |name: &'static str, got: (usize, usize), want: (usize, usize)| {
            if got != want {
                Err(Error::shape(name, format!("{got:?}"), format!("expected {want:?}")))
            } else {
                Ok(())
            }
        };
        if v == 0 || d == 0 {
            return Err(Error::shape("embedding", format!("{:?}", (v, d)), "positive dims"));
        }
        expect("w_x", self.w_x.shape(), (4 * d, d))?;
        expect("w_h", self.w_h.shape(), (4 * d, d))?;
        expect("b", (self.b.len(), 1), (4 * d, 1))?;
        expect("w_out", self.w_out.shape(), (v, d))?;
        expect("b_out", (self.b_out.len(), 1), (v, 1))?;
        Ok(())
    }
}

impl ParamSet for LstmParams {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("embedding", self.embedding.as_slice()),
            ("w_x", self.w_x.as_slice()),
            ("w_h", self.w_h.as_slice()),
            ("b", self.b.as_slice()),
            ("w_out", self.w_out.as_slice()),
            ("b_out", self.b_out.as_slice()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("embedding", self.embedding.as_mut_slice()),
            ("w_x", self.w_x.as_mut_slice()),
            ("w_h", self.w_h.as_mut_slice()),
            ("b", self.b.as_mut_slice()),
            ("w_out", self.w_out.as_mut_slice()),
            ("b_out", self.b_out.as_mut_slice()),
        ]
    }

    fn zeros_like(&self) -> Self {
        LstmParams::zeros(self.vocab_size(), self.d())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vector,
    pub c: Vector,
}

impl LstmState {
    pub fn zeros(d: usize) -> Self {
        LstmState {
            h: Vector::zeros(d),
            c: Vector::zeros(d),
        }
    }
}

/// Hidden states `h_0, h_1, ...` of one sentence. The prediction at step `t`
/// (1-based) may read `prefix(t) = [h_0 .. h_{t-1}]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryBank {
    states: Vec<Vector>,
}

impl MemoryBank {
    pub fn new(h0: Vector) -> Self {
        MemoryBank { states: vec![h0] }
    }

    pub fn push(&mut self, h: Vector) {
        self.states.push(h);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Vector> {
        self.states.get(i)
    }

    pub fn states(&self) -> &[Vector] {
        &self.states
    }

    /// `[h_0 .. h_{t-1}]`, the memory available when predicting step `t`.
    pub fn prefix(&self, t: usize) -> &[Vector] {
        &self.states[..t.min(self.states.len())]
    }
}

/// Gate activations of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct CellCache {
    pub token: usize,
    pub i: Vector,
    pub f: Vector,
    pub o: Vector,
    pub g: Vector,
    pub c: Vector,
    pub tanh_c: Vector,
}

fn cell_forward(params: &LstmParams, x: &[f64], prev: &LstmState) -> (CellCache, Vector) {
    let d = params.d();
    let mut z = params.b.clone();
    {
        let z = z.as_mut_slice();
        for (r, zr) in z.iter_mut().enumerate() {
            let wx = params.w_x.row(r);
            let wh = params.w_h.row(r);
            let mut acc = 0.0;
            for j in 0..d {
                acc += wx[j] * x[j];
            }
            for j in 0..d {
                acc += wh[j] * prev.h[j];
            }
            *zr += acc;
        }
    }
    let z = z.as_slice();
    let i: Vector = z[..d].iter().map(|&v| sigmoid_scalar(v)).collect();
    let f: Vector = z[d..2 * d].iter().map(|&v| sigmoid_scalar(v)).collect();
    let o: Vector = z[2 * d..3 * d].iter().map(|&v| sigmoid_scalar(v)).collect();
    let g: Vector = z[3 * d..].iter().map(|&v| v.tanh()).collect();
    let c: Vector = (0..d).map(|j| f[j] * prev.c[j] + i[j] * g[j]).collect();
    let tanh_c = c.map(f64::tanh);
    let h: Vector = (0..d).map(|j| o[j] * tanh_c[j]).collect();
    (
        CellCache {
            token: usize::MAX,
            i,
            f,
            o,
            g,
            c,
            tanh_c,
        },
        h,
    )
}

/// One LSTM step on an already-embedded input.
pub fn lstm_cell(params: &LstmParams, x_embed: &Vector, prev: &LstmState) -> Result<LstmState> {
    params.validate()?;
    let d = params.d();
    if x_embed.len() != d {
        return Err(Error::shape("lstm_cell input", x_embed.shape_str(), format!("d = {d}")));
    }
    if prev.h.len() != d || prev.c.len() != d {
        return Err(Error::shape(
            "lstm_cell state",
            format!("h {} c {}", prev.h.shape_str(), prev.c.shape_str()),
            format!("d = {d}"),
        ));
    }
    let (cache, h) = cell_forward(params, x_embed.as_slice(), prev);
    Ok(LstmState { h, c: cache.c })
}

pub(crate) fn check_tokens(tokens: &[usize], vocab_size: usize) -> Result<()> {
    if let Some((position, &id)) = tokens.iter().enumerate().find(|(_, &id)| id >= vocab_size) {
        return Err(Error::Vocabulary {
            position,
            id,
            size: vocab_size,
        });
    }
    Ok(())
}

/// Cached forward pass over one sentence.
#[derive(Debug, Clone)]
pub(crate) struct LstmForward {
    pub cells: Vec<CellCache>,
    pub bank: MemoryBank,
}

pub(crate) fn forward_cached(params: &LstmParams, tokens: &[usize]) -> Result<LstmForward> {
    params.validate()?;
    if tokens.is_empty() {
        return Err(Error::Domain("empty token sequence".into()));
    }
    check_tokens(tokens, params.vocab_size())?;
    let d = params.d();
    let mut state = LstmState::zeros(d);
    let mut bank = MemoryBank::new(state.h.clone());
    let mut cells = Vec::with_capacity(tokens.len());
    for &tok in tokens {
        let (mut cache, h) = cell_forward(params, params.embedding.row(tok), &state);
        cache.token = tok;
        state = LstmState {
            h: h.clone(),
            c: cache.c.clone(),
        };
        bank.push(h);
        cells.push(cache);
    }
    Ok(LstmForward { cells, bank })
}

/// Runs the LSTM over `tokens`. Returns the state after each token and the
/// bank `[h_0 .. h_T]`.
pub fn run_sentence(params: &LstmParams, tokens: &[usize]) -> Result<(Vec<LstmState>, MemoryBank)> {
    let fwd = forward_cached(params, tokens)?;
    let states = fwd
        .cells
        .iter()
        .enumerate()
        .map(|(t, cell)| LstmState {
            h: fwd.bank.states()[t + 1].clone(),
            c: cell.c.clone(),
        })
        .collect();
    Ok((states, fwd.bank))
}

/// Next-token distributions `softmax(W_out h_t + b_out)` for every position.
pub fn lstm_lm_forward(params: &LstmParams, tokens: &[usize]) -> Result<(Vec<Vector>, MemoryBank)> {
    let fwd = forward_cached(params, tokens)?;
    let dists = fwd.bank.states()[1..]
        .iter()
        .map(|h| softmax(&affine(&params.w_out, h, &params.b_out)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((dists, fwd.bank))
}

pub(crate) fn check_alignment(inputs: &[usize], targets: &[usize]) -> Result<()> {
    if inputs.len() != targets.len() {
        return Err(Error::shape(
            "targets",
            format!("{} inputs", inputs.len()),
            format!("{} targets", targets.len()),
        ));
    }
    Ok(())
}

/// Summed next-token NLL (nats) of the plain LSTM language model.
pub fn lstm_loss(params: &LstmParams, inputs: &[usize], targets: &[usize]) -> Result<f64> {
    check_alignment(inputs, targets)?;
    check_tokens(targets, params.vocab_size())?;
    let fwd = forward_cached(params, inputs)?;
    let mut nll = 0.0;
    for (t, &y) in targets.iter().enumerate() {
        let h = &fwd.bank.states()[t + 1];
        let logits = affine(&params.w_out, h, &params.b_out)?;
        nll += softmax_cross_entropy(&logits, y)?.0;
    }
    Ok(nll)
}

/// Backpropagation through time given `dh[t]`, the gradient reaching each
/// bank state `h_t` from outside the recurrence (heads, attention reads).
/// `dh[0]` is ignored since `h_0` is fixed.
pub(crate) fn backprop_through_time(
    params: &LstmParams,
    fwd: &LstmForward,
    dh: &[Vector],
    grads: &mut LstmParams,
) -> Result<()> {
    let d = params.d();
    let steps = fwd.cells.len();
    debug_assert_eq!(dh.len(), steps + 1);
    let zero = Vector::zeros(d);
    let mut dh_next = Vector::zeros(d);
    let mut dc_next = Vector::zeros(d);
    let mut dz = Vector::zeros(4 * d);
    for t in (0..steps).rev() {
        let cell = &fwd.cells[t];
        let h_prev = &fwd.bank.states()[t];
        let c_prev = if t == 0 { &zero } else { &fwd.cells[t - 1].c };
        let x = params.embedding.row(cell.token);
        for j in 0..d {
            let dh_j = dh[t + 1][j] + dh_next[j];
            let (i, f, o, g, tc) = (cell.i[j], cell.f[j], cell.o[j], cell.g[j], cell.tanh_c[j]);
            let dc = dh_j * o * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * g * i * (1.0 - i);
            dz[d + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * d + j] = dh_j * tc * o * (1.0 - o);
            dz[3 * d + j] = dc * i * (1.0 - g * g);
            dc_next[j] = dc * f;
        }
        let x_vec = Vector::from(x.to_vec());
        grads.w_x.add_outer(1.0, &dz, &x_vec)?;
        grads.w_h.add_outer(1.0, &dz, h_prev)?;
        grads.b.add_scaled(1.0, &dz)?;
        let dx = matvec_t(&params.w_x, &dz)?;
        for (e, g) in grads.embedding.row_mut(cell.token).iter_mut().zip(dx.iter()) {
            *e += g;
        }
        dh_next = matvec_t(&params.w_h, &dz)?;
    }
    Ok(())
}

/// Loss and gradients of the plain LSTM language model on one sentence.
pub fn lstm_backward(params: &LstmParams, inputs: &[usize], targets: &[usize]) -> Result<(f64, LstmParams)> {
    check_alignment(inputs, targets)?;
    check_tokens(targets, params.vocab_size())?;
    let fwd = forward_cached(params, inputs)?;
    let d = params.d();
    let mut grads = params.zeros_like();
    let mut dh = vec![Vector::zeros(d); inputs.len() + 1];
    let mut nll = 0.0;
    for (t, &y) in targets.iter().enumerate() {
        let h = &fwd.bank.states()[t + 1];
        let logits = affine(&params.w_out, h, &params.b_out)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, y)?;
        nll += loss;
        grads.w_out.add_outer(1.0, &dlogits, h)?;
        grads.b_out.add_scaled(1.0, &dlogits)?;
        dh[t + 1] = matvec_t(&params.w_out, &dlogits)?;
    }
    backprop_through_time(params, &fwd, &dh, &mut grads)?;
    Ok((nll, grads))
}
