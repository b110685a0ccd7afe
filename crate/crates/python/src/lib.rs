//! Python bindings: vocabularies, checkpoints, training and the small
//! numeric helpers.
//!
//! ```python
//! import amsrn_py as am
//! vocab = am.Vocabulary.build(lines)
//! lstm, history = am.train_lstm(vocab, train, valid, d=16, epochs=3)
//! model, _ = am.train_amsrn(lstm, vocab, train, valid, mode="tied")
//! model.evaluate(vocab, test)["ppl"]
//! ```

use amsrn::synth::{trigger_corpus as synth_corpus, TriggerCorpusConfig};
use amsrn::trace::{SentenceRecord, Threshold};
use amsrn::training::{self, EpochMetrics, OptimizerKind, TrainConfig};
use amsrn::{Corpus, Error, SelectionMode};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        Error::NonFiniteLoss { .. } | Error::Numeric { .. } => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

#[pyclass(module = "amsrn_py", frozen)]
struct Vocabulary {
    inner: amsrn::Vocabulary,
}

#[pymethods]
impl Vocabulary {
    /// Most frequent tokens first; `<unk>`, `<s>`, `</s>` are ids 0, 1, 2.
    #[staticmethod]
    #[pyo3(signature = (lines, max_size=None, min_count=1))]
    fn build(lines: Vec<String>, max_size: Option<usize>, min_count: usize) -> PyResult<Self> {
        let inner = amsrn::build_vocab(&lines, max_size, min_count).map_err(py_err)?;
        Ok(Vocabulary { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Vocabulary {
            inner: amsrn::Vocabulary::load(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn tokens(&self) -> Vec<String> {
        self.inner.tokens().to_vec()
    }

    fn id(&self, token: &str) -> Option<usize> {
        self.inner.id(token)
    }

    /// `[<s>, w1 .. wn, </s>]` ids, or None for an empty line.
    fn encode(&self, line: &str) -> Option<Vec<usize>> {
        self.inner.encode(line).map(|s| s.ids().to_vec())
    }

    fn decode(&self, ids: Vec<usize>) -> Vec<String> {
        self.inner.decode(&ids).into_iter().map(str::to_owned).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Vocabulary(size={})", self.inner.len())
    }
}

#[pyclass(module = "amsrn_py", frozen)]
struct Checkpoint {
    inner: training::Checkpoint,
}

#[pymethods]
impl Checkpoint {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Checkpoint {
            inner: training::Checkpoint::load(path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Checkpoint {
            inner: training::Checkpoint::from_json(text).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    /// "lstm" or "amsrn".
    #[getter]
    fn kind(&self) -> &'static str {
        if self.inner.model.is_amsrn() {
            "amsrn"
        } else {
            "lstm"
        }
    }

    #[getter]
    fn mode(&self) -> Option<String> {
        self.inner.model.attention().map(|a| a.mode.to_string())
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.model.d()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.model.vocab_size()
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.inner.meta.best_epoch
    }

    #[getter]
    fn best_valid_ppl(&self) -> Option<f64> {
        self.inner.meta.best_valid_ppl
    }

    /// Perplexity and attention statistics of `lines`.
    fn evaluate<'py>(&self, py: Python<'py>, vocab: &Vocabulary, lines: Vec<String>) -> PyResult<Bound<'py, PyDict>> {
        let corpus = Corpus::encode(&vocab.inner, &lines);
        let eval = training::evaluate_checkpoint(&self.inner, &vocab.inner, &corpus, false).map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("ppl", eval.ppl)?;
        out.set_item("nll", eval.total_nll)?;
        out.set_item("tokens", eval.tokens)?;
        out.set_item("l_reg", eval.total_entropy)?;
        out.set_item("mean_entropy", eval.mean_entropy())?;
        out.set_item("sentence_nll", eval.sentence_nll)?;
        Ok(out)
    }

    /// One JSON-lines trace record per non-empty line.
    #[pyo3(signature = (vocab, lines, threshold=None, verbose=false))]
    fn trace(&self, vocab: &Vocabulary, lines: Vec<String>, threshold: Option<f64>, verbose: bool) -> PyResult<Vec<String>> {
        if !self.inner.model.is_amsrn() {
            return Err(PyValueError::new_err("no attention head in this checkpoint"));
        }
        let corpus = Corpus::encode(&vocab.inner, &lines);
        let eval = training::evaluate_checkpoint(&self.inner, &vocab.inner, &corpus, true).map_err(py_err)?;
        let threshold = threshold.map_or(Threshold::TwiceUniform, Threshold::Fixed);
        corpus
            .sentences
            .iter()
            .zip(eval.traces.unwrap_or_default())
            .enumerate()
            .map(|(i, (s, t))| {
                SentenceRecord::new(i, s, &t, &vocab.inner, threshold, verbose)
                    .and_then(|r| r.to_json_line())
                    .map_err(py_err)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Checkpoint(kind={}, d={}, vocab_size={})",
            self.kind(),
            self.d(),
            self.vocab_size()
        )
    }
}

fn history_dicts<'py>(py: Python<'py>, rows: &[EpochMetrics]) -> PyResult<Vec<Bound<'py, PyDict>>> {
    rows.iter()
        .map(|m| {
            let d = PyDict::new(py);
            d.set_item("epoch", m.epoch)?;
            d.set_item("lr", m.lr)?;
            d.set_item("train_c", m.train_nll)?;
            d.set_item("train_lreg", m.train_lreg)?;
            d.set_item("train_total", m.train_objective)?;
            d.set_item("valid_ppl", m.valid_ppl)?;
            d.set_item("valid_lreg", m.valid_lreg)?;
            d.set_item("valid_mean_entropy", m.valid_mean_entropy)?;
            d.set_item("best_valid_ppl", m.best_valid_ppl)?;
            Ok(d)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn make_config(d: usize, lr: f64, epochs: usize, seed: u64, clip: f64, optimizer: &str, patience: usize) -> PyResult<TrainConfig> {
    let cfg = TrainConfig {
        d,
        lr,
        epochs,
        seed,
        clip,
        optimizer: parse::<OptimizerKind>(optimizer)?,
        patience,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Trains an LSTM language model; returns the best checkpoint and the
/// per-epoch history.
#[pyfunction]
#[pyo3(signature = (vocab, train, valid, d=50, lr=0.1, epochs=10, seed=1, clip=5.0, optimizer="sgd", patience=3))]
#[allow(clippy::too_many_arguments)]
fn train_lstm<'py>(
    py: Python<'py>,
    vocab: &Vocabulary,
    train: Vec<String>,
    valid: Vec<String>,
    d: usize,
    lr: f64,
    epochs: usize,
    seed: u64,
    clip: f64,
    optimizer: &str,
    patience: usize,
) -> PyResult<(Checkpoint, Vec<Bound<'py, PyDict>>)> {
    let cfg = make_config(d, lr, epochs, seed, clip, optimizer, patience)?;
    let train = Corpus::encode(&vocab.inner, &train);
    let valid = Corpus::encode(&vocab.inner, &valid);
    let out = py
        .detach(|| training::train_lstm(&cfg, &vocab.inner, None, &train, &valid, |_| {}))
        .map_err(py_err)?;
    Ok((Checkpoint { inner: out.checkpoint }, history_dicts(py, &out.history)?))
}

/// Fine-tunes an attention model from a pretrained LSTM checkpoint.
#[pyfunction]
#[pyo3(signature = (lstm, vocab, train, valid, mode="tied", lambda_=0.0, lr=0.1, epochs=10, seed=1, clip=5.0, optimizer="sgd", patience=3))]
#[allow(clippy::too_many_arguments)]
fn train_amsrn<'py>(
    py: Python<'py>,
    lstm: &Checkpoint,
    vocab: &Vocabulary,
    train: Vec<String>,
    valid: Vec<String>,
    mode: &str,
    lambda_: f64,
    lr: f64,
    epochs: usize,
    seed: u64,
    clip: f64,
    optimizer: &str,
    patience: usize,
) -> PyResult<(Checkpoint, Vec<Bound<'py, PyDict>>)> {
    let cfg = TrainConfig {
        mode: parse::<SelectionMode>(mode)?,
        lambda: lambda_,
        ..make_config(lstm.d(), lr, epochs, seed, clip, optimizer, patience)?
    };
    cfg.validate().map_err(py_err)?;
    let train = Corpus::encode(&vocab.inner, &train);
    let valid = Corpus::encode(&vocab.inner, &valid);
    let out = py
        .detach(|| training::train_amsrn(&cfg, &lstm.inner, &vocab.inner, &train, &valid, |_| {}))
        .map_err(py_err)?;
    Ok((Checkpoint { inner: out.checkpoint }, history_dicts(py, &out.history)?))
}

/// `exp(total_nll / token_count)`
#[pyfunction]
fn perplexity(total_nll: f64, token_count: usize) -> PyResult<f64> {
    amsrn::perplexity(total_nll, token_count).map_err(py_err)
}

/// Entropy in nats of a probability vector.
#[pyfunction]
fn attention_entropy(alpha: Vec<f64>) -> PyResult<f64> {
    amsrn::attention_entropy(&alpha.into()).map_err(py_err)
}

#[pyfunction]
fn softmax(values: Vec<f64>) -> PyResult<Vec<f64>> {
    amsrn::math::softmax(&values.into())
        .map(|v| v.into_vec())
        .map_err(py_err)
}

/// Sentences that each repeat one trigger word a few words later.
#[pyfunction]
#[pyo3(signature = (sentences, seed=1))]
fn trigger_corpus(sentences: usize, seed: u64) -> Vec<String> {
    synth_corpus(
        &TriggerCorpusConfig {
            sentences,
            ..TriggerCorpusConfig::default()
        },
        seed,
    )
}

#[pymodule]
fn amsrn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Vocabulary>()?;
    m.add_class::<Checkpoint>()?;
    m.add_function(wrap_pyfunction!(train_lstm, m)?)?;
    m.add_function(wrap_pyfunction!(train_amsrn, m)?)?;
    m.add_function(wrap_pyfunction!(perplexity, m)?)?;
    m.add_function(wrap_pyfunction!(attention_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(trigger_corpus, m)?)?;
    Ok(())
}
