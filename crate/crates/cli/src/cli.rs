use std::path::PathBuf;

use amsrn::training::OptimizerKind;
use amsrn::SelectionMode;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "amsrn", version, about = "LSTM language models with memory-selecting attention")]
#[command(propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a vocabulary file from a training corpus.
    BuildVocab(BuildVocabArgs),
    /// Train a plain LSTM language model.
    TrainLstm(TrainLstmArgs),
    /// Fine-tune an attention model from a pretrained LSTM checkpoint.
    TrainAmsrn(TrainAmsrnArgs),
    /// Report perplexity of a checkpoint on a corpus.
    Eval(EvalArgs),
    /// Compare independent, tied and complement selection from one LSTM.
    Ablate(AblateArgs),
    /// Export attention weights for every sentence of a corpus.
    Trace(TraceArgs),
    /// Rank sentences by how much a model improves on a baseline.
    RankImprovements(RankArgs),
}

#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep at most this many regular tokens (specials not counted).
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1, value_parser = positive)]
    pub lr: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 5.0, value_parser = non_negative)]
    pub clip: f64,
    #[arg(long, default_value_t = OptimizerKind::Sgd)]
    pub optimizer: OptimizerKind,
    /// Stop after this many epochs without a validation improvement.
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
}

#[derive(Args, Debug)]
pub struct TrainLstmArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub d: u64,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch log, appended to. Defaults to `<out>.metrics.tsv`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct AttentionArgs {
    #[arg(long, default_value_t = SelectionMode::Tied)]
    pub mode: SelectionMode,
    #[arg(long, default_value_t = 0.0, value_parser = non_negative, allow_negative_numbers = true)]
    pub lambda: f64,
    /// Half-width of the uniform init of the key and selection maps.
    #[arg(long, default_value_t = 0.08, value_parser = non_negative)]
    pub init_scale: f64,
}

#[derive(Args, Debug)]
pub struct TrainAmsrnArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub init_lstm: PathBuf,
    /// Must match the pretrained LSTM when given.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub d: Option<u64>,
    #[command(flatten)]
    pub attention: AttentionArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Corpus to score.
    #[arg(long)]
    pub test: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub init_lstm: PathBuf,
    #[arg(long, default_value_t = 0.0, value_parser = non_negative, allow_negative_numbers = true)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.08, value_parser = non_negative)]
    pub init_scale: f64,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Table file; printed to stdout either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Prefix of the per-mode logs `<metrics>.<mode>.metrics.tsv`;
    /// defaults to `--out`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Sentences to trace.
    #[arg(long)]
    pub test: PathBuf,
    /// JSON-lines trace file.
    #[arg(long)]
    pub out: PathBuf,
    /// Highlight weight; defaults to twice uniform, 2/t.
    #[arg(long, value_parser = non_negative)]
    pub threshold: Option<f64>,
    /// Include the full selection vectors of every step.
    #[arg(long)]
    pub verbose_trace: bool,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    #[arg(long)]
    pub baseline: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Tab-separated ranking; printed to stdout either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only the first N rows.
    #[arg(long)]
    pub top: Option<usize>,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("{s} is not finite"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let x = parse_f64(s)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("must be >= 0, got {s}"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let x = parse_f64(s)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("must be > 0, got {s}"))
    }
}
