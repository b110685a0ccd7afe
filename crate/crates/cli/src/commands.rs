use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use amsrn::corpus::read_lines;
use amsrn::trace::{SentenceRecord, Threshold};
use amsrn::training::{
    ablate, append_metrics, evaluate_checkpoint, sentence_ranking, train_amsrn, train_lstm, Checkpoint, EpochMetrics,
    TrainConfig, ABLATION_HEADER, ABLATION_MODES,
};
use amsrn::{build_vocab, Corpus, SelectionMode, Vocabulary};
use anyhow::{Context, Result};

use crate::cli::*;

pub enum Failure {
    /// Flags that are well-formed but cannot be used together with the
    /// given inputs.
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(err: E) -> Self {
        Failure::Runtime(err.into())
    }
}

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::BuildVocab(args) => build_vocab_cmd(args),
        Command::TrainLstm(args) => train_lstm_cmd(args),
        Command::TrainAmsrn(args) => train_amsrn_cmd(args),
        Command::Eval(args) => eval_cmd(args),
        Command::Ablate(args) => ablate_cmd(args),
        Command::Trace(args) => trace_cmd(args),
        Command::RankImprovements(args) => rank_cmd(args),
    }
}

fn config(d: usize, optim: &OptimArgs) -> TrainConfig {
    TrainConfig {
        d,
        lr: optim.lr,
        optimizer: optim.optimizer,
        epochs: optim.epochs,
        clip: optim.clip,
        seed: optim.seed,
        patience: optim.patience,
        ..TrainConfig::default()
    }
}

fn metrics_path(explicit: Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let mut name = out.as_os_str().to_owned();
        name.push(".metrics.tsv");
        PathBuf::from(name)
    })
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::load(path).with_context(|| format!("loading vocabulary {}", path.display()))
}

fn load_corpus(vocab: &Vocabulary, path: &Path) -> Result<Corpus> {
    let corpus = Corpus::load(vocab, path).with_context(|| format!("loading corpus {}", path.display()))?;
    if corpus.skipped > 0 {
        eprintln!("{}: skipped {} empty lines", path.display(), corpus.skipped);
    }
    Ok(corpus)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn log_epoch(tag: &str, m: &EpochMetrics) {
    eprintln!(
        "{tag}epoch {:>3}  lr {:.4}  train C {:.2}  L_reg {:.2}  valid ppl {:.3}  best {:.3}",
        m.epoch, m.lr, m.train_nll, m.train_lreg, m.valid_ppl, m.best_valid_ppl
    );
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn build_vocab_cmd(args: BuildVocabArgs) -> Result<(), Failure> {
    let lines = read_lines(&args.train)?;
    let vocab = build_vocab(&lines, args.max_size, args.min_count)?;
    vocab.save(&args.out)?;
    println!("{}\t{}", vocab.len(), vocab.hash());
    Ok(())
}

fn train_lstm_cmd(args: TrainLstmArgs) -> Result<(), Failure> {
    let cfg = config(args.d as usize, &args.optim);
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let vocab = load_vocab(&args.data.vocab)?;
    let train = load_corpus(&vocab, &args.data.train)?;
    let valid = load_corpus(&vocab, &args.data.valid)?;
    let out = train_lstm(&cfg, &vocab, Some(&args.data.vocab), &train, &valid, |m| log_epoch("", m))?;
    out.checkpoint.save(&args.out)?;
    append_metrics(metrics_path(args.metrics, &args.out), &out.history)?;
    println!("best valid ppl {:.4} at epoch {}", out.checkpoint.meta.best_valid_ppl.unwrap_or(f64::NAN), out.checkpoint.meta.best_epoch);
    Ok(())
}

/// Reads the pretrained LSTM and derives the fine-tuning config from it.
fn pretrained(path: &Path, d: Option<u64>) -> Result<(Checkpoint, usize), Failure> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model.is_amsrn() {
        return Err(Failure::Usage(format!("{} is not a plain LSTM checkpoint", path.display())));
    }
    let d_model = ckpt.model.d();
    if let Some(d) = d.filter(|&d| d as usize != d_model) {
        return Err(Failure::Usage(format!("--d {d} does not match the pretrained LSTM (d = {d_model})")));
    }
    Ok((ckpt, d_model))
}

fn train_amsrn_cmd(args: TrainAmsrnArgs) -> Result<(), Failure> {
    let (lstm, d) = pretrained(&args.init_lstm, args.d)?;
    let cfg = TrainConfig {
        mode: args.attention.mode,
        lambda: args.attention.lambda,
        init_scale: args.attention.init_scale,
        ..config(d, &args.optim)
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let vocab = load_vocab(&args.data.vocab)?;
    let train = load_corpus(&vocab, &args.data.train)?;
    let valid = load_corpus(&vocab, &args.data.valid)?;
    let out = train_amsrn(&cfg, &lstm, &vocab, &train, &valid, |m| log_epoch("", m))?;
    out.checkpoint.save(&args.out)?;
    append_metrics(metrics_path(args.metrics, &args.out), &out.history)?;
    println!("best valid ppl {:.4} at epoch {}", out.checkpoint.meta.best_valid_ppl.unwrap_or(f64::NAN), out.checkpoint.meta.best_epoch);
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<(), Failure> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let vocab = load_vocab(&args.vocab)?;
    let corpus = load_corpus(&vocab, &args.test)?;
    let eval = evaluate_checkpoint(&ckpt, &vocab, &corpus, false)?;
    println!("ppl\t{}", eval.ppl);
    println!("nll\t{}", eval.total_nll);
    println!("tokens\t{}", eval.tokens);
    println!("sentences\t{}", corpus.len());
    if ckpt.model.is_amsrn() {
        println!("l_reg\t{}", eval.total_entropy);
        println!("mean_entropy\t{}", eval.mean_entropy());
    }
    Ok(())
}

fn ablate_cmd(args: AblateArgs) -> Result<(), Failure> {
    let (lstm, d) = pretrained(&args.init_lstm, None)?;
    let cfg = TrainConfig {
        lambda: args.lambda,
        init_scale: args.init_scale,
        ..config(d, &args.optim)
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let vocab = load_vocab(&args.data.vocab)?;
    let train = load_corpus(&vocab, &args.data.train)?;
    let valid = load_corpus(&vocab, &args.data.valid)?;
    let test = load_corpus(&vocab, &args.test)?;
    let mut logs: Vec<(SelectionMode, EpochMetrics)> = Vec::new();
    let rows = ablate(&cfg, &lstm, &vocab, &train, &valid, &test, &ABLATION_MODES, |mode, m| {
        log_epoch(&format!("{mode:<11} "), m);
        logs.push((mode, m.clone()));
    })?;
    // One log per mode: `<base>.<mode>.metrics.tsv`.
    if let Some(base) = args.metrics.or(args.out.clone()) {
        for mode in ABLATION_MODES {
            let mut name = base.as_os_str().to_owned();
            name.push(format!(".{mode}.metrics.tsv"));
            let rows: Vec<EpochMetrics> = logs.iter().filter(|(m, _)| *m == mode).map(|(_, r)| r.clone()).collect();
            append_metrics(PathBuf::from(name), &rows)?;
        }
    }
    let mut table = format!("{ABLATION_HEADER}\n");
    for row in &rows {
        table.push_str(&row.to_tsv());
        table.push('\n');
    }
    if let Some(path) = &args.out {
        write_out(path, &table)?;
    }
    print!("{table}");
    Ok(())
}

fn trace_cmd(args: TraceArgs) -> Result<(), Failure> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    if !ckpt.model.is_amsrn() {
        return Err(Failure::Usage(format!(
            "{} has no attention head; trace needs an attention checkpoint",
            args.checkpoint.display()
        )));
    }
    let vocab = load_vocab(&args.vocab)?;
    let corpus = load_corpus(&vocab, &args.test)?;
    let eval = evaluate_checkpoint(&ckpt, &vocab, &corpus, true)?;
    let traces = eval.traces.expect("attention model yields traces");
    let threshold = args.threshold.map_or(Threshold::TwiceUniform, Threshold::Fixed);

    let mut jsonl = String::new();
    let stdout = io::stdout();
    let mut text = stdout.lock();
    for (i, (sentence, trace)) in corpus.sentences.iter().zip(&traces).enumerate() {
        let record = SentenceRecord::new(i, sentence, trace, &vocab, threshold, args.verbose_trace)?;
        jsonl.push_str(&record.to_json_line()?);
        jsonl.push('\n');
        writeln!(text, "{}", record.render())?;
    }
    write_out(&args.out, &jsonl)?;
    Ok(())
}

fn rank_cmd(args: RankArgs) -> Result<(), Failure> {
    let baseline = load_checkpoint(&args.baseline)?;
    let model = load_checkpoint(&args.checkpoint)?;
    let vocab = load_vocab(&args.vocab)?;
    let lines: Vec<String> = read_lines(&args.test)?
        .into_iter()
        .filter(|l| l.split_whitespace().next().is_some())
        .collect();
    let corpus = Corpus::encode(&vocab, &lines);
    let base_eval = evaluate_checkpoint(&baseline, &vocab, &corpus, false)?;
    let model_eval = evaluate_checkpoint(&model, &vocab, &corpus, false)?;
    let ranked = sentence_ranking(&base_eval.sentence_nll, &model_eval.sentence_nll)?;

    let mut table = String::from("rank\tsentence\tbaseline_nll\tmodel_nll\timprovement\ttext\n");
    for (rank, r) in ranked.iter().take(args.top.unwrap_or(usize::MAX)).enumerate() {
        table.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            rank + 1,
            r.index,
            r.baseline_nll,
            r.model_nll,
            r.improvement,
            lines[r.index].split_whitespace().collect::<Vec<_>>().join(" ")
        ));
    }
    if let Some(path) = &args.out {
        write_out(path, &table)?;
    }
    print!("{table}");
    Ok(())
}
