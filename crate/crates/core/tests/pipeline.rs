use std::fs;

use amsrn::corpus::{build_vocab, Corpus, Vocabulary};
use amsrn::synth::{trigger_corpus, TriggerCorpusConfig};
use amsrn::trace::{SentenceRecord, Threshold};
use amsrn::training::{
    ablate, append_metrics, evaluate, evaluate_checkpoint, init_amsrn, train_amsrn, train_lstm, Checkpoint,
    TrainConfig, ABLATION_MODES, METRICS_HEADER,
};
use amsrn::{Error, Model, ParamSet, SelectionMode};

fn data() -> (Vocabulary, Corpus, Corpus) {
    let cfg = TriggerCorpusConfig {
        sentences: 120,
        triggers: 10,
        fillers: 8,
        ..TriggerCorpusConfig::default()
    };
    let lines = trigger_corpus(&cfg, 9);
    let vocab = build_vocab(&lines, None, 1).unwrap();
    let train = Corpus::encode(&vocab, &lines[..100]);
    let valid = Corpus::encode(&vocab, &lines[100..]);
    (vocab, train, valid)
}

fn config() -> TrainConfig {
    TrainConfig {
        d: 6,
        epochs: 2,
        lr: 0.1,
        ..TrainConfig::default()
    }
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (vocab, train, valid) = data();
    let vocab_path = dir.path().join("vocab.txt");
    vocab.save(&vocab_path).unwrap();
    let reloaded = Vocabulary::load(&vocab_path).unwrap();
    assert_eq!(reloaded, vocab);
    assert_eq!(fs::read_to_string(&vocab_path).unwrap().lines().take(3).collect::<Vec<_>>(), ["<unk>", "<s>", "</s>"]);

    let out = train_lstm(&config(), &vocab, Some(&vocab_path), &train, &valid, |_| {}).unwrap();
    let path = dir.path().join("lstm.json");
    out.checkpoint.save(&path).unwrap();
    let ckpt = Checkpoint::load(&path).unwrap();
    assert_eq!(ckpt.vocab.path.as_deref(), Some(vocab_path.to_str().unwrap()));
    let a = evaluate_checkpoint(&ckpt, &reloaded, &valid, false).unwrap();
    let b = evaluate(&out.checkpoint.model, &valid, false).unwrap();
    assert_eq!(a.ppl.to_bits(), b.ppl.to_bits());

    let metrics = dir.path().join("m.tsv");
    append_metrics(&metrics, &out.history).unwrap();
    append_metrics(&metrics, &out.history[..1]).unwrap();
    let text = fs::read_to_string(&metrics).unwrap();
    assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
    assert_eq!(text.lines().count(), 1 + out.history.len() + 1);
}

#[test]
fn attention_model_keeps_the_pretrained_predictions_at_epoch_zero() {
    let (vocab, train, valid) = data();
    let pre = train_lstm(&config(), &vocab, None, &train, &valid, |_| {}).unwrap();
    let cfg = TrainConfig {
        mode: SelectionMode::Complement,
        ..config()
    };
    let out = train_amsrn(&cfg, &pre.checkpoint, &vocab, &train, &valid, |_| {}).unwrap();
    let lstm_ppl = pre.checkpoint.meta.best_valid_ppl.unwrap();
    assert!((out.history[0].valid_ppl - lstm_ppl).abs() <= 1e-9 * lstm_ppl);
    assert!(out.checkpoint.meta.best_valid_ppl.unwrap() <= out.history[0].valid_ppl);
    let best: Vec<f64> = out.history.iter().map(|m| m.best_valid_ppl).collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn ablation_rows_share_one_lstm() {
    let (vocab, train, valid) = data();
    let pre = train_lstm(&config(), &vocab, None, &train, &valid, |_| {}).unwrap();
    let rows = ablate(&config(), &pre.checkpoint, &vocab, &train, &valid, &valid, &ABLATION_MODES, |_, _| {}).unwrap();
    assert_eq!(rows.len(), 3);
    let lstm_ppl = rows[0].lstm_valid_ppl;
    for row in &rows {
        assert_eq!(row.lstm_valid_ppl, lstm_ppl);
        assert!(row.init_valid_ppl <= lstm_ppl * (1.0 + 1e-9));
        assert!(row.valid_ppl.is_finite() && row.test_ppl.is_finite());
    }
    // Independent selection carries one extra d x d map plus bias.
    assert_eq!(rows[0].params - rows[1].params, 6 * 6 + 6);
    assert_eq!(rows[1].params, rows[2].params);
}

#[test]
fn traces_cover_every_prediction() {
    let (vocab, train, valid) = data();
    let pre = train_lstm(&config(), &vocab, None, &train, &valid, |_| {}).unwrap();
    let model = init_amsrn(&TrainConfig { init_scale: 1.0, ..config() }, &pre.checkpoint, &vocab).unwrap();
    let eval = evaluate(&model, &valid, true).unwrap();
    let traces = eval.traces.unwrap();
    assert_eq!(traces.len(), valid.len());
    for (i, (s, t)) in valid.sentences.iter().zip(&traces).enumerate() {
        let rec = SentenceRecord::new(i, s, t, &vocab, Threshold::TwiceUniform, false).unwrap();
        assert_eq!(rec.steps.len(), s.num_targets());
        for (k, step) in rec.steps.iter().enumerate() {
            assert_eq!(step.position, k + 1);
            assert_eq!(step.alpha.len(), k + 1);
            assert!(step.highlight.iter().all(|&j| step.alpha[j] >= f64::min(2.0 / (k + 1) as f64, 1.0)));
        }
        let back = SentenceRecord::from_json_line(&rec.to_json_line().unwrap()).unwrap();
        assert_eq!(back, rec);
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    let (vocab, train, valid) = data();
    let pre = train_lstm(&config(), &vocab, None, &train, &valid, |_| {}).unwrap();

    let other = build_vocab(["x y z"], None, 1).unwrap();
    assert!(matches!(evaluate_checkpoint(&pre.checkpoint, &other, &valid, false), Err(Error::Config(_))));

    let wide = TrainConfig { d: 7, ..config() };
    assert!(matches!(init_amsrn(&wide, &pre.checkpoint, &vocab), Err(Error::Config(_))));

    let amsrn = train_amsrn(&config(), &pre.checkpoint, &vocab, &train, &valid, |_| {}).unwrap();
    assert!(init_amsrn(&config(), &amsrn.checkpoint, &vocab).is_err());

    let mut text = pre.checkpoint.to_json().unwrap();
    text = text.replacen("\"version\":1", "\"version\":2", 1);
    assert!(matches!(Checkpoint::from_json(&text), Err(Error::FormatVersion { found: 2, expected: 1 })));

    let bad = TrainConfig { lambda: -0.5, ..config() };
    assert!(matches!(train_amsrn(&bad, &pre.checkpoint, &vocab, &train, &valid, |_| {}), Err(Error::Config(_))));
}

#[test]
fn model_parameter_layout_is_stable() {
    let (vocab, train, valid) = data();
    let pre = train_lstm(&config(), &vocab, None, &train, &valid, |_| {}).unwrap();
    let model = init_amsrn(&config(), &pre.checkpoint, &vocab).unwrap();
    let Model::Amsrn { lstm, attention } = &model else { panic!() };
    assert_eq!(model.num_params(), lstm.num_params() + attention.num_params());
    let mut copy = model.zeros_like();
    copy.assign_flat(model.flatten().as_slice()).unwrap();
    assert_eq!(copy, model);
}
