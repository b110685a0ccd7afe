//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Tolerances are fixed constants below.

use std::process::ExitCode;
use std::time::Instant;

use amsrn::attention::{
    amsrn_forward, attention_entropy, attention_key, attention_scores, attention_weights, output_distribution,
    relevant_vector, selection_vectors, AmsrnParams, SelectionMode,
};
use amsrn::corpus::{build_vocab, perplexity, Corpus, EncodedSentence, Vocabulary};
use amsrn::lstm::{run_sentence, LstmParams};
use amsrn::math::{grad_check, Rng, Vector, DEFAULT_EPS};
use amsrn::synth::{trigger_corpus, trigger_positions, TriggerCorpusConfig};
use amsrn::training::{
    continue_lstm, evaluate, init_amsrn, train_amsrn, train_lstm, Checkpoint, OptimizerKind, TrainConfig,
};
use amsrn::{Model, ParamSet};

const GRAD_TOL: f64 = 1e-4;
const SIMPLEX_TOL: f64 = 1e-12;
const NO_REGRESSION_REL: f64 = 1e-9;
const UNIFORM_REL: f64 = 1e-12;
const TOY_GAIN: f64 = 0.03;
const TOY_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const LREG_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn randomized(model: &Model, scale: f64, seed: u64) -> Model {
    let mut rng = Rng::new(seed);
    let mut m = model.clone();
    let theta: Vec<f64> = (0..m.num_params()).map(|_| rng.uniform(-scale, scale)).collect();
    m.assign_flat(&theta).unwrap();
    m
}

fn random_sentence(rng: &mut Rng, vocab: usize, words: usize) -> EncodedSentence {
    let mut ids = vec![1];
    ids.extend((0..words).map(|_| 3 + rng.below(vocab - 3)));
    ids.push(2);
    EncodedSentence::from_ids(ids).unwrap()
}

fn bits(v: &Vector) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn gradient_correctness() -> Outcome {
    let (v, d) = (10, 4);
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    for (k, mode) in SelectionMode::ALL.into_iter().enumerate() {
        for lambda in [0.0, 0.1] {
            let base = Model::Amsrn {
                lstm: LstmParams::zeros(v, d),
                attention: AmsrnParams::zeros(mode, v, d),
            };
            let model = randomized(&base, 0.5, 100 + k as u64);
            let sentence = random_sentence(&mut Rng::new(7 + k as u64), v, 5);
            let (_, grads) = model.sentence_gradient(&sentence, lambda).unwrap();
            let report = grad_check(
                |theta| {
                    let mut m = model.clone();
                    m.assign_flat(theta.as_slice())?;
                    Ok(m.sentence_loss(&sentence)?.objective(lambda))
                },
                &grads.flatten(),
                &model.flatten(),
                DEFAULT_EPS,
                GRAD_TOL,
            )
            .unwrap();
            worst = worst.max(report.max_relative_error());
            if !report.passed() {
                failed.push(format!("{mode}/λ={lambda}"));
            }
        }
    }
    outcome(
        failed.is_empty(),
        format!("8 configs, max rel err {worst:.2e} (tol {GRAD_TOL:.0e}) {failed:?}"),
    )
}

fn attention_normalization() -> Outcome {
    let (v, d) = (12, 5);
    let mut rng = Rng::new(2024);
    let mut worst_sum: f64 = 0.0;
    let mut violations = 0;
    let mut steps = 0;
    for pass in 0..1000 {
        let mode = SelectionMode::ALL[pass % 4];
        let base = Model::Amsrn {
            lstm: LstmParams::zeros(v, d),
            attention: AmsrnParams::zeros(mode, v, d),
        };
        let Model::Amsrn { lstm, attention } = randomized(&base, 2.0, pass as u64) else { unreachable!() };
        let len = 1 + rng.below(10);
        let sentence = random_sentence(&mut rng, v, len);
        let (_, trace) = amsrn_forward(&lstm, &attention, sentence.inputs()).unwrap();
        for step in &trace.steps {
            steps += 1;
            let err = (step.alpha.sum() - 1.0).abs();
            worst_sum = worst_sum.max(err);
            let ln_t = (step.position as f64).ln();
            if err > SIMPLEX_TOL
                || step.alpha.iter().any(|&a| a < 0.0)
                || step.entropy < 0.0
                || step.entropy > ln_t + SIMPLEX_TOL
            {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0,
        format!("{steps} steps, max |Σα-1| {worst_sum:.1e}, {violations} violations"),
    )
}

fn selection_algebra() -> Outcome {
    let (v, d) = (9, 6);
    let mut rng = Rng::new(31);
    let lstm = match randomized(&Model::Lstm { lstm: LstmParams::zeros(v, d) }, 0.7, 5) {
        Model::Lstm { lstm } => lstm,
        _ => unreachable!(),
    };
    let mut checks = Vec::new();

    // Independent with select2 = select1 against tied.
    let mut tied = AmsrnParams::from_lstm(&lstm, SelectionMode::Tied, 1.0, &mut rng);
    tied.w_pr = rng.uniform_matrix(v, d, 1.0);
    let mut indep = tied.clone();
    indep.mode = SelectionMode::Independent;
    indep.select2 = indep.select1.clone();
    let mut same = true;
    for _ in 0..50 {
        let len = 1 + rng.below(8);
        let s = random_sentence(&mut rng, v, len);
        let (a, ta) = amsrn_forward(&lstm, &tied, s.inputs()).unwrap();
        let (b, tb) = amsrn_forward(&lstm, &indep, s.inputs()).unwrap();
        same &= a.iter().zip(&b).all(|(x, y)| bits(x) == bits(y));
        same &= ta.steps.iter().zip(&tb.steps).all(|(x, y)| bits(&x.alpha) == bits(&y.alpha));
    }
    checks.push(("independent(tied weights) == tied bitwise", same));

    // Complement sums to exactly one.
    let mut comp = AmsrnParams::from_lstm(&lstm, SelectionMode::Complement, 4.0, &mut rng);
    comp.select1.as_mut().unwrap().b = rng.uniform_vector(d, 4.0);
    let mut exact = true;
    for _ in 0..1000 {
        let h = rng.uniform_vector(d, 1.0);
        let (w1, w2) = selection_vectors(&comp, &h).unwrap();
        exact &= w1.iter().zip(w2.iter()).all(|(a, b)| a + b == 1.0);
    }
    checks.push(("complement w1 + w2 == 1 exactly", exact));

    // Mode none against the pipeline with all-ones masks.
    let mut none = AmsrnParams::from_lstm(&lstm, SelectionMode::None, 1.0, &mut rng);
    none.w_pr = rng.uniform_matrix(v, d, 1.0);
    let ones = Vector::filled(d, 1.0);
    let mut equal = true;
    for _ in 0..50 {
        let len = 1 + rng.below(8);
        let s = random_sentence(&mut rng, v, len);
        let (dists, _) = amsrn_forward(&lstm, &none, s.inputs()).unwrap();
        let (_, bank) = run_sentence(&lstm, s.inputs()).unwrap();
        for (i, dist) in dists.iter().enumerate() {
            let t = i + 1;
            let h = &bank.states()[t];
            let key = attention_key(&none, h).unwrap();
            let alpha = attention_weights(&attention_scores(bank.prefix(t), &ones, &key).unwrap()).unwrap();
            let r = relevant_vector(bank.prefix(t), &alpha, &ones).unwrap();
            let manual = output_distribution(&none, h, &r).unwrap();
            equal &= bits(&manual) == bits(dist);
        }
    }
    checks.push(("none == all-ones pipeline bitwise", equal));

    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    outcome(failed.is_empty(), format!("{} checks, failed {failed:?}", checks.len()))
}

struct Toy {
    vocab: Vocabulary,
    train: Corpus,
    valid: Corpus,
    test: Corpus,
    test_lines: Vec<String>,
}

fn toy_data(seed: u64) -> Toy {
    let cfg = |n| TriggerCorpusConfig {
        sentences: n,
        ..TriggerCorpusConfig::default()
    };
    let train = trigger_corpus(&cfg(2000), seed * 3 + 1);
    let valid = trigger_corpus(&cfg(300), seed * 3 + 2);
    let test = trigger_corpus(&cfg(300), seed * 3 + 3);
    let vocab = build_vocab(train.iter().chain(&valid).chain(&test), None, 1).unwrap();
    Toy {
        train: Corpus::encode(&vocab, &train),
        valid: Corpus::encode(&vocab, &valid),
        test: Corpus::encode(&vocab, &test),
        test_lines: test,
        vocab,
    }
}

/// LSTM pretraining shared by the toy experiments.
fn pretrain_config(seed: u64) -> TrainConfig {
    TrainConfig {
        d: 16,
        lr: 0.1,
        epochs: 5,
        seed,
        patience: 100,
        ..TrainConfig::default()
    }
}

/// Budget for both arms after pretraining: same optimizer, lr, epochs, seed.
fn finetune_config(seed: u64) -> TrainConfig {
    TrainConfig {
        d: 16,
        lr: 0.005,
        optimizer: OptimizerKind::Adam,
        epochs: 15,
        seed,
        patience: 100,
        mode: SelectionMode::Tied,
        lambda: 0.0,
        ..TrainConfig::default()
    }
}

struct ToyRun {
    data: Toy,
    pretrained: Checkpoint,
    amsrn: Checkpoint,
    lstm_test_ppl: f64,
    amsrn_test_ppl: f64,
}

fn toy_run(seed: u64) -> ToyRun {
    let data = toy_data(seed);
    let pre = train_lstm(&pretrain_config(seed), &data.vocab, None, &data.train, &data.valid, |_| {}).unwrap();
    let ft = finetune_config(seed);
    let base = continue_lstm(&ft, &pre.checkpoint, &data.vocab, &data.train, &data.valid, |_| {}).unwrap();
    let att = train_amsrn(&ft, &pre.checkpoint, &data.vocab, &data.train, &data.valid, |_| {}).unwrap();
    ToyRun {
        lstm_test_ppl: evaluate(&base.checkpoint.model, &data.test, false).unwrap().ppl,
        amsrn_test_ppl: evaluate(&att.checkpoint.model, &data.test, false).unwrap().ppl,
        pretrained: pre.checkpoint,
        amsrn: att.checkpoint,
        data,
    }
}

fn no_regression(runs: &[ToyRun]) -> Outcome {
    let mut worst: f64 = 0.0;
    for run in runs {
        let lstm_ppl = evaluate(&run.pretrained.model, &run.data.test, false).unwrap().ppl;
        for mode in SelectionMode::ALL {
            let cfg = TrainConfig {
                mode,
                init_scale: 0.5,
                ..finetune_config(run.pretrained.config.seed)
            };
            let model = init_amsrn(&cfg, &run.pretrained, &run.data.vocab).unwrap();
            let ppl = evaluate(&model, &run.data.test, false).unwrap().ppl;
            worst = worst.max((ppl - lstm_ppl).abs() / lstm_ppl);
        }
    }
    outcome(
        worst <= NO_REGRESSION_REL,
        format!("{} LSTMs x 4 modes, max rel diff {worst:.1e} (tol {NO_REGRESSION_REL:.0e})", runs.len()),
    )
}

fn uniform_baseline() -> Outcome {
    let lines: Vec<String> = (0..97).map(|i| format!("w{i} w{}", (i * 7) % 97)).collect();
    let vocab = build_vocab(&lines, None, 1).unwrap();
    assert_eq!(vocab.len(), 100);
    let corpus = Corpus::encode(&vocab, &lines);
    let mut ok = true;
    let mut detail = Vec::new();
    for seed in 0..3 {
        let lstm = LstmParams::init(vocab.len(), 8, &mut Rng::new(seed)).unwrap();
        let ppl = evaluate(&Model::Lstm { lstm }, &corpus, false).unwrap().ppl;
        ok &= (ppl - 100.0).abs() <= UNIFORM_REL * 100.0;
        detail.push(format!("{ppl}"));
    }
    let hand = perplexity(2f64.ln() + 4f64.ln() + 8f64.ln(), 3).unwrap();
    ok &= (hand - 4.0).abs() <= UNIFORM_REL * 4.0;
    outcome(ok, format!("|v|=100 -> {}, hand example -> {hand}", detail.join(", ")))
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn toy_table(runs: &[ToyRun]) -> Outcome {
    let gains: Vec<f64> = runs.iter().map(|r| 1.0 - r.amsrn_test_ppl / r.lstm_test_ppl).collect();
    let per_seed: Vec<String> = runs
        .iter()
        .zip(&gains)
        .map(|(r, g)| format!("{:.2}/{:.2} ({:+.1}%)", r.lstm_test_ppl, r.amsrn_test_ppl, 100.0 * g))
        .collect();
    let m = median(&gains);
    outcome(
        m >= TOY_GAIN,
        format!("median gain {:.2}% (need {:.0}%); lstm/amsrn per seed: {}", 100.0 * m, 100.0 * TOY_GAIN, per_seed.join(", ")),
    )
}

fn entropy_mechanics(run: &ToyRun) -> Outcome {
    let data = &run.data;
    let cfg = |lambda| TrainConfig {
        lambda,
        epochs: 4,
        ..finetune_config(7)
    };
    let plain = train_amsrn(&cfg(0.0), &run.pretrained, &data.vocab, &data.train, &data.valid, |_| {}).unwrap();
    let sparse = train_amsrn(&cfg(1.0), &run.pretrained, &data.vocab, &data.train, &data.valid, |_| {}).unwrap();
    let h0 = plain.history.last().unwrap();
    let h1 = sparse.history.last().unwrap();
    let lower = h1.valid_mean_entropy < h0.valid_mean_entropy && h1.epoch == h0.epoch;

    let mut worst: f64 = 0.0;
    for out in [&plain, &sparse] {
        let logged = out.history[out.checkpoint.meta.best_epoch].valid_lreg;
        let eval = evaluate(&out.checkpoint.model, &data.valid, true).unwrap();
        let recomputed: f64 = eval
            .traces
            .unwrap()
            .iter()
            .flat_map(|t| t.steps.iter())
            .map(|s| attention_entropy(&s.alpha).unwrap())
            .sum();
        worst = worst.max((logged - recomputed).abs() / recomputed.max(1.0));
    }
    outcome(
        lower && worst <= LREG_TOL,
        format!(
            "epoch {}: mean entropy λ=0 {:.4} vs λ=1 {:.4}; L_reg log vs traces rel diff {worst:.1e} (tol {LREG_TOL:.0e})",
            h0.epoch, h0.valid_mean_entropy, h1.valid_mean_entropy
        ),
    )
}

/// Share of second trigger occurrences whose first occurrence gets `α > 1/t`.
fn trigger_attention(run: &ToyRun) -> (usize, usize) {
    let Model::Amsrn { lstm, attention } = &run.amsrn.model else { unreachable!() };
    let mut hits = 0;
    let mut total = 0;
    for line in &run.data.test_lines {
        let Some((first, second)) = trigger_positions(line) else { continue };
        let s = run.data.vocab.encode(line).unwrap();
        let (_, trace) = amsrn_forward(lstm, attention, s.inputs()).unwrap();
        // Word k is input k + 1; its state is bank slot k + 2. Predicting word
        // k is step k + 1.
        let step = &trace.steps[second];
        debug_assert_eq!(step.position, second + 1);
        let t = step.alpha.len() as f64;
        total += 1;
        if step.alpha[first + 2] > 1.0 / t {
            hits += 1;
        }
    }
    (hits, total)
}

fn trace_faithfulness(runs: &[ToyRun]) -> Outcome {
    let counts: Vec<(usize, usize)> = runs.iter().map(trigger_attention).collect();
    let hits: usize = counts.iter().map(|c| c.0).sum();
    let total: usize = counts.iter().map(|c| c.1).sum();
    let per_seed: Vec<String> = counts.iter().map(|(h, t)| format!("{h}/{t}")).collect();
    outcome(
        2 * hits > total,
        format!("{hits}/{total} second occurrences above uniform; per seed {}", per_seed.join(", ")),
    )
}

fn determinism(run: &ToyRun) -> Outcome {
    let data = toy_data(11);
    let cfg = TrainConfig {
        epochs: 2,
        ..pretrain_config(11)
    };
    let a = train_lstm(&cfg, &data.vocab, None, &data.train, &data.valid, |_| {}).unwrap();
    let b = train_lstm(&cfg, &data.vocab, None, &data.train, &data.valid, |_| {}).unwrap();
    let lstm_same = a.checkpoint.to_json().unwrap() == b.checkpoint.to_json().unwrap();

    let ft = TrainConfig {
        epochs: 2,
        ..finetune_config(11)
    };
    let x = train_amsrn(&ft, &a.checkpoint, &data.vocab, &data.train, &data.valid, |_| {}).unwrap();
    let y = train_amsrn(&ft, &b.checkpoint, &data.vocab, &data.train, &data.valid, |_| {}).unwrap();
    let amsrn_same = x.checkpoint.to_json().unwrap() == y.checkpoint.to_json().unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("amsrn.json");
    run.amsrn.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let before = evaluate(&run.amsrn.model, &run.data.test, false).unwrap();
    let after = evaluate(&loaded.model, &run.data.test, false).unwrap();
    let round_trip = loaded == run.amsrn
        && before.ppl.to_bits() == after.ppl.to_bits()
        && before
            .sentence_nll
            .iter()
            .zip(&after.sentence_nll)
            .all(|(p, q)| p.to_bits() == q.to_bits());
    outcome(
        lstm_same && amsrn_same && round_trip,
        format!("lstm replay {lstm_same}, amsrn replay {amsrn_same}, save/load/eval bitwise {round_trip}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let out = f();
        println!(
            "criterion {id} {}: {name}: {} [{:.1}s]",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            start.elapsed().as_secs_f64()
        );
        results.push((id, name, out));
    };

    report(1, "gradient correctness", &gradient_correctness);
    report(2, "attention normalization", &attention_normalization);
    report(3, "selection-mode algebra", &selection_algebra);

    let start = Instant::now();
    let runs: Vec<ToyRun> = TOY_SEEDS.iter().map(|&s| toy_run(s)).collect();
    println!("(toy experiments trained in {:.1}s)", start.elapsed().as_secs_f64());

    report(4, "pretraining no-regression", &|| no_regression(&runs));
    report(5, "uniform-baseline exactness", &uniform_baseline);
    report(6, "toy trigger corpus, tied AMSRN vs LSTM", &|| toy_table(&runs));
    report(7, "entropy regularizer mechanics", &|| entropy_mechanics(&runs[0]));
    report(8, "trace faithfulness", &|| trace_faithfulness(&runs));
    report(9, "determinism and persistence", &|| determinism(&runs[0]));

    let failed = results.iter().filter(|(_, _, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
