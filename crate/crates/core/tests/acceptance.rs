//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. A positional argument filters by name.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hofscan_core::checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
use hofscan_core::evalkit::{confusion, evaluate, metrics, render_report, run_ablation, ConfusionMatrix, ReportFormat};
use hofscan_core::features::{EmbeddingProvider, FeatureExtractor, FeatureSet, MockProvider};
use hofscan_core::label::Label;
use hofscan_core::lexicon::{load_lexicon, Lexicon};
use hofscan_core::model::{ModelConfig, ModelParams};
use hofscan_core::nn::{grad_check, BatchNorm, Gru, Mode, Module, RnnKind, Tensor};
use hofscan_core::pipeline::{load_dataset, oversample, train, Dataset, Sample, Selection, TrainingConfig};
use hofscan_core::preprocess::{normalize_text, preprocess};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn fixture_lexicon() -> Arc<Lexicon> {
    Arc::new(load_lexicon(fixture("lexicon.txt")).unwrap().lexicon)
}

fn tiny_fixture_model(features: FeatureSet, lexicon_dim: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        embed_dim: 16,
        lexicon_dim,
        rnn_kind: RnnKind::Gru,
        rnn_size: 8,
        block_sizes: [16, 16, 8, 8],
        seed,
        features,
        ..ModelConfig::default()
    }
}

fn gradient_verification() -> Result<String, String> {
    let start = Instant::now();
    let config = ModelConfig {
        embed_dim: 8,
        lexicon_dim: 6,
        rnn_kind: RnnKind::Gru,
        rnn_size: 5,
        block_sizes: [8, 8, 4, 4],
        seed: 7,
        features: FeatureSet::ALL,
        ..ModelConfig::default()
    };
    let lexicon = Arc::new(Lexicon::parse("idiot\nborder jumper\nscum*\nmoron\ntrash\nloser*\n").unwrap().lexicon);
    let provider: Arc<dyn EmbeddingProvider> = Arc::new(MockProvider::new(8, 3));
    let extractor = config.extractor(Some(provider), Some(lexicon));
    let texts = ["you idiot", "border jumper go home", "have a lovely day", "what a scumbag loser"];
    let batch: Vec<_> = texts.iter().map(|t| extractor.build("x", &preprocess(t)).unwrap()).collect();
    let labels = [Label::Hof, Label::Hof, Label::Not, Label::Hof];

    let params: ModelParams<f64> = ModelParams::new(&config).map_err(|e| e.to_string())?;
    let (out, _) = params.gradients(&config, &batch, &labels).map_err(|e| e.to_string())?;
    let loss = |theta: &[f64]| {
        let mut p = params.clone();
        p.set_flat_params(theta);
        p.gradients(&config, &batch, &labels).unwrap().0.loss
    };
    let report = grad_check(loss, &params.flat_params(), &out.grads.flat_params(), 1e-4).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let detail = format!(
        "{} params, max rel error {:.3e}, {:.1}s",
        params.param_count(),
        report.max_rel_error,
        elapsed.as_secs_f64()
    );
    ensure(report.max_rel_error < 1e-4, || format!("{detail}; worst {report:?}"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("{detail}; too slow"))?;
    Ok(detail)
}

/// Per-timestep GRU written directly from the equations, independent of the
/// library's fused projections.
fn reference_gru(g: &Gru<f64>, seq: &[Vec<f64>]) -> Vec<f64> {
    let hs = g.hidden_size();
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let affine = |w: &Tensor<f64>, u: &Tensor<f64>, b: &Tensor<f64>, x: &[f64], h: &[f64], j: usize| {
        let mut a = b.data()[j];
        for (i, xi) in x.iter().enumerate() {
            a += xi * w.at(i, j);
        }
        for (i, hi) in h.iter().enumerate() {
            a += hi * u.at(i, j);
        }
        a
    };
    let mut h = vec![0.0; hs];
    for x in seq {
        let z: Vec<f64> = (0..hs).map(|j| sig(affine(&g.update.w, &g.update.u, &g.update.b, x, &h, j))).collect();
        let r: Vec<f64> = (0..hs).map(|j| sig(affine(&g.reset.w, &g.reset.u, &g.reset.b, x, &h, j))).collect();
        let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
        let cand: Vec<f64> = (0..hs)
            .map(|j| affine(&g.candidate.w, &g.candidate.u, &g.candidate.b, x, &rh, j).tanh())
            .collect();
        h = (0..hs).map(|j| z[j] * h[j] + (1.0 - z[j]) * cand[j]).collect();
    }
    h
}

fn layer_oracles() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0f64;
    for _ in 0..100 {
        let input = rng.gen_range(1..10);
        let hidden = rng.gen_range(1..8);
        let t = rng.gen_range(1..15);
        let mut gru: Gru<f64> = Gru::new(&mut rng, input, hidden);
        for b in [&mut gru.update.b, &mut gru.reset.b, &mut gru.candidate.b] {
            b.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
        let rows: Vec<Vec<f64>> = (0..t).map(|_| (0..input).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let len = rng.gen_range(1..=t);
        let seq = Tensor::from_vec(&[t, input], rows.concat()).unwrap();
        let (h, _) = gru.forward(&seq, len).map_err(|e| e.to_string())?;
        let expected = reference_gru(&gru, &rows[..len]);
        for (a, b) in h.iter().zip(&expected) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst < 1e-6, || format!("GRU max deviation {worst:.3e}"))?;

    let mut bn_worst = (0f64, 0f64);
    for trial in 0..20 {
        let f = 6;
        let mut bn: BatchNorm<f32> = BatchNorm::new(f);
        for j in 0..f {
            bn.gamma.data_mut()[j] = rng.gen_range(-2.0..2.0);
            bn.beta.data_mut()[j] = rng.gen_range(-1.0..1.0);
        }
        let scale = 1.0 + trial as f64;
        let x: Vec<f64> = (0..32 * f).map(|_| rng.gen_range(-scale..scale) + 3.0).collect();
        let xt: Tensor<f32> = Tensor::from_f64(&[32, f], &x).unwrap();
        let (y, _) = bn.forward(&xt, Mode::Train).map_err(|e| e.to_string())?;
        for j in 0..f {
            let col: Vec<f64> = (0..32).map(|r| y.at(r, j) as f64).collect();
            let xin: Vec<f64> = (0..32).map(|r| xt.at(r, j) as f64).collect();
            let mean = col.iter().sum::<f64>() / 32.0;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0).sqrt();
            let xm = xin.iter().sum::<f64>() / 32.0;
            let xvar = xin.iter().map(|v| (v - xm).powi(2)).sum::<f64>() / 32.0;
            let gamma = bn.gamma.data()[j] as f64;
            let expected_std = gamma.abs() * (xvar / (xvar + bn.epsilon)).sqrt();
            bn_worst.0 = bn_worst.0.max((mean - bn.beta.data()[j] as f64).abs());
            bn_worst.1 = bn_worst.1.max((std - expected_std).abs());
        }
    }
    ensure(bn_worst.0 < 1e-4 && bn_worst.1 < 1e-4, || format!("batch-norm deviations mean {:.2e} std {:.2e}", bn_worst.0, bn_worst.1))?;
    Ok(format!(
        "GRU 100 instances max dev {worst:.2e}; batch-norm (B=32) mean dev {:.2e}, std dev {:.2e}",
        bn_worst.0, bn_worst.1
    ))
}

fn metric_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..1000 {
        let n = rng.gen_range(1..200);
        let p_hof: f64 = rng.gen();
        let draw = |rng: &mut ChaCha8Rng| if rng.gen_bool(p_hof) { Label::Hof } else { Label::Not };
        let preds: Vec<Label> = (0..n).map(|_| draw(&mut rng)).collect();
        let golds: Vec<Label> = (0..n).map(|_| draw(&mut rng)).collect();
        let m = metrics(&confusion(&preds, &golds).unwrap()).unwrap();

        let correct = preds.iter().zip(&golds).filter(|(p, g)| p == g).count() as f64;
        let mut f1 = [0f64; 2];
        let mut support = [0f64; 2];
        for l in Label::ALL {
            let tp = preds.iter().zip(&golds).filter(|&(&p, &g)| p == l && g == l).count() as f64;
            let pp = preds.iter().filter(|&&p| p == l).count() as f64;
            let gp = golds.iter().filter(|&&g| g == l).count() as f64;
            let prec = if pp > 0.0 { tp / pp } else { 0.0 };
            let rec = if gp > 0.0 { tp / gp } else { 0.0 };
            f1[l.index()] = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
            support[l.index()] = gp;
        }
        let acc = correct / n as f64;
        let macro_f1 = (f1[0] + f1[1]) / 2.0;
        let weighted = (f1[0] * support[0] + f1[1] * support[1]) / n as f64;
        ensure(m.accuracy == acc, || format!("case {case}: accuracy {} vs {acc}", m.accuracy))?;
        ensure((m.macro_f1 - macro_f1).abs() < 1e-12, || format!("case {case}: macro-F1"))?;
        ensure((m.weighted_f1 - weighted).abs() < 1e-12, || format!("case {case}: weighted-F1"))?;
    }
    let m = metrics(&ConfusionMatrix::from_counts([[50, 10], [5, 35]])).unwrap();
    ensure(
        (m.accuracy - 0.85).abs() < 1e-4 && (m.macro_f1 - 0.84655).abs() < 1e-4 && (m.weighted_f1 - 0.85115).abs() < 1e-4,
        || format!("hand case gave {m:?}"),
    )?;
    Ok(format!(
        "1000 random cases exact; [[50,10],[5,35]] -> {:.5}/{:.5}/{:.5}",
        m.accuracy, m.macro_f1, m.weighted_f1
    ))
}

fn table_sized(hof: usize, not: usize) -> Dataset {
    let mut samples = Vec::new();
    for i in 0..hof {
        samples.push(Sample::labeled(format!("hof{i}"), format!("sample text {i}"), Label::Hof));
    }
    for i in 0..not {
        samples.push(Sample::labeled(format!("not{i}"), format!("sample text {i}"), Label::Not));
    }
    Dataset::new(samples).unwrap()
}

fn oversampling_fixture() -> Result<String, String> {
    let d = table_sized(2501, 1342);
    let c = d.counts();
    ensure((c.hof, c.not) == (2501, 1342), || format!("input counts {c:?}"))?;
    let o = oversample(&d, 42).map_err(|e| e.to_string())?;
    let oc = o.counts();
    ensure((oc.hof, oc.not) == (2501, 2501), || format!("output counts {oc:?}"))?;
    ensure(&o.samples()[..d.len()] == d.samples(), || "original samples not preserved".into())?;
    for s in &o.samples()[d.len()..] {
        let base = s.id.split_once("#dup").map(|(b, _)| b).ok_or("duplicate without marker")?;
        let src = d.samples().iter().find(|x| x.id == base).ok_or("duplicate of unknown sample")?;
        ensure(src.text == s.text && src.label == s.label, || format!("{} differs from source", s.id))?;
    }
    ensure(oversample(&d, 42).unwrap() == o, || "not deterministic under seed".into())?;
    Ok(format!("2501/1342 -> {}/{}, total {}", oc.hof, oc.not, o.len()))
}

fn overfit_sanity() -> Result<String, String> {
    let start = Instant::now();
    let data = load_dataset(fixture("train.tsv")).map_err(|e| e.to_string())?;
    let lexicon = fixture_lexicon();
    let model = tiny_fixture_model(FeatureSet::ALL, lexicon.dimension(), 3);
    let provider: Arc<dyn EmbeddingProvider> = Arc::new(MockProvider::new(16, 9));
    let extractor = model.extractor(Some(provider), Some(lexicon));
    let training = TrainingConfig {
        epochs: 200,
        batch_size: 8,
        seed: 3,
        selection: Selection::LastEpoch,
        track_train_accuracy: true,
        ..TrainingConfig::default()
    };
    let out = train(&model, &training, &data, &extractor).map_err(|e| e.to_string())?;
    let first_perfect = out.log.epochs.iter().position(|e| e.train_accuracy == Some(1.0));
    let train_acc = out.log.epochs.last().unwrap().train_accuracy.unwrap();
    let full = evaluate(&out.classifier, &extractor, &data, "overfit").map_err(|e| e.to_string())?;
    let idiot = out.classifier.predict(&extractor, "probe", "you idiot").map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let detail = format!(
        "train accuracy 1.00 first at epoch {}, {:.2} after {} epochs, all 40 samples {:.2}, P(HOF | \"you idiot\") = {:.3}, {:.1}s",
        first_perfect.map_or("-".to_string(), |e| (e + 1).to_string()),
        train_acc,
        out.log.epochs.len(),
        full.metrics.accuracy,
        idiot.prob_hof,
        elapsed.as_secs_f64()
    );
    ensure(first_perfect.is_some() && train_acc == 1.0, || detail.clone())?;
    ensure(idiot.label == Label::Hof && idiot.prob_hof > 0.9, || detail.clone())?;
    ensure(elapsed < Duration::from_secs(120), || format!("{detail}; too slow"))?;
    Ok(detail)
}

fn ablation_harness() -> Result<String, String> {
    let train_data = load_dataset(fixture("train.tsv")).map_err(|e| e.to_string())?;
    let test_data = load_dataset(fixture("test.tsv")).map_err(|e| e.to_string())?;
    let lexicon = fixture_lexicon();
    let provider: Arc<dyn EmbeddingProvider> = Arc::new(MockProvider::new(16, 9).named("mock"));
    let sets = FeatureSet::all_combinations();
    let model = tiny_fixture_model(FeatureSet::ALL, lexicon.dimension(), 100);
    let training = TrainingConfig {
        epochs: 200,
        batch_size: 4,
        seed: 100,
        // a 4-sample validation split is too small to select epochs with
        selection: Selection::LastEpoch,
        ..TrainingConfig::default()
    };
    let reports = run_ablation(&sets, &train_data, &test_data, Some(provider), Some(lexicon), &model, &training)
        .map_err(|e| e.to_string())?;
    ensure(reports.len() == 7, || format!("{} reports", reports.len()))?;
    let md = render_report(&reports, ReportFormat::Markdown);
    let mut summary = Vec::new();
    for (set, r) in sets.iter().zip(&reports) {
        ensure(r.features == *set, || "report order differs from input order".into())?;
        summary.push(format!("{}={:.2}", set, r.metrics.accuracy));
        if set.hate_words {
            ensure(r.metrics.accuracy == 1.0, || format!("{set} test accuracy {:.3}\n{md}", r.metrics.accuracy))?;
        }
        ensure(md.lines().any(|l| l.starts_with(&format!("| {set} | "))), || format!("no row for {set}"))?;
    }
    let header = md.lines().next().unwrap_or_default();
    ensure(header.contains("| Acc | M-F1 | W-F1 |"), || format!("header {header}"))?;
    Ok(format!("test accuracy {}", summary.join(" ")))
}

fn determinism() -> Result<String, String> {
    let data = load_dataset(fixture("train.tsv")).map_err(|e| e.to_string())?;
    let probe = load_dataset(fixture("test.tsv")).map_err(|e| e.to_string())?;
    let lexicon = fixture_lexicon();
    let model = tiny_fixture_model(FeatureSet::ALL, lexicon.dimension(), 5);
    let provider: Arc<dyn EmbeddingProvider> = Arc::new(MockProvider::new(16, 9));
    let extractor: FeatureExtractor = model.extractor(Some(provider), Some(lexicon));
    let training = TrainingConfig {
        epochs: 5,
        batch_size: 8,
        seed: 5,
        ..TrainingConfig::default()
    };
    let a = encode_checkpoint(&train(&model, &training, &data, &extractor).map_err(|e| e.to_string())?.checkpoint());
    let b_out = train(&model, &training, &data, &extractor).map_err(|e| e.to_string())?;
    let b = encode_checkpoint(&b_out.checkpoint());
    ensure(a == b, || "checkpoints differ between identical runs".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&b_out.checkpoint(), &path).map_err(|e| e.to_string())?;
    let loaded = load_checkpoint(&path).map_err(|e| e.to_string())?;
    ensure(decode_checkpoint(&b).unwrap() == loaded, || "decoded checkpoint differs".into())?;
    let items: Vec<(&str, &str)> = probe.samples().iter().map(|s| (s.id.as_str(), s.text.as_str())).collect();
    let before = b_out.classifier.predict_batch(&extractor, &items).map_err(|e| e.to_string())?;
    let after = loaded.classifier().predict_batch(&extractor, &items).map_err(|e| e.to_string())?;
    ensure(before == after, || "predictions changed after round trip".into())?;
    Ok(format!("{} checkpoint bytes identical; {} probe predictions identical", a.len(), items.len()))
}

fn random_tweet(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 14] = [
        "RT", "rt", "@user", "#tag", "http://t.co/x", "www.site.org", "...", "!!", "Ça", "😡", "don't", "h8", "(#x)", "\"q\"",
    ];
    let n = rng.gen_range(0..12);
    let mut s = String::new();
    for _ in 0..n {
        match rng.gen_range(0..3) {
            0 => s.push_str(PIECES[rng.gen_range(0..PIECES.len())]),
            1 => {
                let len = rng.gen_range(1..8);
                s.extend((0..len).map(|_| rng.gen_range(b'A'..=b'z') as char));
            }
            _ => s.extend((0..rng.gen_range(1..4)).map(|_| char::from_u32(rng.gen_range(0x20..0x2FFF)).unwrap_or('?'))),
        }
        s.push_str([" ", "  ", "\t", "", "\n"][rng.gen_range(0..5)]);
    }
    s
}

fn preprocessing_golden() -> Result<String, String> {
    let text = std::fs::read_to_string(fixture("golden_preprocess.tsv")).map_err(|e| e.to_string())?;
    let mut pairs = 0;
    for (i, line) in text.lines().enumerate().skip(1) {
        let (raw, expected) = line.split_once('\t').ok_or_else(|| format!("line {}: no tab", i + 1))?;
        let got = normalize_text(raw);
        ensure(got.as_bytes() == expected.as_bytes(), || format!("line {}: {raw:?} -> {got:?}, expected {expected:?}", i + 1))?;
        pairs += 1;
    }
    ensure(pairs >= 30, || format!("only {pairs} golden pairs"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    for _ in 0..10_000 {
        let s = random_tweet(&mut rng);
        let once = normalize_text(&s);
        ensure(normalize_text(&once) == once, || format!("not idempotent on {s:?}"))?;
    }
    Ok(format!("{pairs} golden pairs byte-identical; idempotent on 10000 random strings"))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, Check); 8] = [
        ("gradient verification", gradient_verification),
        ("layer oracles", layer_oracles),
        ("metric oracle", metric_oracle),
        ("oversampling fixture", oversampling_fixture),
        ("overfit sanity", overfit_sanity),
        ("ablation harness", ablation_harness),
        ("determinism", determinism),
        ("preprocessing golden corpus", preprocessing_golden),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
