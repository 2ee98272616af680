use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hofscan_core::checkpoint::{encode_checkpoint, load_checkpoint, Checkpoint, CheckpointError};
use hofscan_core::evalkit::{evaluate, render_report, run_ablation};
use hofscan_core::features::{read_embeddings, EmbeddingProvider, FeatureSet};
use hofscan_core::fsutil::write_atomic;
use hofscan_core::lexicon::Lexicon;
use hofscan_core::model::{InputFlag, ModelConfig};
use hofscan_core::pipeline::{load_dataset, train_with, Dataset};
use hofscan_core::preprocess::preprocess;

use crate::config::{open_lexicon, FileConfig};
use crate::{CliError, Cli, Command, GlobalOpts};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli.global)?;
    let g = &cli.global;
    match cli.command {
        Command::Preprocess { input } => cmd_preprocess(&input, &cfg),
        Command::Train { dataset } => cmd_train(&dataset, cfg),
        Command::Evaluate { checkpoint, test } => cmd_evaluate(&checkpoint, &test, &cfg, g),
        Command::Predict { checkpoint, text, input } => cmd_predict(&checkpoint, text.as_deref(), input.as_deref(), &cfg),
        Command::Ablate { train, test, sets } => cmd_ablate(&train, &test, sets, cfg, g),
        Command::ValidateEmbeddings { embeddings, dataset } => cmd_validate_embeddings(&embeddings, &dataset, &cfg),
    }
}

/// Config file first, then flags on top.
fn resolve(g: &GlobalOpts) -> Result<FileConfig, CliError> {
    let mut cfg = match &g.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.model.seed = seed;
        cfg.training.seed = seed;
    }
    if let Some(p) = &g.provider {
        cfg.paths.provider = Some(p.clone());
    }
    if let Some(p) = &g.lexicon {
        cfg.paths.lexicon = Some(p.clone());
    }
    if let Some(p) = &g.out {
        cfg.paths.out = Some(p.clone());
    }
    if let Some(v) = g.epochs {
        cfg.training.epochs = v;
    }
    if let Some(v) = g.batch_size {
        cfg.training.batch_size = v;
    }
    if let Some(v) = g.learning_rate {
        cfg.training.adam.learning_rate = v;
    }
    if let Some(v) = g.features {
        cfg.model.features = v;
    }
    if let Some(v) = g.rnn_kind {
        cfg.model.rnn_kind = v;
    }
    if let Some(v) = g.rnn_size {
        cfg.model.rnn_size = v;
    }
    Ok(cfg)
}

fn load(path: &Path) -> Result<Dataset, CliError> {
    load_dataset(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Writes to `--out` plus a config dump next to it, or to standard output.
fn emit(cfg: &FileConfig, body: &str) -> Result<(), CliError> {
    match &cfg.paths.out {
        Some(out) => {
            write_file(out, body.as_bytes())?;
            write_file(&sidecar(out, ".config.toml"), cfg.to_toml().as_bytes())
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Data(format!("stdout: {e}")))
        }
    }
}

struct Encoders {
    provider: Option<Arc<dyn EmbeddingProvider>>,
    lexicon: Option<Arc<Lexicon>>,
}

/// Opens the provider and lexicon the feature sets need; both are required
/// when some set uses them, and left closed otherwise.
fn open_encoders(cfg: &FileConfig, need_emb: bool, need_hw: bool) -> Result<Encoders, CliError> {
    let provider = if need_emb {
        let spec = cfg
            .paths
            .provider
            .as_ref()
            .ok_or_else(|| CliError::Usage("EMB features need --provider emb1:<path> or mock:<dim>:<seed>".into()))?;
        Some(spec.open()?)
    } else {
        None
    };
    let lexicon = if need_hw {
        let path = cfg
            .paths
            .lexicon
            .as_ref()
            .ok_or_else(|| CliError::Usage("HW features need --lexicon <path>".into()))?;
        Some(open_lexicon(path)?)
    } else {
        None
    };
    Ok(Encoders { provider, lexicon })
}

fn size_model(model: &mut ModelConfig, enc: &Encoders) {
    if let Some(p) = &enc.provider {
        model.embed_dim = p.dim();
    }
    if let Some(l) = &enc.lexicon {
        model.lexicon_dim = l.dimension();
    }
}

fn check_encoders(model: &ModelConfig, enc: &Encoders) -> Result<(), CliError> {
    if let Some(p) = &enc.provider {
        if p.dim() != model.embed_dim {
            return Err(CliError::Data(format!(
                "provider {} has dimension {}, checkpoint expects {}",
                p.name(),
                p.dim(),
                model.embed_dim
            )));
        }
    }
    if let Some(l) = &enc.lexicon {
        if l.dimension() != model.lexicon_dim {
            return Err(CliError::Data(format!(
                "lexicon has {} entries, checkpoint expects {}",
                l.dimension(),
                model.lexicon_dim
            )));
        }
    }
    Ok(())
}

fn cmd_preprocess(input: &Path, cfg: &FileConfig) -> Result<(), CliError> {
    let file = File::open(input).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return emit(cfg, "id\ttext\tlabel\n");
    }
    let text_col = headers
        .iter()
        .position(|h| h.trim() == "text")
        .ok_or_else(|| CliError::Data(format!("{}: missing required column \"text\"", input.display())))?;

    let mut out = headers.iter().collect::<Vec<_>>().join("\t");
    out.push('\n');
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(CliError::Data(format!(
                "{}: line {line}: expected {} fields, found {}",
                input.display(),
                headers.len(),
                record.len()
            )));
        }
        let fields: Vec<String> = record
            .iter()
            .enumerate()
            .map(|(i, f)| if i == text_col { preprocess(f).join() } else { f.to_string() })
            .collect();
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    emit(cfg, &out)
}

fn cmd_train(dataset: &Path, mut cfg: FileConfig) -> Result<(), CliError> {
    let out = cfg.paths.out.clone().ok_or_else(|| CliError::Usage("train needs --out <checkpoint>".into()))?;
    let data = load(dataset)?;
    let features = cfg.model.features;
    let enc = open_encoders(&cfg, features.embeddings, features.hate_words)?;
    size_model(&mut cfg.model, &enc);
    cfg.model.validate()?;
    cfg.training.validate()?;
    let extractor = cfg.model.extractor(enc.provider, enc.lexicon);
    let outcome = train_with(&cfg.model, &cfg.training, &data, &extractor, |e| {
        eprintln!(
            "epoch {:>3}  loss {:.4}  val acc {:.4}  val macro-F1 {:.4}",
            e.epoch + 1,
            e.train_loss,
            e.val_accuracy,
            e.val_macro_f1
        );
    })?;
    for s in &outcome.log.skipped {
        eprintln!("warning: skipped {} ({:?})", s.id, s.reason);
    }
    let log = serde_json::to_string_pretty(&outcome.log).expect("log serializes");
    write_file(&out, &encode_checkpoint(&outcome.checkpoint()))?;
    write_file(&sidecar(&out, ".log.json"), log.as_bytes())?;
    write_file(&sidecar(&out, ".config.toml"), cfg.to_toml().as_bytes())?;
    eprintln!("best epoch {}; wrote {}", outcome.log.best_epoch + 1, out.display());
    Ok(())
}

fn open_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    load_checkpoint(path).map_err(|e| match e {
        CheckpointError::Io { .. } => CliError::Data(e.to_string()),
        _ => CliError::Data(format!("{}: {e}", path.display())),
    })
}

fn cmd_evaluate(checkpoint: &Path, test: &Path, cfg: &FileConfig, g: &GlobalOpts) -> Result<(), CliError> {
    let ckpt = open_checkpoint(checkpoint)?;
    let classifier = ckpt.classifier();
    let features = classifier.config.features;
    let enc = open_encoders(cfg, features.embeddings, features.hate_words)?;
    check_encoders(&classifier.config, &enc)?;
    let data = load(test)?;
    let extractor = classifier.config.extractor(enc.provider, enc.lexicon);
    let name = checkpoint.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let report = evaluate(&classifier, &extractor, &data, &name)?;
    emit(cfg, &render_report(&[report], g.format))
}

fn cmd_predict(checkpoint: &Path, text: Option<&str>, input: Option<&Path>, cfg: &FileConfig) -> Result<(), CliError> {
    let ckpt = open_checkpoint(checkpoint)?;
    let classifier = ckpt.classifier();
    let features = classifier.config.features;
    let enc = open_encoders(cfg, features.embeddings, features.hate_words)?;
    check_encoders(&classifier.config, &enc)?;
    let extractor = classifier.config.extractor(enc.provider, enc.lexicon);

    let items: Vec<(String, String)> = match (text, input) {
        (Some(t), _) => vec![("text".to_string(), t.to_string())],
        (None, Some(path)) => load(path)?.into_samples().into_iter().map(|s| (s.id, s.text)).collect(),
        (None, None) => return Err(CliError::Usage("predict needs --text or an input TSV".into())),
    };
    let refs: Vec<(&str, &str)> = items.iter().map(|(i, t)| (i.as_str(), t.as_str())).collect();
    let preds = classifier.predict_batch(&extractor, &refs)?;
    let mut out = String::new();
    for ((id, _), p) in items.iter().zip(&preds) {
        match p.flag {
            Some(InputFlag::EmptyInput) => eprintln!("warning: {id}: text is empty after normalization; defaulting to NOT"),
            Some(InputFlag::NoLetters) => eprintln!("warning: {id}: no a-z letters for character features; defaulting to NOT"),
            None => {}
        }
        out.push_str(&format!("{id}\t{}\t{:.6}\n", p.label, p.probability()));
    }
    emit(cfg, &out)
}

fn cmd_ablate(train: &Path, test: &Path, sets: Vec<FeatureSet>, mut cfg: FileConfig, g: &GlobalOpts) -> Result<(), CliError> {
    let sets = if sets.is_empty() { FeatureSet::all_combinations() } else { sets };
    if let Some(i) = sets.iter().position(FeatureSet::is_empty) {
        return Err(CliError::Usage(format!("feature set #{i} is empty")));
    }
    let need_emb = sets.iter().any(|s| s.embeddings);
    let need_hw = sets.iter().any(|s| s.hate_words);
    let enc = open_encoders(&cfg, need_emb, need_hw)?;
    size_model(&mut cfg.model, &enc);
    cfg.training.validate()?;
    let train_data = load(train)?;
    let test_data = load(test)?;
    let reports = run_ablation(&sets, &train_data, &test_data, enc.provider, enc.lexicon, &cfg.model, &cfg.training)?;
    emit(&cfg, &render_report(&reports, g.format))
}

fn cmd_validate_embeddings(embeddings: &Path, dataset: &Path, cfg: &FileConfig) -> Result<(), CliError> {
    let file = read_embeddings(embeddings).map_err(|e| CliError::Data(format!("{}: {e}", embeddings.display())))?;
    let data = load(dataset)?;
    let dim = file.dim;
    let count = file.records.len();
    let map = file.into_map();

    let mut missing = Vec::new();
    let mut short = Vec::new();
    for s in data.samples() {
        match map.get(&s.id) {
            None => missing.push(s.id.clone()),
            Some(m) => {
                let needed = preprocess(&s.text).len().min(cfg.model.token_cap);
                if m.rows() < needed {
                    short.push(format!("{} ({} rows, {} tokens)", s.id, m.rows(), needed));
                }
            }
        }
    }
    let ids: HashSet<&str> = data.samples().iter().map(|s| s.id.as_str()).collect();
    let extra = map.keys().filter(|k| !ids.contains(k.as_str())).count();
    if extra > 0 {
        eprintln!("warning: {extra} record(s) have no matching dataset id");
    }
    if !missing.is_empty() || !short.is_empty() {
        let mut msg = String::new();
        if !missing.is_empty() {
            msg.push_str(&format!("{} dataset id(s) missing from {}: {}", missing.len(), embeddings.display(), missing.join(", ")));
        }
        if !short.is_empty() {
            if !msg.is_empty() {
                msg.push('\n');
            }
            msg.push_str(&format!("{} record(s) have too few rows: {}", short.len(), short.join(", ")));
        }
        return Err(CliError::Data(msg));
    }
    println!("ok: {count} records, dimension {dim}, all {} dataset ids covered", data.len());
    Ok(())
}
