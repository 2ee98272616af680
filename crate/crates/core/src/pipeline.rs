//! Dataset loading, oversampling, stratified splitting and the training loop.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::evalkit::{confusion, metrics, Metrics};
use crate::features::{FeatureBundle, FeatureError, FeatureExtractor};
use crate::label::Label;
use crate::model::{Classifier, ModelConfig, ModelError, ModelParams};
use crate::nn::{AdamConfig, AdamState, Mode, Module, Tensor};
use crate::preprocess::preprocess;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("dataset is empty (no header row)")]
    EmptyFile,
    #[error("missing required column {0:?}")]
    MissingColumn(&'static str),
    #[error("line {line}: unknown label {value:?}; expected HOF or NOT")]
    UnknownLabel { line: u64, value: String },
    #[error("duplicate id {id:?} (line {line})")]
    DuplicateId { id: String, line: u64 },
    #[error("sample {0:?} has no label")]
    Unlabeled(String),
    #[error("dataset has no samples")]
    NoSamples,
    #[error("dataset contains only {0} samples; both classes are required")]
    SingleClass(Label),
    #[error("class {label} has {count} sample(s); at least 2 are needed to split")]
    ClassTooSmall { label: Label, count: usize },
    #[error("split ratio {0} is outside (0, 1)")]
    BadRatio(f64),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no trainable samples remain after feature extraction")]
    NothingToTrain,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}\n{diagnostics}")]
    NonFiniteLoss {
        loss: f64,
        epoch: usize,
        batch: usize,
        diagnostics: String,
    },
    #[error("sample {id:?}: {source}")]
    Feature {
        id: String,
        #[source]
        source: FeatureError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub label: Option<Label>,
}

impl Sample {
    pub fn labeled(id: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        Sample {
            id: id.into(),
            text: text.into(),
            label: Some(label),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub hof: usize,
    pub not: usize,
    pub unlabeled: usize,
}

impl LabelCounts {
    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::Hof => self.hof,
            Label::Not => self.not,
        }
    }
}

/// Ordered samples with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self, PipelineError> {
        let mut seen = HashSet::new();
        for (i, s) in samples.iter().enumerate() {
            if !seen.insert(s.id.as_str()) {
                return Err(PipelineError::DuplicateId {
                    id: s.id.clone(),
                    line: i as u64 + 2,
                });
            }
        }
        Ok(Dataset { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for s in &self.samples {
            match s.label {
                Some(Label::Hof) => c.hof += 1,
                Some(Label::Not) => c.not += 1,
                None => c.unlabeled += 1,
            }
        }
        c
    }

    /// Fails unless every sample is labeled and both classes occur.
    pub fn require_both_classes(&self) -> Result<LabelCounts, PipelineError> {
        if self.samples.is_empty() {
            return Err(PipelineError::NoSamples);
        }
        if let Some(s) = self.samples.iter().find(|s| s.label.is_none()) {
            return Err(PipelineError::Unlabeled(s.id.clone()));
        }
        let c = self.counts();
        if c.hof == 0 {
            return Err(PipelineError::SingleClass(Label::Not));
        }
        if c.not == 0 {
            return Err(PipelineError::SingleClass(Label::Hof));
        }
        Ok(c)
    }
}

fn tsv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .from_reader(input)
}

/// Parses a TSV with header `id, text[, label]`. Extra columns are ignored.
pub fn parse_dataset<R: Read>(input: R) -> Result<Dataset, PipelineError> {
    let mut reader = tsv_reader(input);
    let headers = reader.headers().map_err(|e| csv_error(&e))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(PipelineError::EmptyFile);
    }
    let col = |name: &'static str| headers.iter().position(|h| h.trim() == name);
    let id_col = col("id").ok_or(PipelineError::MissingColumn("id"))?;
    let text_col = col("text").ok_or(PipelineError::MissingColumn("text"))?;
    let label_col = col("label");

    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let id = field(id_col).to_string();
        if id.is_empty() {
            return Err(PipelineError::Malformed {
                line,
                message: "empty id".into(),
            });
        }
        let label = match label_col {
            Some(c) => Some(field(c).trim().parse::<Label>().map_err(|_| PipelineError::UnknownLabel {
                line,
                value: field(c).to_string(),
            })?),
            None => None,
        };
        if !seen.insert(id.clone()) {
            return Err(PipelineError::DuplicateId { id, line });
        }
        samples.push(Sample {
            id,
            text: field(text_col).to_string(),
            label,
        });
    }
    Ok(Dataset { samples })
}

fn csv_error(e: &csv::Error) -> PipelineError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    PipelineError::Malformed {
        line,
        message: e.to_string(),
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, PipelineError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(std::io::BufReader::new(file))
}

/// Serializes as `id<TAB>text[<TAB>label]`; the label column is written when
/// every sample has one.
pub fn render_dataset(data: &Dataset) -> String {
    let labeled = !data.is_empty() && data.samples.iter().all(|s| s.label.is_some());
    let mut out = String::from(if labeled { "id\ttext\tlabel\n" } else { "id\ttext\n" });
    for s in &data.samples {
        out.push_str(&s.id);
        out.push('\t');
        out.push_str(&s.text.replace(['\t', '\n', '\r'], " "));
        if let (true, Some(l)) = (labeled, s.label) {
            out.push('\t');
            out.push_str(l.as_str());
        }
        out.push('\n');
    }
    out
}

/// Appends minority-class duplicates, drawn with replacement, until both
/// classes have the same count. Duplicates get an `#dupN` id suffix.
pub fn oversample(data: &Dataset, seed: u64) -> Result<Dataset, PipelineError> {
    let counts = data.require_both_classes()?;
    let (minority, deficit) = if counts.hof < counts.not {
        (Label::Hof, counts.not - counts.hof)
    } else {
        (Label::Not, counts.hof - counts.not)
    };
    let pool: Vec<&Sample> = data.samples.iter().filter(|s| s.label == Some(minority)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: HashSet<String> = data.samples.iter().map(|s| s.id.clone()).collect();
    let mut samples = data.samples.clone();
    let mut counter = 0usize;
    for _ in 0..deficit {
        let src = pool[rng.gen_range(0..pool.len())];
        let id = loop {
            counter += 1;
            let candidate = format!("{}#dup{counter}", src.id);
            if !ids.contains(&candidate) {
                break candidate;
            }
        };
        ids.insert(id.clone());
        samples.push(Sample {
            id,
            text: src.text.clone(),
            label: src.label,
        });
    }
    Ok(Dataset { samples })
}

/// Stratified split: each class is shuffled independently and cut at
/// `round(ratio · count)`, clamped so both parts keep at least one sample.
/// Both parts preserve the input order.
pub fn split(data: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset), PipelineError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PipelineError::BadRatio(ratio));
    }
    data.require_both_classes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; data.len()];
    for label in Label::ALL {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.samples[i].label == Some(label)).collect();
        if idx.len() < 2 {
            return Err(PipelineError::ClassTooSmall { label, count: idx.len() });
        }
        idx.shuffle(&mut rng);
        let cut = ((ratio * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        for &i in &idx[..cut] {
            in_train[i] = true;
        }
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (s, t) in data.samples.iter().zip(in_train) {
        if t {
            train.push(s.clone());
        } else {
            val.push(s.clone());
        }
    }
    Ok((Dataset { samples: train }, Dataset { samples: val }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Best validation macro-F1; ties go to the earlier epoch.
    #[default]
    BestMacroF1,
    LastEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction kept for training; the rest is validation.
    pub train_ratio: f64,
    pub oversample: bool,
    pub seed: u64,
    pub adam: AdamConfig,
    pub selection: Selection,
    /// Record training-set accuracy after every epoch.
    pub track_train_accuracy: bool,
    /// Stop once training accuracy reaches this value. Implies tracking.
    pub stop_at_train_accuracy: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 20,
            batch_size: 64,
            train_ratio: 0.9,
            oversample: true,
            seed: 0,
            adam: AdamConfig::default(),
            selection: Selection::BestMacroF1,
            track_train_accuracy: false,
            stop_at_train_accuracy: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(PipelineError::BadRatio(self.train_ratio));
        }
        if self.adam.learning_rate.is_nan() || self.adam.learning_rate <= 0.0 {
            return bad("adam.learning_rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
    pub val_weighted_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipReason {
    EmptyInput,
    NoLetters,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedSample {
    pub id: String,
    pub reason: SkipReason,
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunLog {
    pub seed: u64,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub input_counts: LabelCounts,
    pub oversampled_counts: LabelCounts,
    pub train_size: usize,
    pub validation_size: usize,
    pub skipped: Vec<SkippedSample>,
    pub epochs: Vec<EpochLog>,
    /// Zero-based index into `epochs`.
    pub best_epoch: usize,
    /// Sample-gradient evaluations; always `epochs × trainable samples`.
    pub gradient_samples: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub classifier: Classifier,
    pub adam: AdamState<f32>,
    pub log: TrainRunLog,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.classifier.config.clone(),
            params: self.classifier.params.clone(),
            adam: Some(self.adam.clone()),
            seed: self.log.seed,
        }
    }
}

struct Prepared {
    ids: Vec<String>,
    bundles: Vec<FeatureBundle>,
    labels: Vec<Label>,
    skipped: Vec<SkippedSample>,
}

enum Built {
    Ok(FeatureBundle),
    Skip(SkipReason),
    Failed(FeatureError),
}

fn prepare(data: &Dataset, extractor: &FeatureExtractor) -> Result<Prepared, PipelineError> {
    let built: Vec<Built> = data
        .samples
        .par_iter()
        .map(|s| match extractor.build(&s.id, &preprocess(&s.text)) {
            Ok(b) => Built::Ok(b),
            Err(FeatureError::EmptyTokens) => Built::Skip(SkipReason::EmptyInput),
            Err(FeatureError::NoLetters) => Built::Skip(SkipReason::NoLetters),
            Err(e) => Built::Failed(e),
        })
        .collect();
    let mut out = Prepared {
        ids: Vec::new(),
        bundles: Vec::new(),
        labels: Vec::new(),
        skipped: Vec::new(),
    };
    for (s, b) in data.samples.iter().zip(built) {
        match b {
            Built::Ok(bundle) => {
                out.ids.push(s.id.clone());
                out.bundles.push(bundle);
                out.labels.push(s.label.expect("labels checked before extraction"));
            }
            Built::Skip(reason) => out.skipped.push(SkippedSample {
                id: s.id.clone(),
                reason,
            }),
            Built::Failed(source) => return Err(PipelineError::Feature { id: s.id.clone(), source }),
        }
    }
    Ok(out)
}

fn predict_labels(params: &ModelParams<f32>, config: &ModelConfig, bundles: &[FeatureBundle]) -> Result<Vec<Label>, ModelError> {
    let mut out = Vec::with_capacity(bundles.len());
    for chunk in bundles.chunks(64) {
        let probs = params.probabilities(config, chunk, Mode::Infer)?;
        for r in 0..probs.rows() {
            out.push(if probs.at(r, Label::Hof.index()) > 0.5 { Label::Hof } else { Label::Not });
        }
    }
    Ok(out)
}

/// Metrics over a prepared split; skipped samples count as `NOT`.
fn score(params: &ModelParams<f32>, config: &ModelConfig, prepared: &Prepared, skipped_golds: &[Label]) -> Result<Metrics, PipelineError> {
    let mut preds = predict_labels(params, config, &prepared.bundles)?;
    let mut golds = prepared.labels.clone();
    preds.extend(std::iter::repeat_n(Label::Not, skipped_golds.len()));
    golds.extend_from_slice(skipped_golds);
    let cm = confusion(&preds, &golds).map_err(|_| PipelineError::NothingToTrain)?;
    Ok(metrics(&cm).expect("non-empty confusion"))
}

fn diagnostics(params: &ModelParams<f32>, ids: &[&str]) -> String {
    let mut out = format!("batch ids: {ids:?}\nparameter norms:\n");
    for (name, _, t) in params.tensors() {
        let norm = t.data().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        out.push_str(&format!("  {name}: {norm:.6e} finite={}\n", t.is_finite()));
    }
    out
}

/// `oversample → split → epoch loop`. See [`train_with`].
pub fn train(model: &ModelConfig, training: &TrainingConfig, data: &Dataset, extractor: &FeatureExtractor) -> Result<TrainOutcome, PipelineError> {
    train_with(model, training, data, extractor, |_| {})
}

/// Trains a fresh model and reports each finished epoch to `on_epoch`.
///
/// Samples that normalize to nothing (or, with character features, have no
/// letters) are left out of gradient updates and listed in the log; in
/// validation they count as `NOT` predictions.
pub fn train_with(
    model: &ModelConfig,
    training: &TrainingConfig,
    data: &Dataset,
    extractor: &FeatureExtractor,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, PipelineError> {
    let input_counts = data.require_both_classes()?;
    training.validate()?;
    model.validate()?;
    extractor.validate().map_err(|source| PipelineError::Feature {
        id: String::new(),
        source,
    })?;
    let balanced = if training.oversample {
        oversample(data, training.seed)?
    } else {
        data.clone()
    };
    let (train_part, val_part) = split(&balanced, training.train_ratio, training.seed)?;

    let train_set = prepare(&train_part, extractor)?;
    let val_set = prepare(&val_part, extractor)?;
    if train_set.bundles.is_empty() {
        return Err(PipelineError::NothingToTrain);
    }
    let label_of = |d: &Dataset, id: &str| d.samples.iter().find(|s| s.id == id).and_then(|s| s.label).expect("labeled");
    let val_skipped_golds: Vec<Label> = val_set.skipped.iter().map(|s| label_of(&val_part, &s.id)).collect();
    let train_skipped_golds: Vec<Label> = train_set.skipped.iter().map(|s| label_of(&train_part, &s.id)).collect();

    let mut params: ModelParams<f32> = ModelParams::new(model)?;
    let mut adam = AdamState::new(training.adam);
    let mut best: Option<(f64, ModelParams<f32>, AdamState<f32>)> = None;
    let mut best_epoch = 0;
    let mut epochs = Vec::new();
    let mut gradient_samples = 0u64;
    let n = train_set.bundles.len();

    for epoch in 0..training.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(training.seed.wrapping_add(epoch as u64)));
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(training.batch_size).enumerate() {
            let batch: Vec<FeatureBundle> = idx.iter().map(|&i| train_set.bundles[i].clone()).collect();
            let labels: Vec<Label> = idx.iter().map(|&i| train_set.labels[i]).collect();
            let step = params.loss_and_grads(model, &batch, &labels);
            let step = match step {
                Err(ModelError::Nn(crate::nn::NnError::NonFiniteLoss(loss))) => Err(loss),
                Err(e) => return Err(e.into()),
                Ok(s) if !s.loss.is_finite() => Err(s.loss),
                Ok(s) => Ok(s),
            };
            let step = match step {
                Ok(s) => s,
                Err(loss) => {
                    let ids: Vec<&str> = idx.iter().map(|&i| train_set.ids[i].as_str()).collect();
                    return Err(PipelineError::NonFiniteLoss {
                        loss,
                        epoch,
                        batch: b,
                        diagnostics: diagnostics(&params, &ids),
                    });
                }
            };
            gradient_samples += idx.len() as u64;
            loss_sum += step.loss * idx.len() as f64;
            let grads: Vec<&Tensor<f32>> = step.grads.params();
            adam.step(&mut params.params_mut(), &grads).map_err(ModelError::from)?;
        }
        let train_accuracy = if training.track_train_accuracy || training.stop_at_train_accuracy.is_some() {
            Some(score(&params, model, &train_set, &train_skipped_golds)?.accuracy)
        } else {
            None
        };
        let val = score(&params, model, &val_set, &val_skipped_golds)?;
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / n as f64,
            train_accuracy,
            val_accuracy: val.accuracy,
            val_macro_f1: val.macro_f1,
            val_weighted_f1: val.weighted_f1,
        };
        on_epoch(&log);
        epochs.push(log);

        let better = match (&best, training.selection) {
            (None, _) | (_, Selection::LastEpoch) => true,
            (Some((f1, _, _)), Selection::BestMacroF1) => val.macro_f1 > *f1,
        };
        if better {
            best = Some((val.macro_f1, params.clone(), adam.clone()));
            best_epoch = epoch;
        }
        if let (Some(target), Some(acc)) = (training.stop_at_train_accuracy, train_accuracy) {
            if acc >= target {
                break;
            }
        }
    }

    let (_, params, adam) = best.expect("at least one epoch ran");
    let mut skipped = train_set.skipped;
    skipped.extend(val_set.skipped);
    Ok(TrainOutcome {
        classifier: Classifier {
            config: model.clone(),
            params,
        },
        adam,
        log: TrainRunLog {
            seed: training.seed,
            model: model.clone(),
            training: training.clone(),
            input_counts,
            oversampled_counts: balanced.counts(),
            train_size: train_part.len(),
            validation_size: val_part.len(),
            skipped,
            epochs,
            best_epoch,
            gradient_samples,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::sync::Arc;

    use crate::features::{FeatureSet, MockProvider};
    use crate::lexicon::Lexicon;
    use crate::nn::RnnKind;

    fn synthetic(hof: usize, not: usize) -> Dataset {
        let mut samples = Vec::new();
        for i in 0..hof {
            samples.push(Sample::labeled(format!("h{i}"), format!("text {i}"), Label::Hof));
        }
        for i in 0..not {
            samples.push(Sample::labeled(format!("n{i}"), format!("text {i}"), Label::Not));
        }
        Dataset::new(samples).unwrap()
    }

    #[test]
    fn parses_three_rows() {
        let d = parse_dataset("id\ttext\tlabel\n1\tyou idiot\tHOF\n2\thello \"there\"\tNOT\n3\tok\tNOT\n".as_bytes()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.counts(), LabelCounts { hof: 1, not: 2, unlabeled: 0 });
        assert_eq!(d.samples()[1].text, "hello \"there\"");
    }

    #[test]
    fn unlabeled_files_are_accepted() {
        let d = parse_dataset("id\ttext\na\tx\nb\ty\n".as_bytes()).unwrap();
        assert_eq!(d.counts().unlabeled, 2);
        assert!(matches!(d.require_both_classes(), Err(PipelineError::Unlabeled(_))));
    }

    #[test]
    fn load_errors() {
        match parse_dataset("id\ttext\tlabel\n1\ta\tHOF\n2\tb\tMAYBE\n".as_bytes()) {
            Err(PipelineError::UnknownLabel { line: 3, value }) => assert_eq!(value, "MAYBE"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_dataset("".as_bytes()), Err(PipelineError::EmptyFile)));
        assert!(matches!(parse_dataset("id\tlabel\n".as_bytes()), Err(PipelineError::MissingColumn("text"))));
        assert!(matches!(
            parse_dataset("id\ttext\n1\ta\n1\tb\n".as_bytes()),
            Err(PipelineError::DuplicateId { line: 3, .. })
        ));
    }

    #[test]
    fn render_then_parse() {
        let d = synthetic(2, 3);
        assert_eq!(parse_dataset(render_dataset(&d).as_bytes()).unwrap(), d);
    }

    #[test]
    fn oversample_table_counts() {
        let d = synthetic(2501, 1342);
        let o = oversample(&d, 5).unwrap();
        assert_eq!(o.counts(), LabelCounts { hof: 2501, not: 2501, unlabeled: 0 });
        assert_eq!(&o.samples()[..d.len()], d.samples());
        for s in &o.samples()[d.len()..] {
            let (orig, _) = s.id.split_once("#dup").unwrap();
            let src = d.samples().iter().find(|x| x.id == orig).unwrap();
            assert_eq!((&src.text, src.label), (&s.text, s.label));
        }
        assert_eq!(oversample(&d, 5).unwrap(), o);
        assert_ne!(oversample(&d, 6).unwrap(), o);
    }

    #[test]
    fn oversample_edge_cases() {
        let d = synthetic(10, 10);
        assert_eq!(oversample(&d, 1).unwrap(), d);
        assert!(matches!(oversample(&synthetic(3, 0), 1), Err(PipelineError::SingleClass(Label::Hof))));
    }

    #[test]
    fn split_is_stratified_partition() {
        let d = synthetic(600, 400);
        let (t, v) = split(&d, 0.9, 3).unwrap();
        assert_eq!((t.counts().hof, t.counts().not), (540, 360));
        assert_eq!((v.counts().hof, v.counts().not), (60, 40));
        let mut ids: Vec<&str> = t.samples().iter().chain(v.samples()).map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        let mut orig: Vec<&str> = d.samples().iter().map(|s| s.id.as_str()).collect();
        orig.sort_unstable();
        assert_eq!(ids, orig);

        let (t, v) = split(&synthetic(2, 2), 0.5, 0).unwrap();
        assert_eq!((t.counts().hof, t.counts().not, v.counts().hof, v.counts().not), (1, 1, 1, 1));
        assert!(matches!(split(&synthetic(1, 5), 0.9, 0), Err(PipelineError::ClassTooSmall { label: Label::Hof, count: 1 })));
        assert!(matches!(split(&d, 1.0, 0), Err(PipelineError::BadRatio(_))));
    }

    fn tiny_setup() -> (ModelConfig, FeatureExtractor, Dataset) {
        let model = ModelConfig {
            embed_dim: 4,
            lexicon_dim: 3,
            rnn_kind: RnnKind::Gru,
            rnn_size: 3,
            block_sizes: [4, 4, 4, 4],
            seed: 1,
            features: FeatureSet::ALL,
            ..ModelConfig::default()
        };
        let lex = Arc::new(Lexicon::parse("idiot\nmoron\nscum*\n").unwrap().lexicon);
        let ex = model.extractor(Some(Arc::new(MockProvider::new(4, 2))), Some(lex));
        let mut samples = Vec::new();
        for i in 0..8 {
            samples.push(Sample::labeled(format!("h{i}"), format!("you idiot number {i}"), Label::Hof));
            samples.push(Sample::labeled(format!("n{i}"), format!("lovely day number {i}"), Label::Not));
        }
        samples.push(Sample::labeled("e", "#onlytag", Label::Not));
        (model, ex, Dataset::new(samples).unwrap())
    }

    #[test]
    fn training_is_deterministic_and_logged() {
        let (model, ex, data) = tiny_setup();
        let cfg = TrainingConfig {
            epochs: 3,
            batch_size: 4,
            ..TrainingConfig::default()
        };
        let a = train(&model, &cfg, &data, &ex).unwrap();
        let b = train(&model, &cfg, &data, &ex).unwrap();
        assert_eq!(a.checkpoint(), b.checkpoint());
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.epochs.len(), 3);
        assert!(a.log.best_epoch < 3);
        assert_eq!(a.log.oversampled_counts.hof, a.log.oversampled_counts.not);
        assert!(a.log.skipped.iter().any(|s| s.id == "e" && s.reason == SkipReason::EmptyInput));
    }

    // validation samples never reach a gradient pass
    #[test]
    fn gradient_samples_match_train_part() {
        let (model, ex, data) = tiny_setup();
        let cfg = TrainingConfig {
            epochs: 2,
            batch_size: 5,
            ..TrainingConfig::default()
        };
        let out = train(&model, &cfg, &data, &ex).unwrap();
        let skipped_train = {
            let balanced = oversample(&data, cfg.seed).unwrap();
            let (t, _) = split(&balanced, cfg.train_ratio, cfg.seed).unwrap();
            let ids: HashMap<&str, ()> = t.samples().iter().map(|s| (s.id.as_str(), ())).collect();
            out.log.skipped.iter().filter(|s| ids.contains_key(s.id.as_str())).count()
        };
        assert_eq!(out.log.gradient_samples, 2 * (out.log.train_size - skipped_train) as u64);
    }

    #[test]
    fn single_class_fails_before_training() {
        let (model, ex, _) = tiny_setup();
        let d = synthetic(4, 0);
        assert!(matches!(
            train(&model, &TrainingConfig::default(), &d, &ex),
            Err(PipelineError::SingleClass(_))
        ));
    }

    #[test]
    fn missing_provider_fails_before_training() {
        let (model, mut ex, data) = tiny_setup();
        ex.provider = None;
        assert!(matches!(
            train(&model, &TrainingConfig::default(), &data, &ex),
            Err(PipelineError::Feature { source: FeatureError::MissingEncoder("embedding"), .. })
        ));
    }

    #[test]
    fn divergent_learning_rate_aborts_with_diagnostics() {
        let (model, ex, data) = tiny_setup();
        let cfg = TrainingConfig {
            epochs: 50,
            batch_size: 4,
            adam: AdamConfig {
                learning_rate: 1e30,
                ..AdamConfig::default()
            },
            ..TrainingConfig::default()
        };
        match train(&model, &cfg, &data, &ex) {
            Err(PipelineError::NonFiniteLoss { diagnostics, .. }) => assert!(diagnostics.contains("parameter norms")),
            Ok(_) => {} // a saturated network can stay finite; nothing to check
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn training_config_rejects_unknown_keys() {
        let err = serde_json::from_str::<TrainingConfig>(r#"{"epochs": 3, "learning_rat": 1}"#).unwrap_err();
        assert!(err.to_string().contains("learning_rat"));
    }
}
