//! Confusion matrices, accuracy / macro-F1 / weighted-F1, the feature
//! ablation grid and report rendering.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{EmbeddingProvider, FeatureExtractor, FeatureSet};
use crate::label::Label;
use crate::lexicon::Lexicon;
use crate::model::{Classifier, ModelConfig, ModelError};
use crate::pipeline::{train, Dataset, PipelineError, TrainingConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{preds} predictions for {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("feature set #{0} is empty")]
    EmptyFeatureSet(usize),
    #[error("feature set #{index} ({features}) needs {what}, which was not supplied")]
    MissingEncoder {
        index: usize,
        features: FeatureSet,
        what: &'static str,
    },
    #[error("sample {0:?} has no gold label")]
    Unlabeled(String),
    #[error("malformed report: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// `counts[gold][pred]`, indexed by [`Label::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 2]; 2]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn add(&mut self, gold: Label, pred: Label) {
        self.counts[gold.index()][pred.index()] += 1;
    }

    pub fn get(&self, gold: Label, pred: Label) -> u64 {
        self.counts[gold.index()][pred.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    /// Gold count of `label`.
    pub fn support(&self, label: Label) -> u64 {
        self.counts[label.index()].iter().sum()
    }

    /// Prediction count of `label`.
    pub fn predicted(&self, label: Label) -> u64 {
        self.counts.iter().map(|row| row[label.index()]).sum()
    }
}

pub fn confusion(preds: &[Label], golds: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &g) in preds.iter().zip(golds) {
        cm.add(g, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    /// Indexed by [`Label::index`].
    pub per_class: [ClassMetrics; 2],
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Undefined precision, recall or F1 count as 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let per_class = Label::ALL.map(|l| {
        let tp = cm.get(l, l);
        let precision = ratio(tp, cm.predicted(l));
        let recall = ratio(tp, cm.support(l));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support: cm.support(l),
        }
    });
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / 2.0;
    let weighted_f1 = per_class.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / total as f64;
    Ok(Metrics {
        accuracy: ratio(cm.trace(), total),
        macro_f1,
        weighted_f1,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub features: FeatureSet,
    pub provider: String,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_confusion(name: impl Into<String>, features: FeatureSet, provider: impl Into<String>, confusion: ConfusionMatrix) -> Result<Self, EvalError> {
        Ok(EvalReport {
            name: name.into(),
            features,
            provider: provider.into(),
            metrics: metrics(&confusion)?,
            confusion,
        })
    }
}

/// Provider name as shown in reports; `-` when embeddings are off.
pub fn provider_tag(features: FeatureSet, provider: Option<&Arc<dyn EmbeddingProvider>>) -> String {
    match (features.embeddings, provider) {
        (true, Some(p)) => p.name().to_string(),
        _ => "-".to_string(),
    }
}

/// Predicts every sample of a labeled dataset and scores the result.
pub fn evaluate(classifier: &Classifier, extractor: &FeatureExtractor, data: &Dataset, name: &str) -> Result<EvalReport, EvalError> {
    let golds: Vec<Label> = data
        .samples()
        .iter()
        .map(|s| s.label.ok_or_else(|| EvalError::Unlabeled(s.id.clone())))
        .collect::<Result<_, _>>()?;
    let items: Vec<(&str, &str)> = data.samples().iter().map(|s| (s.id.as_str(), s.text.as_str())).collect();
    let preds: Vec<Label> = classifier.predict_batch(extractor, &items)?.into_iter().map(|p| p.label).collect();
    let cm = confusion(&preds, &golds)?;
    EvalReport::from_confusion(name, extractor.features, provider_tag(extractor.features, extractor.provider.as_ref()), cm)
}

/// Trains and evaluates one fresh model per feature set.
///
/// Run `i` uses seed `base + i` for both initialization and training, so a
/// set listed twice yields two independent rows. Every set is validated
/// before any training starts. Reports come back in input order.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    sets: &[FeatureSet],
    train_data: &Dataset,
    test_data: &Dataset,
    provider: Option<Arc<dyn EmbeddingProvider>>,
    lexicon: Option<Arc<Lexicon>>,
    base_model: &ModelConfig,
    base_training: &TrainingConfig,
) -> Result<Vec<EvalReport>, EvalError> {
    if sets.is_empty() {
        return Err(EvalError::Empty);
    }
    for (index, &features) in sets.iter().enumerate() {
        if features.is_empty() {
            return Err(EvalError::EmptyFeatureSet(index));
        }
        if features.embeddings && provider.is_none() {
            return Err(EvalError::MissingEncoder {
                index,
                features,
                what: "an embedding provider",
            });
        }
        if features.hate_words && lexicon.is_none() {
            return Err(EvalError::MissingEncoder {
                index,
                features,
                what: "a lexicon",
            });
        }
    }
    sets.par_iter()
        .enumerate()
        .map(|(i, &features)| {
            let mut model = base_model.clone();
            model.features = features;
            model.seed = base_model.seed.wrapping_add(i as u64);
            let mut training = base_training.clone();
            training.seed = base_training.seed.wrapping_add(i as u64);
            let extractor = model.extractor(provider.clone(), lexicon.clone());
            let outcome = train(&model, &training, train_data, &extractor)?;
            evaluate(&outcome.classifier, &extractor, test_data, &format!("run{i}"))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(format!("unknown report format {s:?}; expected markdown or csv")),
        }
    }
}

/// Round half up at two decimals.
pub fn round2(x: f64) -> String {
    format!("{:.2}", ((x * 100.0) + 0.5 + 1e-9).floor() / 100.0)
}

pub const CSV_HEADER: [&str; 9] = [
    "features",
    "provider",
    "accuracy",
    "macro_f1",
    "weighted_f1",
    "hof_hof",
    "hof_not",
    "not_hof",
    "not_not",
];

pub fn render_report(reports: &[EvalReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(reports),
        ReportFormat::Csv => render_csv(reports),
    }
}

fn render_markdown(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    out.push_str("| Features | Acc | M-F1 | W-F1 | Provider |\n");
    out.push_str("|---|---|---|---|---|\n");
    for r in reports {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            r.features,
            round2(m.accuracy),
            round2(m.macro_f1),
            round2(m.weighted_f1),
            r.provider
        );
    }
    for r in reports {
        let c = &r.confusion;
        let _ = write!(
            out,
            "\n### {} ({}, {})\n\n| gold \\ pred | HOF | NOT |\n|---|---|---|\n| HOF | {} | {} |\n| NOT | {} | {} |\n",
            r.features,
            r.provider,
            r.name,
            c.counts[0][0],
            c.counts[0][1],
            c.counts[1][0],
            c.counts[1][1]
        );
    }
    out
}

fn render_csv(reports: &[EvalReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in reports {
        let m = &r.metrics;
        let c = &r.confusion.counts;
        w.write_record([
            r.features.to_string(),
            r.provider.clone(),
            format!("{:.6}", m.accuracy),
            format!("{:.6}", m.macro_f1),
            format!("{:.6}", m.weighted_f1),
            c[0][0].to_string(),
            c[0][1].to_string(),
            c[1][0].to_string(),
            c[1][1].to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// One parsed CSV report row.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub features: FeatureSet,
    pub provider: String,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub hof_hof: u64,
    pub hof_not: u64,
    pub not_hof: u64,
    pub not_not: u64,
}

pub fn parse_csv_report(text: &str) -> Result<Vec<CsvRow>, EvalError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| EvalError::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != CSV_HEADER {
        return Err(EvalError::Parse(format!("unexpected header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(|e| EvalError::Parse(e.to_string()))).collect()
}
