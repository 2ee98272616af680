//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Results cross the boundary as JSON strings so the page needs no glue
//! beyond what `wasm-bindgen` generates.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use hofscan_core::evalkit::{metrics, round2, ConfusionMatrix};
use hofscan_core::label::Label;
use hofscan_core::lexicon::Lexicon;
use hofscan_core::preprocess::{normalize_text, preprocess};

/// Normalized text and its tokens.
pub fn normalize_json(raw: &str) -> Value {
    json!({
        "normalized": normalize_text(raw),
        "tokens": preprocess(raw).into_inner(),
    })
}

/// Lexicon matches for `raw` plus the active multi-hot positions.
pub fn highlight_json(raw: &str, lexicon_source: &str) -> Result<Value, String> {
    let loaded = Lexicon::parse(lexicon_source).map_err(|e| e.to_string())?;
    let lexicon = loaded.lexicon;
    let tokens = preprocess(raw);
    let spans: Vec<Value> = lexicon
        .match_spans(&tokens)
        .into_iter()
        .map(|s| {
            let e = &lexicon.entries()[s.entry];
            json!({
                "entry": s.entry,
                "start": s.start,
                "end": s.end,
                "pattern": e.pattern,
                "wildcard": e.wildcard,
            })
        })
        .collect();
    Ok(json!({
        "tokens": tokens.as_slice(),
        "spans": spans,
        "active": lexicon.encode(&tokens).ones(),
        "dimension": lexicon.dimension(),
        "duplicates": loaded.duplicates,
        "invalid": loaded.invalid,
    }))
}

/// Metrics for a 2×2 confusion matrix given as `counts[gold][pred]`.
pub fn metrics_json(hof_hof: u32, hof_not: u32, not_hof: u32, not_not: u32) -> Result<Value, String> {
    let cm = ConfusionMatrix::from_counts([[hof_hof.into(), hof_not.into()], [not_hof.into(), not_not.into()]]);
    let m = metrics(&cm).map_err(|e| e.to_string())?;
    let class = |l: Label| {
        let c = m.per_class[l.index()];
        json!({ "label": l.to_string(), "precision": c.precision, "recall": c.recall, "f1": c.f1, "support": c.support })
    };
    Ok(json!({
        "accuracy": m.accuracy,
        "macro_f1": m.macro_f1,
        "weighted_f1": m.weighted_f1,
        "rounded": {
            "accuracy": round2(m.accuracy),
            "macro_f1": round2(m.macro_f1),
            "weighted_f1": round2(m.weighted_f1),
        },
        "per_class": [class(Label::Hof), class(Label::Not)],
    }))
}

#[wasm_bindgen]
pub fn normalize(raw: &str) -> String {
    normalize_json(raw).to_string()
}

#[wasm_bindgen]
pub fn highlight(raw: &str, lexicon_source: &str) -> Result<String, JsError> {
    highlight_json(raw, lexicon_source).map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn score(hof_hof: u32, hof_not: u32, not_hof: u32, not_not: u32) -> Result<String, JsError> {
    metrics_json(hof_hof, hof_not, not_hof, not_not)
        .map(|v| v.to_string())
        .map_err(|e| JsError::new(&e))
}
