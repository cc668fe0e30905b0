//! Browser demo: retrieval, a per-layer paragraph heatmap and a needle
//! sweep, all on the model-free lexical backends. The plain functions
//! return JSON values and are what the wasm exports wrap.

use longdoc::analysis::{run_niah, HaystackSpec};
use longdoc::attnscore::{paragraph_attention_scores, LongContextConfig, Strategy};
use longdoc::backend::lexical::{LexicalAttention, LexicalEmbedder};
use longdoc::backend::{forward_with_attention, AttentionBackend};
use longdoc::corpus::{segment_document, SegmentationConfig};
use longdoc::entity::CapitalizedSpanRecognizer;
use longdoc::retrieve::{RetrievalSettings, Retriever, ViewMode};
use longdoc::{Error, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

pub const NUM_LAYERS: usize = 16;
pub const NUM_HEADS: usize = 8;
/// Where the lexical backend's match sharpness peaks.
pub const DEMO_LAYERS: [usize; 3] = [8, 9, 10];

fn attention() -> LexicalAttention {
    LexicalAttention::builder()
        .layers(NUM_LAYERS)
        .heads(NUM_HEADS)
        .window(4096)
        .build()
}

fn parse_view(view: &str) -> Result<ViewMode> {
    serde_json::from_value(Value::String(view.into()))
        .map_err(|_| Error::Config(format!("unknown view {view:?}")))
}

/// Per-sentence scores from both views plus the retrieved paragraphs.
pub fn retrieve_json(
    document: &str,
    query: &str,
    k: usize,
    view: &str,
    entities: bool,
) -> Result<Value> {
    let doc = segment_document(document, &SegmentationConfig::default())?;
    let retriever = Retriever {
        attention: Box::new(attention()),
        embedding: Box::new(LexicalEmbedder::default()),
        recognizer: Box::new(CapitalizedSpanRecognizer),
        settings: RetrievalSettings {
            layers: DEMO_LAYERS.to_vec(),
            view: parse_view(view)?,
            entity_expansion: entities,
            long_context: LongContextConfig::with_strategy(Strategy::Chunked),
            ..Default::default()
        },
    };
    let trace = retriever.trace(&doc, query, k)?;
    let score = |sheet: &Option<longdoc::attnscore::ScoreSheet>, i: usize| {
        sheet.as_ref().map(|s| s.scores()[i])
    };
    let sentences: Vec<Value> = doc
        .sentences
        .iter()
        .map(|s| {
            json!({
                "text": doc.sentence_text(s.index),
                "paragraph": s.paragraph_index,
                "attention": score(&trace.attention, s.index),
                "embedding": score(&trace.embedding, s.index),
                "selected": trace.result.selected_sentences.contains(&s.index),
            })
        })
        .collect();
    let mut result = trace.result.to_json(&trace.index);
    result["sentence_scores"] = sentences.into();
    result["paragraph_count"] = doc.paragraph_count().into();
    Ok(result)
}

/// Paragraph attention score at every layer, for a layers x paragraphs
/// heatmap.
pub fn layer_heatmap_json(document: &str, query: &str) -> Result<Value> {
    let doc = segment_document(document, &SegmentationConfig::default())?;
    let backend = attention();
    let layers: Vec<usize> = (0..backend.num_layers()).collect();
    let (tensor, align) = forward_with_attention(&backend, &doc, query, &layers, Strategy::None)?;
    let rows = layers
        .iter()
        .map(|&l| paragraph_attention_scores(&tensor.select_layers(&[l])?, &align))
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({
        "layers": layers,
        "paragraphs": (0..doc.paragraph_count()).map(|p| doc.paragraph_text(p)).collect::<Vec<_>>(),
        "scores": rows,
    }))
}

const FILLER: &str = "The river bends twice before it reaches the town. Farmers bring apples to the square on market days. \
    An old bell hangs in the tower above the library. Children race paper boats along the canal. \
    Snow covers the northern hills for most of the winter. The bakery opens before the first train leaves.";

/// Head counts per layer for a needle planted at `depths` evenly spaced
/// positions in filler of about `target_tokens` tokens.
pub fn needle_json(
    needle: &str,
    question: &str,
    target_tokens: usize,
    depths: usize,
) -> Result<Value> {
    let depths = depths.max(2);
    let spec = HaystackSpec {
        filler: FILLER.into(),
        needle: needle.into(),
        question: question.into(),
        depths: (0..depths)
            .map(|i| i as f64 / (depths - 1) as f64)
            .collect(),
        target_tokens,
        sentences_per_paragraph: 4,
    };
    let backend = attention();
    let layers: Vec<usize> = (0..NUM_LAYERS).collect();
    let rows = run_niah(
        &backend,
        &spec,
        &layers,
        &LongContextConfig::with_strategy(Strategy::Chunked),
    )?;
    Ok(json!({
        "depths": spec.depths,
        "layers": layers,
        "heads": NUM_HEADS,
        "rows": rows,
    }))
}

fn to_js(value: Result<Value>) -> std::result::Result<String, JsError> {
    value
        .map(|v| v.to_string())
        .map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn retrieve_demo(
    document: &str,
    query: &str,
    k: usize,
    view: &str,
    entities: bool,
) -> std::result::Result<String, JsError> {
    to_js(retrieve_json(document, query, k, view, entities))
}

#[wasm_bindgen]
pub fn layer_heatmap(document: &str, query: &str) -> std::result::Result<String, JsError> {
    to_js(layer_heatmap_json(document, query))
}

#[wasm_bindgen]
pub fn needle_demo(
    needle: &str,
    question: &str,
    target_tokens: usize,
    depths: usize,
) -> std::result::Result<String, JsError> {
    to_js(needle_json(needle, question, target_tokens, depths))
}
