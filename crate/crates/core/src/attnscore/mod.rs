//! Relevance scores from cross-attention.
//!
//! A sentence's attention score is the largest head-averaged weight any
//! query token assigns to any of its tokens, over all selected layers:
//!
//! ```text
//! a_s = max_{l, s_l <= t <= s_r, t_q} (1/H) * sum_h A[l, h, t, t_q]
//! ```
//!
//! Paragraph scores apply the same reduction over the paragraph's token
//! span, usually with a single layer (see [`crate::analysis`]).

mod long_context;
mod sheet;

pub use long_context::{
    attention_passes, plan_segments, score_long_document, AttentionPass, LongContextAttention,
    LongContextConfig, Strategy,
};
pub use sheet::{Provenance, ScoreKind, ScoreSheet};

use crate::backend::AttentionTensor;
use crate::corpus::{TokenAlignment, TokenRange};
use crate::error::{Error, Result};

/// Per-document-token relevance: max over layers and query tokens of the
/// head-averaged attention weight.
pub fn token_relevance(tensor: &AttentionTensor) -> Vec<f64> {
    let [layers, heads, doc_len, query_len] = tensor.shape();
    let mut relevance = vec![f64::NEG_INFINITY; doc_len];
    let mut sums = vec![0.0f64; doc_len * query_len];
    for l in 0..layers {
        sums.fill(0.0);
        for h in 0..heads {
            for (acc, &w) in sums.iter_mut().zip(tensor.head_block(l, h)) {
                *acc += w as f64;
            }
        }
        for (t, row) in sums.chunks(query_len).enumerate() {
            for &s in row {
                let mean = s / heads as f64;
                if mean > relevance[t] {
                    relevance[t] = mean;
                }
            }
        }
    }
    relevance
}

/// Like [`token_relevance`], but each layer's head-averaged values are first
/// divided by that layer's maximum over the document.
pub fn token_relevance_layer_normalized(tensor: &AttentionTensor) -> Result<Vec<f64>> {
    let mut out = vec![f64::NEG_INFINITY; tensor.doc_len()];
    for &id in tensor.layer_ids() {
        let per_layer = token_relevance(&tensor.select_layers(&[id])?);
        let peak = per_layer.iter().copied().fold(0.0, f64::max);
        for (o, r) in out.iter_mut().zip(per_layer) {
            let v = if peak > 0.0 { r / peak } else { r };
            *o = o.max(v);
        }
    }
    Ok(out)
}

pub(crate) fn span_max(relevance: &[f64], span: TokenRange) -> f64 {
    relevance[span.first..=span.last]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn check_alignment(tensor: &AttentionTensor, align: &TokenAlignment) -> Result<()> {
    if tensor.doc_len() != align.doc_token_count || tensor.query_len() != align.query_token_count {
        return Err(Error::ShapeMismatch(format!(
            "tensor covers {}x{} tokens, alignment {}x{}",
            tensor.doc_len(),
            tensor.query_len(),
            align.doc_token_count,
            align.query_token_count
        )));
    }
    align.validate()
}

pub fn sentence_attention_scores(
    tensor: &AttentionTensor,
    align: &TokenAlignment,
) -> Result<ScoreSheet> {
    check_alignment(tensor, align)?;
    let relevance = token_relevance(tensor);
    Ok(ScoreSheet::attention(
        tensor.layer_ids().to_vec(),
        align
            .sentence_token_spans
            .iter()
            .map(|&s| span_max(&relevance, s))
            .collect(),
    ))
}

pub fn paragraph_attention_scores(
    tensor: &AttentionTensor,
    align: &TokenAlignment,
) -> Result<Vec<f64>> {
    check_alignment(tensor, align)?;
    let relevance = token_relevance(tensor);
    Ok(align
        .paragraph_token_spans
        .iter()
        .map(|&p| span_max(&relevance, p))
        .collect())
}
