//! Sentence-level relevance from embedding cosine similarity.

use crate::attnscore::ScoreSheet;
use crate::backend::{EmbeddingBackend, EmbeddingVector};
use crate::corpus::SegmentedDocument;
use crate::error::{Error, Result};

pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Embeds every sentence on its own (no surrounding context) plus the
/// query, and scores each sentence by cosine similarity to the query.
///
/// Sentences are sent in batches of `batch_size`; scores do not depend on
/// the batch size.
pub fn sentence_embedding_scores(
    doc: &SegmentedDocument,
    query: &str,
    backend: &dyn EmbeddingBackend,
    batch_size: usize,
) -> Result<ScoreSheet> {
    if doc.sentence_count() == 0 {
        return Err(Error::ShapeMismatch("document has no sentences".into()));
    }
    let query_vec = single(backend.embed(&[query])?)?;
    let texts: Vec<&str> = (0..doc.sentence_count())
        .map(|i| doc.sentence_text(i))
        .collect();
    let mut vectors = Vec::with_capacity(texts.len());
    for batch in texts.chunks(batch_size.max(1)) {
        let out = backend.embed(batch)?;
        if out.len() != batch.len() {
            return Err(Error::backend(format!(
                "embedded {} texts, got {} vectors",
                batch.len(),
                out.len()
            )));
        }
        vectors.extend(out);
    }
    let scores = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if v.values.len() != query_vec.values.len() {
                return Err(Error::backend(format!(
                    "embedding {i} has dimension {}, query has {}",
                    v.values.len(),
                    query_vec.values.len()
                )));
            }
            cosine(&v.values, &query_vec.values).ok_or(Error::ZeroNorm { index: i })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreSheet::embedding(backend.model_id(), scores))
}

fn single(mut v: Vec<EmbeddingVector>) -> Result<EmbeddingVector> {
    match v.len() {
        1 => Ok(v.pop().expect("length checked")),
        n => Err(Error::backend(format!("embedded 1 text, got {n} vectors"))),
    }
}
