//! Shared generators and brute-force oracles for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeSet;

use longdoc::backend::AttentionTensor;
use longdoc::corpus::{SegmentationConfig, SegmentedDocument, TokenAlignment, TokenRange};
use longdoc::entity::{EntityIndex, EntityMention};
use rand::Rng;

pub fn random_tensor(
    rng: &mut impl Rng,
    layers: usize,
    heads: usize,
    doc_len: usize,
    query_len: usize,
) -> AttentionTensor {
    let values = (0..layers * heads * doc_len * query_len)
        .map(|_| rng.gen::<f32>())
        .collect();
    AttentionTensor::new((0..layers).collect(), heads, doc_len, query_len, values).unwrap()
}

/// Splits `0..doc_len` into consecutive sentences grouped into paragraphs.
pub fn random_alignment(rng: &mut impl Rng, doc_len: usize, query_len: usize) -> TokenAlignment {
    let mut sentences = Vec::new();
    let mut start = 0;
    while start < doc_len {
        let len = rng.gen_range(1..=(doc_len - start).min(8));
        sentences.push(TokenRange::new(start, start + len - 1));
        start += len;
    }
    let mut paragraphs = Vec::new();
    let mut i = 0;
    while i < sentences.len() {
        let n = rng.gen_range(1..=(sentences.len() - i).min(4));
        paragraphs.push(TokenRange::new(
            sentences[i].first,
            sentences[i + n - 1].last,
        ));
        i += n;
    }
    TokenAlignment {
        tokenizer_id: "test".into(),
        doc_token_count: doc_len,
        query_token_count: query_len,
        sentence_token_spans: sentences,
        paragraph_token_spans: paragraphs,
    }
}

/// Literal nested-loop reading of the span score: the largest head-averaged
/// weight over layers, span tokens and query tokens.
pub fn oracle_span_score(tensor: &AttentionTensor, span: TokenRange) -> f64 {
    let [layers, heads, _, query_len] = tensor.shape();
    let mut best = f64::NEG_INFINITY;
    for l in 0..layers {
        for t in span.first..=span.last {
            for q in 0..query_len {
                let mut sum = 0.0f64;
                for h in 0..heads {
                    sum += tensor.get(l, h, t, q) as f64;
                }
                best = best.max(sum / heads as f64);
            }
        }
    }
    best
}

pub fn oracle_sentence_scores(tensor: &AttentionTensor, align: &TokenAlignment) -> Vec<f64> {
    align
        .sentence_token_spans
        .iter()
        .map(|&s| oracle_span_score(tensor, s))
        .collect()
}

pub fn oracle_paragraph_scores(tensor: &AttentionTensor, align: &TokenAlignment) -> Vec<f64> {
    align
        .paragraph_token_spans
        .iter()
        .map(|&p| oracle_span_score(tensor, p))
        .collect()
}

/// Document of `paragraphs` paragraphs with `per` sentences each.
pub fn synthetic_document(paragraphs: usize, per: usize) -> SegmentedDocument {
    let texts: Vec<String> = (0..paragraphs)
        .map(|p| {
            (0..per)
                .map(|s| format!("paragraph {p} sentence {s} text."))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    SegmentedDocument::from_paragraphs("synthetic", &texts, &SegmentationConfig::default()).unwrap()
}

/// Entity index where entity `e` is mentioned in every sentence of
/// `mentions[e]`.
pub fn index_from_sets(doc: &SegmentedDocument, mentions: &[BTreeSet<usize>]) -> EntityIndex {
    let pairs = mentions.iter().enumerate().flat_map(|(e, sents)| {
        sents.iter().map(move |&s| {
            (
                format!("entity {e:03}"),
                EntityMention {
                    sentence: s,
                    char_span: doc.sentences[s].char_span,
                },
            )
        })
    });
    EntityIndex::from_mentions(doc, pairs.collect::<Vec<_>>()).unwrap()
}
