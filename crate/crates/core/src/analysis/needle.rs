use serde::{Deserialize, Serialize};

use crate::attnscore::{attention_passes, AttentionPass, LongContextConfig};
use crate::backend::{AttentionBackend, AttentionTensor};
use crate::corpus::{
    align_tokens, segment_document, SegmentationConfig, SegmentedDocument, TokenRange,
};
use crate::error::{Error, Result};

/// Strongest (value, document token, query token) per layer and head, over
/// passes whose document axes map to the given global tokens. Ties go to
/// the lexicographically lowest `(token, query token)`.
fn head_argmax<'a>(
    passes: impl IntoIterator<Item = (&'a [usize], &'a AttentionTensor)>,
) -> Vec<Vec<(f32, usize, usize)>> {
    let mut best: Vec<Vec<(f32, usize, usize)>> = Vec::new();
    for (tokens, tensor) in passes {
        let [layers, heads, _, query_len] = tensor.shape();
        if best.is_empty() {
            best = vec![vec![(f32::NEG_INFINITY, usize::MAX, usize::MAX); heads]; layers];
        }
        for (l, row) in best.iter_mut().enumerate() {
            for (h, slot) in row.iter_mut().enumerate() {
                for (i, &w) in tensor.head_block(l, h).iter().enumerate() {
                    let cand = (w, tokens[i / query_len], i % query_len);
                    if cand.0 > slot.0 || (cand.0 == slot.0 && (cand.1, cand.2) < (slot.1, slot.2))
                    {
                        *slot = cand;
                    }
                }
            }
        }
    }
    best
}

/// Per layer, the number of heads whose single strongest weight (over all
/// document and query tokens) falls on a token inside `needle`.
pub fn needle_head_count(tensor: &AttentionTensor, needle: TokenRange) -> Vec<usize> {
    let tokens: Vec<usize> = (0..tensor.doc_len()).collect();
    count_in_span(&head_argmax([(tokens.as_slice(), tensor)]), needle)
}

fn count_in_span(best: &[Vec<(f32, usize, usize)>], needle: TokenRange) -> Vec<usize> {
    best.iter()
        .map(|heads| {
            heads
                .iter()
                .filter(|&&(_, t, _)| needle.contains(t))
                .count()
        })
        .collect()
}

fn default_sentences_per_paragraph() -> usize {
    6
}

/// Parameters of a needle-in-a-haystack sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaystackSpec {
    /// Filler prose, repeated sentence by sentence to reach the target size.
    pub filler: String,
    /// A single sentence planted in the filler.
    pub needle: String,
    pub question: String,
    /// Relative needle positions in `[0, 1]`.
    pub depths: Vec<f64>,
    /// Approximate filler length in tokens.
    pub target_tokens: usize,
    #[serde(default = "default_sentences_per_paragraph")]
    pub sentences_per_paragraph: usize,
}

#[derive(Debug, Clone)]
pub struct Haystack {
    pub depth: f64,
    pub document: SegmentedDocument,
    pub needle_sentence: usize,
}

pub fn build_haystack(
    spec: &HaystackSpec,
    depth: f64,
    tokenizer: &dyn crate::tokenize::Tokenizer,
) -> Result<Haystack> {
    if !(0.0..=1.0).contains(&depth) {
        return Err(Error::Config(format!(
            "needle depth {depth} outside [0, 1]"
        )));
    }
    let rules = SegmentationConfig::default();
    let filler_doc = segment_document(&spec.filler, &rules)
        .map_err(|_| Error::Config("filler text is empty".into()))?;
    let filler: Vec<&str> = (0..filler_doc.sentence_count())
        .map(|i| filler_doc.sentence_text(i))
        .collect();
    let mut sentences: Vec<&str> = Vec::new();
    let mut total = 0;
    while total < spec.target_tokens.max(1) {
        let s = filler[sentences.len() % filler.len()];
        total += tokenizer.count(s).max(1);
        sentences.push(s);
    }
    let position = (depth * sentences.len() as f64).round() as usize;
    let needle = spec.needle.trim();
    sentences.insert(position, needle);

    let per = spec.sentences_per_paragraph.max(1);
    let paragraphs: Vec<String> = sentences.chunks(per).map(|c| c.join(" ")).collect();
    let document =
        SegmentedDocument::from_paragraphs(format!("haystack@{depth}"), &paragraphs, &rules)?;
    if document.sentence_count() != sentences.len() || document.sentence_text(position) != needle {
        return Err(Error::Config(
            "needle and filler must split into whole sentences".into(),
        ));
    }
    Ok(Haystack {
        depth,
        document,
        needle_sentence: position,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiahRow {
    pub depth: f64,
    pub layer: usize,
    pub head_count: usize,
    pub heads: usize,
    pub doc_tokens: usize,
}

/// Builds one haystack per depth and counts, per layer, the heads whose
/// strongest weight lands on the needle.
pub fn run_niah(
    backend: &dyn AttentionBackend,
    spec: &HaystackSpec,
    layers: &[usize],
    cfg: &LongContextConfig,
) -> Result<Vec<NiahRow>> {
    let mut rows = Vec::new();
    for &depth in &spec.depths {
        let hay = build_haystack(spec, depth, backend.tokenizer())?;
        let needle = align_tokens(&hay.document, &spec.question, backend.tokenizer())?
            .sentence_token_spans[hay.needle_sentence];
        let attention = attention_passes(backend, &hay.document, &spec.question, layers, cfg)?;
        let best = head_argmax(
            attention
                .passes
                .iter()
                .map(|p: &AttentionPass| (p.tokens.as_slice(), &p.tensor)),
        );
        for (li, count) in count_in_span(&best, needle).into_iter().enumerate() {
            rows.push(NiahRow {
                depth,
                layer: layers[li],
                head_count: count,
                heads: backend.num_heads(),
                doc_tokens: attention.alignment.doc_token_count,
            });
        }
    }
    Ok(rows)
}
