//! Model-free backends built on surface-form token matches.
//!
//! `LexicalAttention` scores each (query token, document token) pair by
//! lexical match and turns the scores into attention with a per-head
//! softmax that also carries a fixed sink mass, so document weights for a
//! query token sum to less than one. Match sharpness peaks in the later
//! middle layers, and head 0 of every layer is a sink head that parks most
//! of its mass on the sink and barely separates matches. Both traits give
//! the layer profiler and the needle probe something non-trivial to find.
//!
//! `LexicalEmbedder` is a signed feature-hashing embedder over words and
//! character trigrams.

use super::{
    check_layers, AttentionBackend, AttentionTensor, EmbeddingBackend, EmbeddingVector, KeySet,
    PromptTemplate,
};
use crate::error::{Error, Result};
use crate::tokenize::{Tokenizer, WordTokenizer};

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "did", "do", "does", "for", "from",
    "had", "has", "have", "he", "her", "his", "how", "i", "in", "is", "it", "its", "of", "on",
    "or", "she", "that", "the", "their", "them", "they", "this", "to", "was", "were", "what",
    "when", "where", "which", "who", "whom", "why", "with",
];

pub(crate) fn is_stopword(word: &str) -> bool {
    STOPWORDS.binary_search(&word).is_ok()
}

fn normalize(text: &str) -> String {
    text.to_lowercase()
}

/// Similarity of two normalized tokens in `[0, 1]`.
fn token_match(q: &str, d: &str) -> f64 {
    let content = |w: &str| w.chars().any(char::is_alphanumeric) && !is_stopword(w);
    let weight = if content(q) && content(d) { 1.0 } else { 0.15 };
    if q == d {
        return weight;
    }
    let common = q.chars().zip(d.chars()).take_while(|(a, b)| a == b).count();
    if common >= 4 {
        0.6 * weight
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct LexicalAttention {
    model_id: String,
    layers: usize,
    heads: usize,
    window: usize,
    template: PromptTemplate,
}

#[derive(Debug, Clone)]
pub struct LexicalAttentionBuilder(LexicalAttention);

impl LexicalAttentionBuilder {
    pub fn model_id(mut self, id: impl Into<String>) -> Self {
        self.0.model_id = id.into();
        self
    }
    pub fn layers(mut self, n: usize) -> Self {
        self.0.layers = n.max(1);
        self
    }
    pub fn heads(mut self, n: usize) -> Self {
        self.0.heads = n.max(1);
        self
    }
    pub fn window(mut self, n: usize) -> Self {
        self.0.window = n;
        self
    }
    pub fn template(mut self, template: PromptTemplate) -> Self {
        self.0.template = template;
        self
    }
    pub fn build(self) -> LexicalAttention {
        self.0
    }
}

impl Default for LexicalAttention {
    fn default() -> Self {
        LexicalAttention {
            model_id: "lexical".into(),
            layers: 16,
            heads: 8,
            window: 4096,
            template: PromptTemplate::default(),
        }
    }
}

impl LexicalAttention {
    pub fn builder() -> LexicalAttentionBuilder {
        LexicalAttentionBuilder(LexicalAttention::default())
    }

    /// Softmax temperature for one head; peaks around 60% depth.
    fn sharpness(&self, layer: usize, head: usize) -> f64 {
        let depth = if self.layers > 1 {
            layer as f64 / (self.layers - 1) as f64
        } else {
            0.6
        };
        let layer_gain = 1.0 + 7.0 * (-(depth - 0.6).powi(2) / (2.0 * 0.15 * 0.15)).exp();
        let head_gain = 0.6
            + 0.8 * ((head * 7 + layer * 3) % self.heads.max(2)) as f64 / self.heads.max(2) as f64;
        layer_gain * head_gain
    }
}

impl AttentionBackend for LexicalAttention {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn num_layers(&self) -> usize {
        self.layers
    }

    fn num_heads(&self) -> usize {
        self.heads
    }

    fn window_limit(&self) -> usize {
        self.window
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        &WordTokenizer
    }

    fn template(&self) -> &PromptTemplate {
        &self.template
    }

    fn cross_attention(
        &self,
        document: &str,
        query: &str,
        layers: &[usize],
        keys: KeySet<'_>,
    ) -> Result<AttentionTensor> {
        check_layers(self, layers)?;
        let doc_words: Vec<String> = WordTokenizer
            .tokenize(document)
            .iter()
            .map(|t| normalize(&document[t.start..t.end]))
            .collect();
        let query_words: Vec<String> = WordTokenizer
            .tokenize(query)
            .iter()
            .map(|t| normalize(&query[t.start..t.end]))
            .collect();
        let key_idx: Vec<usize> = match keys {
            KeySet::All => (0..doc_words.len()).collect(),
            KeySet::Subset(idx) => {
                if idx.iter().any(|&t| t >= doc_words.len()) {
                    return Err(Error::backend("key subset outside the document"));
                }
                idx.to_vec()
            }
        };
        let (n, m) = (key_idx.len(), query_words.len());
        if n == 0 || m == 0 {
            return Err(Error::backend("empty document or query"));
        }
        let matches: Vec<f64> = key_idx
            .iter()
            .flat_map(|&t| query_words.iter().map(move |q| (t, q)))
            .map(|(t, q)| token_match(q, &doc_words[t]))
            .collect();
        // the sink absorbs mass equal to one unmatched token per key;
        // the sink head's sink is much heavier
        let sink = n as f64;
        let heavy_sink = sink * 4f64.exp();
        let mut values = Vec::with_capacity(layers.len() * self.heads * n * m);
        let mut block = vec![0.0f64; n * m];
        for &layer in layers {
            for head in 0..self.heads {
                let beta = self.sharpness(layer, head);
                let (gain, sink) = if head == 0 {
                    (0.5, heavy_sink)
                } else {
                    (1.0, sink)
                };
                for (w, &x) in block.iter_mut().zip(&matches) {
                    *w = (gain * beta * x).exp();
                }
                for q in 0..m {
                    let z: f64 = (0..n).map(|t| block[t * m + q]).sum::<f64>() + sink;
                    for t in 0..n {
                        block[t * m + q] /= z;
                    }
                }
                values.extend(block.iter().map(|&w| w as f32));
            }
        }
        AttentionTensor::new(layers.to_vec(), self.heads, n, m, values)
    }
}

#[derive(Debug, Clone)]
pub struct LexicalEmbedder {
    model_id: String,
    dim: usize,
}

impl Default for LexicalEmbedder {
    fn default() -> Self {
        LexicalEmbedder::new(256)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

impl LexicalEmbedder {
    pub fn new(dim: usize) -> Self {
        LexicalEmbedder {
            model_id: format!("lexical-hash-{dim}"),
            dim: dim.max(1),
        }
    }

    fn add(&self, v: &mut [f32], feature: &str, weight: f32) {
        let h = fnv1a(feature.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % self.dim as u64) as usize] += sign * weight;
    }

    fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0; self.dim];
        let lower = normalize(text);
        for t in WordTokenizer.tokenize(&lower) {
            let w = &lower[t.start..t.end];
            if w.chars().any(char::is_alphanumeric) {
                self.add(
                    &mut v,
                    &format!("w:{w}"),
                    if is_stopword(w) { 0.2 } else { 1.0 },
                );
            }
        }
        let chars: Vec<char> = std::iter::once(' ')
            .chain(
                lower
                    .split_whitespace()
                    .flat_map(|w| w.chars().chain(std::iter::once(' '))),
            )
            .collect();
        for tri in chars.windows(3) {
            let s: String = tri.iter().collect();
            self.add(&mut v, &format!("c:{s}"), 0.3);
        }
        v
    }
}

impl EmbeddingBackend for LexicalEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts
            .iter()
            .map(|t| EmbeddingVector {
                values: self.embed_one(t),
                model_id: self.model_id.clone(),
            })
            .collect())
    }
}
