//! Model backends: a causal language model exposing cross-attention weights
//! and a sentence-embedding model.
//!
//! Two implementations ship with the crate. [`scripted`] replays fixture
//! tensors and vectors from JSON, for deterministic tests and CI without
//! model downloads. [`lexical`] is a model-free stand-in that derives
//! attention from query/document token matches; it powers the demo and lets
//! the CLI run on arbitrary text.

pub mod lexical;
pub mod scripted;
mod tensor;

use serde::{Deserialize, Serialize};

pub use tensor::AttentionTensor;

use crate::attnscore::Strategy;
use crate::corpus::{align::align_with_tokens, SegmentedDocument, TokenAlignment};
use crate::error::{Error, Result};
use crate::tokenize::Tokenizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub model_id: String,
}

/// Instruction text wrapped around the document and query when the prompt
/// is assembled: `preamble + document + separator + query`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplate {
    pub preamble: String,
    pub separator: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            preamble: "Read the following document and find the passages relevant to the question.\n\nDocument:\n".into(),
            separator: "\n\nQuestion: ".into(),
        }
    }
}

impl PromptTemplate {
    pub fn overhead(&self, tokenizer: &dyn Tokenizer) -> usize {
        tokenizer.count(&self.preamble) + tokenizer.count(&self.separator)
    }
}

/// Which document tokens are visible as attention keys. A subset is a
/// reduced context: the model runs over those tokens alone.
#[derive(Debug, Clone, Copy)]
pub enum KeySet<'a> {
    All,
    /// Sorted, deduplicated token indices; the returned tensor's document
    /// axis follows this order.
    Subset(&'a [usize]),
}

pub trait AttentionBackend {
    fn model_id(&self) -> &str;
    fn num_layers(&self) -> usize;
    fn num_heads(&self) -> usize;
    fn window_limit(&self) -> usize;
    fn tokenizer(&self) -> &dyn Tokenizer;
    fn template(&self) -> &PromptTemplate;

    /// Post-softmax attention from every query token to the selected
    /// document tokens, shape `[layers.len(), H, keys, T_q]`.
    fn cross_attention(
        &self,
        document: &str,
        query: &str,
        layers: &[usize],
        keys: KeySet<'_>,
    ) -> Result<AttentionTensor>;

    fn prompt_overhead(&self) -> usize {
        self.template().overhead(self.tokenizer())
    }
}

pub trait EmbeddingBackend {
    fn model_id(&self) -> &str;
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;
}

impl<T: AttentionBackend + ?Sized> AttentionBackend for Box<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn num_layers(&self) -> usize {
        (**self).num_layers()
    }
    fn num_heads(&self) -> usize {
        (**self).num_heads()
    }
    fn window_limit(&self) -> usize {
        (**self).window_limit()
    }
    fn tokenizer(&self) -> &dyn Tokenizer {
        (**self).tokenizer()
    }
    fn template(&self) -> &PromptTemplate {
        (**self).template()
    }
    fn cross_attention(
        &self,
        document: &str,
        query: &str,
        layers: &[usize],
        keys: KeySet<'_>,
    ) -> Result<AttentionTensor> {
        (**self).cross_attention(document, query, layers, keys)
    }
}

impl<T: EmbeddingBackend + ?Sized> EmbeddingBackend for Box<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed(texts)
    }
}

pub(crate) fn check_layers(backend: &dyn AttentionBackend, layers: &[usize]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Config("no attention layers selected".into()));
    }
    match layers.iter().find(|&&l| l >= backend.num_layers()) {
        Some(l) => Err(Error::Config(format!(
            "layer {l} out of range for {} with {} layers",
            backend.model_id(),
            backend.num_layers()
        ))),
        None => Ok(()),
    }
}

/// Total prompt length in tokens for a document/query pair.
pub fn prompt_tokens(
    backend: &dyn AttentionBackend,
    doc_tokens: usize,
    query_tokens: usize,
) -> usize {
    backend.prompt_overhead() + doc_tokens + query_tokens
}

/// Runs one forward pass over the whole document and returns the
/// cross-attention block together with the alignment of the tokenization
/// that produced it.
///
/// The window limit is enforced only under [`Strategy::None`]; the other
/// strategies go through [`crate::attnscore::score_long_document`], which
/// never asks for more than a window's worth of tokens at once.
pub fn forward_with_attention(
    backend: &dyn AttentionBackend,
    doc: &SegmentedDocument,
    query: &str,
    layers: &[usize],
    strategy: Strategy,
) -> Result<(AttentionTensor, TokenAlignment)> {
    check_layers(backend, layers)?;
    let tokenizer = backend.tokenizer();
    let doc_tokens = tokenizer.tokenize(&doc.raw_text);
    let query_len = tokenizer.count(query);
    if query_len == 0 {
        return Err(Error::ShapeMismatch("query has no tokens".into()));
    }
    let total = prompt_tokens(backend, doc_tokens.len(), query_len);
    if strategy == Strategy::None && total > backend.window_limit() {
        return Err(Error::ContextOverflow {
            tokens: total,
            window: backend.window_limit(),
        });
    }
    let alignment = align_with_tokens(doc, &doc_tokens, query_len, tokenizer.id())?;
    let tensor = backend.cross_attention(&doc.raw_text, query, layers, KeySet::All)?;
    expect_shape(
        &tensor,
        layers,
        backend.num_heads(),
        doc_tokens.len(),
        query_len,
    )?;
    Ok((tensor, alignment))
}

pub(crate) fn expect_shape(
    tensor: &AttentionTensor,
    layers: &[usize],
    heads: usize,
    doc_len: usize,
    query_len: usize,
) -> Result<()> {
    if tensor.layer_ids() != layers || tensor.shape() != [layers.len(), heads, doc_len, query_len] {
        return Err(Error::backend(format!(
            "backend returned shape {:?} for layers {:?}, expected {:?} for layers {:?}",
            tensor.shape(),
            tensor.layer_ids(),
            [layers.len(), heads, doc_len, query_len],
            layers
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::lexical::{LexicalAttention, LexicalEmbedder};
    use super::*;
    use crate::corpus::{segment_document, SegmentationConfig};

    #[test]
    fn shape_contract() {
        let backend = LexicalAttention::builder().layers(4).heads(4).build();
        // 10 document tokens, 3 query tokens
        let doc = segment_document("a b c d e f g h i j", &SegmentationConfig::default()).unwrap();
        let (tensor, align) =
            forward_with_attention(&backend, &doc, "x y z", &[1, 3], Strategy::None).unwrap();
        assert_eq!(tensor.shape(), [2, 4, 10, 3]);
        assert_eq!(tensor.layer_ids(), &[1, 3]);
        assert_eq!(align.doc_token_count, 10);
        assert_eq!(align.query_token_count, 3);
    }

    #[test]
    fn overflow_only_without_a_strategy() {
        let backend = LexicalAttention::builder()
            .layers(2)
            .heads(2)
            .window(64)
            .build();
        let text = "word ".repeat(100);
        let doc = segment_document(&text, &SegmentationConfig::default()).unwrap();
        let err = forward_with_attention(&backend, &doc, "word", &[0], Strategy::None).unwrap_err();
        assert!(matches!(err, Error::ContextOverflow { window: 64, .. }));
        assert!(forward_with_attention(&backend, &doc, "word", &[0], Strategy::Chunked).is_ok());
    }

    #[test]
    fn invalid_layers_and_empty_query() {
        let backend = LexicalAttention::builder().layers(2).heads(2).build();
        let doc = segment_document("One. Two.", &SegmentationConfig::default()).unwrap();
        assert!(matches!(
            forward_with_attention(&backend, &doc, "q", &[2], Strategy::None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            forward_with_attention(&backend, &doc, "q", &[], Strategy::None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            forward_with_attention(&backend, &doc, "  ", &[0], Strategy::None),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn repeated_calls_are_identical() {
        let backend = LexicalAttention::builder().build();
        let doc = segment_document(
            "Chicago burned in 1871. It was rebuilt.",
            &SegmentationConfig::default(),
        )
        .unwrap();
        let a = forward_with_attention(
            &backend,
            &doc,
            "When did Chicago burn?",
            &[0, 5],
            Strategy::None,
        )
        .unwrap();
        let b = forward_with_attention(
            &backend,
            &doc,
            "When did Chicago burn?",
            &[0, 5],
            Strategy::None,
        )
        .unwrap();
        assert_eq!(a, b);

        let emb = LexicalEmbedder::default();
        let v = emb.embed(&["x", "x"]).unwrap();
        assert_eq!(v[0], v[1]);
        let v = emb
            .embed(&["one", "two words", "three more words"])
            .unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|e| e.values.len() == v[0].values.len()));
    }
}
