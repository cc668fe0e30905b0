//! Fixture-replaying backends.
//!
//! A fixture file is JSON:
//!
//! ```json
//! {
//!   "model_id": "scripted",
//!   "num_layers": 24,
//!   "num_heads": 4,
//!   "window_limit": 8192,
//!   "fail": false,
//!   "attention": [
//!     {"document": "...", "query": "...",
//!      "tensor": {"layer_ids": [0, 1], "values": [[[[0.1, ...]]]]}}
//!   ],
//!   "embeddings": {"model_id": "scripted-emb", "vectors": [{"text": "...", "values": [1.0, 0.0]}]}
//! }
//! ```
//!
//! Tensors are indexed by the [`WordTokenizer`] tokenization of the
//! document and query. A request for a token-aligned substring of a fixture
//! document returns the matching slice of the stored tensor, so segment-wise
//! scoring sees exactly the global weights.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AttentionBackend, AttentionTensor, EmbeddingBackend, EmbeddingVector, KeySet, PromptTemplate,
};
use crate::error::{Error, Result};
use crate::tokenize::{Token, Tokenizer, WordTokenizer};

fn default_model_id() -> String {
    "scripted".into()
}

fn default_window() -> usize {
    8192
}

fn empty_template() -> PromptTemplate {
    PromptTemplate {
        preamble: String::new(),
        separator: String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionFixture {
    pub document: String,
    pub query: String,
    pub tensor: AttentionTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFixture {
    pub text: String,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFixture {
    #[serde(default = "default_model_id")]
    pub model_id: String,
    pub vectors: Vec<VectorFixture>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedFixture {
    #[serde(default = "default_model_id")]
    pub model_id: String,
    /// Defaults to one past the largest layer id present.
    #[serde(default)]
    pub num_layers: Option<usize>,
    #[serde(default)]
    pub num_heads: Option<usize>,
    #[serde(default = "default_window")]
    pub window_limit: usize,
    #[serde(default = "empty_template")]
    pub template: PromptTemplate,
    /// Every call fails with a backend error; used to test error paths.
    #[serde(default)]
    pub fail: bool,
    #[serde(default)]
    pub attention: Vec<AttentionFixture>,
    #[serde(default)]
    pub embeddings: Option<EmbeddingFixture>,
}

impl ScriptedFixture {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("fixture {}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).expect("fixture serialization cannot fail");
        std::fs::write(path, json).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn attention_backend(&self) -> Result<ScriptedAttention> {
        ScriptedAttention::new(self.clone())
    }

    pub fn embedding_backend(&self) -> Result<ScriptedEmbedder> {
        let emb = self
            .embeddings
            .as_ref()
            .ok_or_else(|| Error::Config("fixture has no \"embeddings\" block".into()))?;
        Ok(ScriptedEmbedder {
            model_id: emb.model_id.clone(),
            vectors: emb
                .vectors
                .iter()
                .map(|v| (v.text.clone(), v.values.clone()))
                .collect(),
            fail: self.fail,
        })
    }
}

struct Entry {
    fixture: AttentionFixture,
    tokens: Vec<Token>,
}

pub struct ScriptedAttention {
    model_id: String,
    num_layers: usize,
    num_heads: usize,
    window_limit: usize,
    template: PromptTemplate,
    fail: bool,
    entries: Vec<Entry>,
}

impl ScriptedAttention {
    pub fn new(fixture: ScriptedFixture) -> Result<Self> {
        let tok = WordTokenizer;
        let mut heads = fixture.num_heads;
        let mut max_layer = 0;
        let mut entries = Vec::with_capacity(fixture.attention.len());
        for (i, entry) in fixture.attention.into_iter().enumerate() {
            let tokens = tok.tokenize(&entry.document);
            let [_, h, t_d, t_q] = entry.tensor.shape();
            let q = tok.count(&entry.query);
            if t_d != tokens.len() || t_q != q {
                return Err(Error::Config(format!(
                    "attention fixture {i}: tensor covers {t_d}x{t_q} tokens but text tokenizes to {}x{q}",
                    tokens.len()
                )));
            }
            if *heads.get_or_insert(h) != h {
                return Err(Error::Config(format!(
                    "attention fixture {i}: head count {h} differs from {heads:?}"
                )));
            }
            max_layer =
                max_layer.max(entry.tensor.layer_ids().iter().copied().max().unwrap_or(0) + 1);
            entries.push(Entry {
                fixture: entry,
                tokens,
            });
        }
        Ok(ScriptedAttention {
            model_id: fixture.model_id,
            num_layers: fixture.num_layers.unwrap_or(max_layer),
            num_heads: heads.unwrap_or(1),
            window_limit: fixture.window_limit,
            template: fixture.template,
            fail: fixture.fail,
            entries,
        })
    }

    /// Locates `document` as a token-aligned substring of a stored fixture
    /// for `query`; returns the entry and the token offset.
    fn locate(&self, document: &str, query: &str) -> Option<(&Entry, usize, usize)> {
        let n = WordTokenizer.count(document);
        self.entries
            .iter()
            .filter(|e| e.fixture.query == query)
            .find_map(|e| {
                if e.fixture.document == document {
                    return Some((e, 0, n));
                }
                e.fixture
                    .document
                    .match_indices(document)
                    .find_map(|(pos, _)| {
                        let first = e.tokens.partition_point(|t| t.start < pos);
                        let aligned = e.tokens.get(first).is_some_and(|t| t.start == pos)
                            && first + n <= e.tokens.len()
                            && n > 0
                            && e.tokens[first + n - 1].end == pos + document.len();
                        aligned.then_some((e, first, n))
                    })
            })
    }
}

impl AttentionBackend for ScriptedAttention {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn num_layers(&self) -> usize {
        self.num_layers
    }

    fn num_heads(&self) -> usize {
        self.num_heads
    }

    fn window_limit(&self) -> usize {
        self.window_limit
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
        if self.fail {
            return Err(Error::backend("scripted backend configured to fail"));
        }
        let (entry, first, n) = self.locate(document, query).ok_or_else(|| {
            Error::backend(format!(
                "no scripted attention for query {query:?} over the given document"
            ))
        })?;
        let tensor = entry
            .fixture
            .tensor
            .select_layers(layers)
            .map_err(|e| Error::backend(e.to_string()))?;
        let full = first == 0 && n == tensor.doc_len();
        match keys {
            KeySet::All if full => Ok(tensor),
            KeySet::All => tensor.slice_tokens(first..first + n),
            KeySet::Subset(idx) => {
                let global: Vec<usize> = idx.iter().map(|&t| t + first).collect();
                if idx.iter().any(|&t| t >= n) {
                    return Err(Error::backend("key subset outside the requested document"));
                }
                tensor.gather_tokens(&global)
            }
        }
    }
}

pub struct ScriptedEmbedder {
    model_id: String,
    vectors: HashMap<String, Vec<f32>>,
    fail: bool,
}

impl ScriptedEmbedder {
    pub fn from_pairs(
        model_id: impl Into<String>,
        pairs: impl IntoIterator<Item = (String, Vec<f32>)>,
    ) -> Self {
        ScriptedEmbedder {
            model_id: model_id.into(),
            vectors: pairs.into_iter().collect(),
            fail: false,
        }
    }
}

impl EmbeddingBackend for ScriptedEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        if self.fail {
            return Err(Error::backend("scripted backend configured to fail"));
        }
        texts
            .iter()
            .map(|t| {
                self.vectors
                    .get(*t)
                    .map(|v| EmbeddingVector {
                        values: v.clone(),
                        model_id: self.model_id.clone(),
                    })
                    .ok_or_else(|| Error::backend(format!("no scripted embedding for {t:?}")))
            })
            .collect()
    }
}
