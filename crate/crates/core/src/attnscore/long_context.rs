//! Scoring documents that do not fit the model's context window.
//!
//! `Chunked` scores overlapping windows independently and keeps each
//! token's best relevance. `Cascading` streams the document through a
//! bounded, exponentially staged token cache: each step attends over the
//! cached tokens plus the next segment, tokens accumulate the attention
//! mass they receive, and a stage that overflows hands its oldest token to
//! the next stage only when that token's mass exceeds the stage median. The
//! query is finally scored against the surviving tokens; sentences with no
//! surviving token receive the lowest score observed.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{token_relevance, ScoreSheet};
use crate::backend::{
    check_layers, expect_shape, forward_with_attention, prompt_tokens, AttentionBackend, KeySet,
};
use crate::corpus::{align::align_with_tokens, SegmentedDocument, TokenAlignment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    None,
    Chunked,
    Cascading,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Strategy::None),
            "chunked" => Ok(Strategy::Chunked),
            "cascading" => Ok(Strategy::Cascading),
            other => Err(format!(
                "unknown long-context strategy {other:?} (none, chunked, cascading)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongContextConfig {
    pub strategy: Strategy,
    /// Tokens per segment. Chunked default: everything the window leaves
    /// after the query and prompt template. Cascading default: half of that.
    pub segment_length: Option<usize>,
    /// Chunked only. Default: a quarter of the segment length.
    pub overlap: Option<usize>,
    /// Cascading only. Default: the window space left beside one segment.
    pub cache_budget: Option<usize>,
    /// Number of cascading sub-caches.
    pub stages: usize,
}

impl Default for LongContextConfig {
    fn default() -> Self {
        LongContextConfig {
            strategy: Strategy::None,
            segment_length: None,
            overlap: None,
            cache_budget: None,
            stages: 4,
        }
    }
}

impl LongContextConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        LongContextConfig {
            strategy,
            ..Default::default()
        }
    }
}

/// Token ranges of overlapping segments covering `0..doc_len`.
pub fn plan_segments(
    doc_len: usize,
    length: usize,
    overlap: usize,
) -> Result<Vec<std::ops::Range<usize>>> {
    if length == 0 || overlap >= length {
        return Err(Error::Config(format!(
            "segment length {length} must be positive and exceed overlap {overlap}"
        )));
    }
    let step = length - overlap;
    let mut segments = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + length).min(doc_len);
        segments.push(start..end);
        if end >= doc_len {
            return Ok(segments);
        }
        start += step;
    }
}

/// One forward pass over a subset of the document's tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionPass {
    /// Global document token index of each position on the tensor's
    /// document axis, ascending.
    pub tokens: Vec<usize>,
    pub tensor: crate::backend::AttentionTensor,
}

/// Document-side output of the long-context machinery: the token alignment
/// and every attention pass that was run.
#[derive(Debug, Clone)]
pub struct LongContextAttention {
    pub alignment: TokenAlignment,
    pub passes: Vec<AttentionPass>,
}

impl LongContextAttention {
    /// Best relevance seen for each token; `None` for tokens no pass
    /// covered.
    pub fn token_relevance(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.alignment.doc_token_count];
        for pass in &self.passes {
            for (&t, r) in pass.tokens.iter().zip(token_relevance(&pass.tensor)) {
                let slot: &mut Option<f64> = &mut out[t];
                *slot = Some(slot.map_or(r, |v| v.max(r)));
            }
        }
        out
    }
}

/// Runs the attention passes a strategy calls for. A prompt that fits the
/// window, or any prompt under `Strategy::None`, gets exactly one
/// [`forward_with_attention`] pass.
pub fn attention_passes(
    backend: &dyn AttentionBackend,
    doc: &SegmentedDocument,
    query: &str,
    layers: &[usize],
    cfg: &LongContextConfig,
) -> Result<LongContextAttention> {
    check_layers(backend, layers)?;
    let tokenizer = backend.tokenizer();
    let tokens = tokenizer.tokenize(&doc.raw_text);
    let query_len = tokenizer.count(query);
    if cfg.strategy == Strategy::None
        || prompt_tokens(backend, tokens.len(), query_len) <= backend.window_limit()
    {
        let (tensor, alignment) =
            forward_with_attention(backend, doc, query, layers, cfg.strategy)?;
        return Ok(LongContextAttention {
            passes: vec![AttentionPass {
                tokens: (0..alignment.doc_token_count).collect(),
                tensor,
            }],
            alignment,
        });
    }
    let alignment = align_with_tokens(doc, &tokens, query_len, tokenizer.id())?;
    let available = backend
        .window_limit()
        .checked_sub(backend.prompt_overhead() + query_len)
        .filter(|&n| n >= 2)
        .ok_or_else(|| {
            Error::Config("query and prompt template leave no room in the context window".into())
        })?;

    let passes = match cfg.strategy {
        Strategy::None => unreachable!("handled above"),
        Strategy::Chunked => {
            let length = cfg.segment_length.unwrap_or(available);
            let overlap = cfg.overlap.unwrap_or(length / 4);
            plan_segments(tokens.len(), length, overlap)?
                .into_iter()
                .map(|range| {
                    let keys: Vec<usize> = range.collect();
                    let tensor = backend.cross_attention(
                        &doc.raw_text,
                        query,
                        layers,
                        KeySet::Subset(&keys),
                    )?;
                    expect_shape(&tensor, layers, backend.num_heads(), keys.len(), query_len)?;
                    Ok(AttentionPass {
                        tokens: keys,
                        tensor,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        Strategy::Cascading => {
            let length = cfg.segment_length.unwrap_or(available / 2).max(1);
            let budget = cfg
                .cache_budget
                .unwrap_or(available.saturating_sub(length))
                .max(1);
            if budget >= tokens.len() {
                // nothing would be evicted
                let tensor = backend.cross_attention(&doc.raw_text, query, layers, KeySet::All)?;
                expect_shape(
                    &tensor,
                    layers,
                    backend.num_heads(),
                    tokens.len(),
                    query_len,
                )?;
                vec![AttentionPass {
                    tokens: (0..tokens.len()).collect(),
                    tensor,
                }]
            } else {
                vec![cascade(
                    backend,
                    &doc.raw_text,
                    tokens.len(),
                    query,
                    query_len,
                    layers,
                    length,
                    budget,
                    cfg.stages,
                )?]
            }
        }
    };
    Ok(LongContextAttention { alignment, passes })
}

/// Sentence attention scores for a document of any length.
///
/// Sentences none of whose tokens were scored (possible only under
/// `Cascading`) receive the lowest score observed for any other sentence.
pub fn score_long_document(
    backend: &dyn AttentionBackend,
    doc: &SegmentedDocument,
    query: &str,
    layers: &[usize],
    cfg: &LongContextConfig,
) -> Result<ScoreSheet> {
    let attention = attention_passes(backend, doc, query, layers, cfg)?;
    let relevance = attention.token_relevance();
    Ok(ScoreSheet::attention(
        layers.to_vec(),
        sentence_scores(&relevance, &attention.alignment),
    ))
}

fn sentence_scores(relevance: &[Option<f64>], align: &TokenAlignment) -> Vec<f64> {
    let observed: Vec<Option<f64>> = align
        .sentence_token_spans
        .iter()
        .map(|s| {
            relevance[s.first..=s.last]
                .iter()
                .flatten()
                .copied()
                .reduce(f64::max)
        })
        .collect();
    let floor = observed
        .iter()
        .flatten()
        .copied()
        .reduce(f64::min)
        .unwrap_or(0.0);
    observed.into_iter().map(|o| o.unwrap_or(floor)).collect()
}

#[allow(clippy::too_many_arguments)]
fn cascade(
    backend: &dyn AttentionBackend,
    text: &str,
    doc_len: usize,
    query: &str,
    query_len: usize,
    layers: &[usize],
    segment_length: usize,
    budget: usize,
    stages: usize,
) -> Result<AttentionPass> {
    let mut cache = StagedCache::new(budget, stages);
    let mut mass = vec![0.0f64; doc_len];
    let mut start = 0;
    while start < doc_len {
        let end = (start + segment_length).min(doc_len);
        let mut keys = cache.tokens();
        keys.extend(start..end);
        let tensor = backend.cross_attention(text, query, layers, KeySet::Subset(&keys))?;
        expect_shape(&tensor, layers, backend.num_heads(), keys.len(), query_len)?;
        let [l_n, h_n, _, _] = tensor.shape();
        for l in 0..l_n {
            for h in 0..h_n {
                for (row, &token) in tensor.head_block(l, h).chunks(query_len).zip(&keys) {
                    mass[token] += row.iter().map(|&w| w as f64).sum::<f64>();
                }
            }
        }
        for token in start..end {
            cache.push(token, &mass);
        }
        start = end;
    }
    let retained = cache.tokens();
    let tensor = backend.cross_attention(text, query, layers, KeySet::Subset(&retained))?;
    expect_shape(
        &tensor,
        layers,
        backend.num_heads(),
        retained.len(),
        query_len,
    )?;
    Ok(AttentionPass {
        tokens: retained,
        tensor,
    })
}

/// Token cache split into stages of geometrically shrinking capacity.
pub(crate) struct StagedCache {
    stages: Vec<VecDeque<usize>>,
    capacity: Vec<usize>,
}

impl StagedCache {
    pub(crate) fn new(budget: usize, stages: usize) -> Self {
        let stages = stages.clamp(1, budget.max(1));
        let mut capacity = Vec::with_capacity(stages);
        let mut left = budget;
        for i in 0..stages {
            let c = if i + 1 == stages {
                left
            } else {
                (left / 2).max(1)
            };
            capacity.push(c);
            left -= c;
        }
        StagedCache {
            stages: vec![VecDeque::new(); stages],
            capacity,
        }
    }

    #[cfg(test)]
    fn len(&self) -> usize {
        self.stages.iter().map(VecDeque::len).sum()
    }

    /// Retained tokens in document order.
    pub(crate) fn tokens(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.stages.iter().flatten().copied().collect();
        t.sort_unstable();
        t
    }

    pub(crate) fn push(&mut self, token: usize, mass: &[f64]) {
        self.stages[0].push_back(token);
        let last = self.stages.len() - 1;
        for i in 0..self.stages.len() {
            while self.stages[i].len() > self.capacity[i] {
                if i == last {
                    // drop the lowest-mass token, oldest first on ties
                    let (pos, _) = self.stages[i]
                        .iter()
                        .enumerate()
                        .min_by(|a, b| mass[*a.1].total_cmp(&mass[*b.1]).then(a.0.cmp(&b.0)))
                        .expect("stage is non-empty");
                    self.stages[i].remove(pos);
                } else {
                    let median = median(self.stages[i].iter().map(|&t| mass[t]));
                    let oldest = self.stages[i].pop_front().expect("stage is non-empty");
                    if mass[oldest] > median {
                        self.stages[i + 1].push_back(oldest);
                    }
                }
            }
        }
    }
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
