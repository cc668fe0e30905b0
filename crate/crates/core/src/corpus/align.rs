use serde::{Deserialize, Serialize};

use super::segment::{SegmentedDocument, Span};
use crate::error::{Error, Result};
use crate::tokenize::{Token, Tokenizer};

/// Inclusive token index range `[first, last]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct TokenRange {
    pub first: usize,
    pub last: usize,
}

impl TokenRange {
    pub fn new(first: usize, last: usize) -> Self {
        debug_assert!(first <= last);
        TokenRange { first, last }
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, token: usize) -> bool {
        self.first <= token && token <= self.last
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }
}

impl From<[usize; 2]> for TokenRange {
    fn from([first, last]: [usize; 2]) -> Self {
        TokenRange { first, last }
    }
}

impl From<TokenRange> for [usize; 2] {
    fn from(r: TokenRange) -> Self {
        [r.first, r.last]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAlignment {
    pub tokenizer_id: String,
    pub doc_token_count: usize,
    pub query_token_count: usize,
    pub sentence_token_spans: Vec<TokenRange>,
    pub paragraph_token_spans: Vec<TokenRange>,
}

impl TokenAlignment {
    pub fn validate(&self) -> Result<()> {
        let check = |r: &TokenRange, what: &str, i: usize| {
            if r.first > r.last || r.last >= self.doc_token_count {
                Err(Error::ShapeMismatch(format!(
                    "{what} {i} token span [{}, {}] outside 0..{}",
                    r.first, r.last, self.doc_token_count
                )))
            } else {
                Ok(())
            }
        };
        for (i, r) in self.sentence_token_spans.iter().enumerate() {
            check(r, "sentence", i)?;
        }
        for (i, r) in self.paragraph_token_spans.iter().enumerate() {
            check(r, "paragraph", i)?;
        }
        for (i, w) in self.sentence_token_spans.windows(2).enumerate() {
            if w[1].first < w[0].first || w[1].last < w[0].last {
                return Err(Error::ShapeMismatch(format!(
                    "sentence {} token span out of order",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Maps every sentence and paragraph to the minimal inclusive token range
/// covering its character span. A token straddling a unit boundary belongs
/// to every unit it overlaps.
pub fn align_tokens(
    doc: &SegmentedDocument,
    query: &str,
    tokenizer: &dyn Tokenizer,
) -> Result<TokenAlignment> {
    let doc_tokens = tokenizer.tokenize(&doc.raw_text);
    align_with_tokens(doc, &doc_tokens, tokenizer.count(query), tokenizer.id())
}

pub(crate) fn align_with_tokens(
    doc: &SegmentedDocument,
    doc_tokens: &[Token],
    query_token_count: usize,
    tokenizer_id: &str,
) -> Result<TokenAlignment> {
    let sentence_token_spans = doc
        .sentences
        .iter()
        .map(|s| {
            covering_range(doc_tokens, s.char_span).ok_or(Error::AlignmentGap { sentence: s.index })
        })
        .collect::<Result<Vec<_>>>()?;
    let paragraph_token_spans = doc
        .paragraphs
        .iter()
        .zip(0..)
        .map(|(p, i)| {
            covering_range(doc_tokens, p.char_span).ok_or_else(|| {
                // a paragraph without tokens implies one of its sentences has none
                let sentence = doc
                    .sentences
                    .iter()
                    .find(|s| s.paragraph_index == i)
                    .map_or(0, |s| s.index);
                Error::AlignmentGap { sentence }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TokenAlignment {
        tokenizer_id: tokenizer_id.to_string(),
        doc_token_count: doc_tokens.len(),
        query_token_count,
        sentence_token_spans,
        paragraph_token_spans,
    })
}

fn covering_range(tokens: &[Token], span: Span) -> Option<TokenRange> {
    // tokens ending at or before span.start cannot overlap
    let first = tokens.partition_point(|t| t.end <= span.start);
    let mut last = None;
    for (i, t) in tokens.iter().enumerate().skip(first) {
        if t.start >= span.end {
            break;
        }
        if t.end > span.start {
            last = Some(i);
        }
    }
    last.map(|last| TokenRange::new(first, last))
}
