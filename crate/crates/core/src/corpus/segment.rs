use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open byte range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(span: Span) -> Self {
        [span.start, span.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub index: usize,
    pub char_span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub paragraph_index: usize,
    pub char_span: Span,
}

/// Rules for splitting paragraphs into sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Characters that end a sentence when followed by whitespace.
    pub terminators: Vec<char>,
    /// Characters allowed between a terminator and the following whitespace
    /// (closing quotes and brackets).
    pub closers: Vec<char>,
    /// Words (including their trailing period, compared case-insensitively)
    /// that never end a sentence.
    pub abbreviations: Vec<String>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            terminators: vec!['.', '!', '?'],
            closers: vec!['"', '\'', ')', ']', '\u{201d}', '\u{2019}'],
            abbreviations: [
                "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "vs.", "e.g.", "i.e.",
                "cf.", "no.", "fig.", "al.", "approx.", "inc.", "ltd.", "co.", "mt.",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

/// A document split into paragraphs and sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SegmentedDocument {
    pub doc_id: String,
    pub raw_text: String,
    pub paragraphs: Vec<Paragraph>,
    pub sentences: Vec<Sentence>,
}

impl SegmentedDocument {
    /// Builds a document from explicit parts, checking every structural
    /// invariant.
    pub fn from_parts(
        doc_id: impl Into<String>,
        raw_text: impl Into<String>,
        paragraphs: Vec<Paragraph>,
        sentences: Vec<Sentence>,
    ) -> Result<Self> {
        let doc = SegmentedDocument {
            doc_id: doc_id.into(),
            raw_text: raw_text.into(),
            paragraphs,
            sentences,
        };
        doc.validate()?;
        Ok(doc)
    }

    /// Joins pre-split paragraphs with blank lines and segments each one
    /// into sentences, keeping the given paragraph boundaries.
    pub fn from_paragraphs<S: AsRef<str>>(
        doc_id: impl Into<String>,
        paragraphs: &[S],
        rules: &SegmentationConfig,
    ) -> Result<Self> {
        let mut raw_text = String::new();
        let mut spans = Vec::with_capacity(paragraphs.len());
        for (i, para) in paragraphs.iter().enumerate() {
            let text = para.as_ref().trim();
            if text.is_empty() {
                return Err(Error::ShapeMismatch(format!("paragraph {i} is empty")));
            }
            if i > 0 {
                raw_text.push_str("\n\n");
            }
            let start = raw_text.len();
            raw_text.push_str(text);
            spans.push(Span::new(start, raw_text.len()));
        }
        if spans.is_empty() {
            return Err(Error::EmptyDocument);
        }
        Ok(build(doc_id.into(), raw_text, &spans, rules))
    }

    pub fn paragraph_count(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    pub fn paragraph_text(&self, index: usize) -> &str {
        let span = self.paragraphs[index].char_span;
        &self.raw_text[span.start..span.end]
    }

    pub fn sentence_text(&self, index: usize) -> &str {
        let span = self.sentences[index].char_span;
        &self.raw_text[span.start..span.end]
    }

    pub fn paragraph_of(&self, sentence: usize) -> usize {
        self.sentences[sentence].paragraph_index
    }

    pub fn word_count(&self) -> usize {
        self.paragraphs
            .iter()
            .map(|p| {
                self.raw_text[p.char_span.start..p.char_span.end]
                    .split_whitespace()
                    .count()
            })
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| {
            Err(Error::ShapeMismatch(format!(
                "document {}: {msg}",
                self.doc_id
            )))
        };
        let len = self.raw_text.len();
        let mut prev_end = 0;
        for (i, p) in self.paragraphs.iter().enumerate() {
            let s = p.char_span;
            if p.index != i {
                return bad(format!("paragraph index {} at position {i}", p.index));
            }
            if s.start > s.end || s.end > len {
                return bad(format!("paragraph {i} span {s:?} out of bounds"));
            }
            if i > 0 && s.start < prev_end {
                return bad(format!("paragraph {i} overlaps its predecessor"));
            }
            if !self.raw_text.is_char_boundary(s.start) || !self.raw_text.is_char_boundary(s.end) {
                return bad(format!("paragraph {i} span is not on a character boundary"));
            }
            prev_end = s.end;
        }
        let mut prev: Option<&Sentence> = None;
        for (i, sent) in self.sentences.iter().enumerate() {
            if sent.index != i {
                return bad(format!("sentence index {} at position {i}", sent.index));
            }
            let Some(p) = self.paragraphs.get(sent.paragraph_index) else {
                return bad(format!(
                    "sentence {i} references missing paragraph {}",
                    sent.paragraph_index
                ));
            };
            if sent.char_span.is_empty() || !p.char_span.contains(&sent.char_span) {
                return bad(format!("sentence {i} is not inside paragraph {}", p.index));
            }
            if let Some(prev) = prev {
                if sent.char_span.start < prev.char_span.end
                    || sent.paragraph_index < prev.paragraph_index
                {
                    return bad(format!("sentence {i} is out of order"));
                }
            }
            prev = Some(sent);
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for SegmentedDocument {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            doc_id: String,
            raw_text: String,
            paragraphs: Vec<Paragraph>,
            sentences: Vec<Sentence>,
        }
        let raw = Raw::deserialize(deserializer)?;
        SegmentedDocument::from_parts(raw.doc_id, raw.raw_text, raw.paragraphs, raw.sentences)
            .map_err(serde::de::Error::custom)
    }
}

/// Splits raw text into paragraphs at blank lines and paragraphs into
/// sentences at terminal punctuation followed by whitespace.
pub fn segment_document(raw_text: &str, rules: &SegmentationConfig) -> Result<SegmentedDocument> {
    segment_with_id("", raw_text, rules)
}

pub(crate) fn segment_with_id(
    doc_id: &str,
    raw_text: &str,
    rules: &SegmentationConfig,
) -> Result<SegmentedDocument> {
    let spans = paragraph_spans(raw_text);
    if spans.is_empty() {
        return Err(Error::EmptyDocument);
    }
    Ok(build(
        doc_id.to_string(),
        raw_text.to_string(),
        &spans,
        rules,
    ))
}

fn build(
    doc_id: String,
    raw_text: String,
    paragraph_spans: &[Span],
    rules: &SegmentationConfig,
) -> SegmentedDocument {
    let mut paragraphs = Vec::with_capacity(paragraph_spans.len());
    let mut sentences = Vec::new();
    for (pi, &span) in paragraph_spans.iter().enumerate() {
        paragraphs.push(Paragraph {
            index: pi,
            char_span: span,
        });
        for s in sentence_spans(&raw_text, span, rules) {
            sentences.push(Sentence {
                index: sentences.len(),
                paragraph_index: pi,
                char_span: s,
            });
        }
    }
    SegmentedDocument {
        doc_id,
        raw_text,
        paragraphs,
        sentences,
    }
}

/// Trimmed blocks of text separated by one or more whitespace-only lines.
fn paragraph_spans(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut block: Option<Span> = None;
    let mut line_start = 0;
    for line in text.split_inclusive('\n') {
        let content = line.trim();
        if content.is_empty() {
            if let Some(b) = block.take() {
                spans.push(b);
            }
        } else {
            let lead = line.len() - line.trim_start().len();
            let start = line_start + lead;
            let end = line_start + line.trim_end().len();
            block = Some(match block {
                Some(b) => Span::new(b.start, end),
                None => Span::new(start, end),
            });
        }
        line_start += line.len();
    }
    if let Some(b) = block {
        spans.push(b);
    }
    spans
}

fn sentence_spans(text: &str, paragraph: Span, rules: &SegmentationConfig) -> Vec<Span> {
    let body = &text[paragraph.start..paragraph.end];
    let chars: Vec<(usize, char)> = body.char_indices().collect();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let (off, c) = chars[i];
        if start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            start = Some(off);
        }
        if rules.terminators.contains(&c) {
            let mut j = i + 1;
            while j < chars.len()
                && (rules.terminators.contains(&chars[j].1) || rules.closers.contains(&chars[j].1))
            {
                j += 1;
            }
            let at_break = j == chars.len() || chars[j].1.is_whitespace();
            let sentence_start = start.unwrap_or(off);
            if at_break && !ends_with_abbreviation(&body[sentence_start..off + c.len_utf8()], rules)
            {
                let end = if j == chars.len() {
                    body.len()
                } else {
                    chars[j].0
                };
                spans.push(Span::new(
                    paragraph.start + sentence_start,
                    paragraph.start + end,
                ));
                start = None;
            }
            i = j;
            continue;
        }
        i += 1;
    }
    if let Some(s) = start {
        let end = body.trim_end().len();
        spans.push(Span::new(paragraph.start + s, paragraph.start + end));
    }
    spans
}

fn ends_with_abbreviation(sentence_so_far: &str, rules: &SegmentationConfig) -> bool {
    let last_word = sentence_so_far
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("");
    let last_word = last_word.trim_start_matches(|c: char| !c.is_alphanumeric());
    rules
        .abbreviations
        .iter()
        .any(|a| a.eq_ignore_ascii_case(last_word))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(doc: &SegmentedDocument) -> Vec<&str> {
        (0..doc.sentence_count())
            .map(|i| doc.sentence_text(i))
            .collect()
    }

    #[test]
    fn two_paragraphs_three_sentences() {
        let doc = segment_document("A. B.\n\nC.", &SegmentationConfig::default()).unwrap();
        assert_eq!(doc.paragraph_count(), 2);
        assert_eq!(texts(&doc), ["A.", "B.", "C."]);
        assert_eq!(doc.paragraph_of(0), 0);
        assert_eq!(doc.paragraph_of(1), 0);
        assert_eq!(doc.paragraph_of(2), 1);
        assert_eq!(doc.paragraphs[1].char_span, Span::new(7, 9));
    }

    #[test]
    fn single_sentence_covers_text() {
        let doc = segment_document("Hello.", &SegmentationConfig::default()).unwrap();
        assert_eq!(doc.paragraph_count(), 1);
        assert_eq!(doc.sentence_count(), 1);
        assert_eq!(doc.sentences[0].char_span, Span::new(0, 6));
        assert_eq!(doc.paragraphs[0].char_span, Span::new(0, 6));
    }

    #[test]
    fn empty_and_blank_inputs_are_rejected() {
        let rules = SegmentationConfig::default();
        assert!(matches!(
            segment_document("", &rules),
            Err(Error::EmptyDocument)
        ));
        assert!(matches!(
            segment_document(" \n\t\n ", &rules),
            Err(Error::EmptyDocument)
        ));
    }

    #[test]
    fn abbreviations_and_closers() {
        let rules = SegmentationConfig::default();
        let doc =
            segment_document("Dr. Smith arrived. \"Why?\" she asked.  Then left", &rules).unwrap();
        assert_eq!(
            texts(&doc),
            ["Dr. Smith arrived.", "\"Why?\"", "she asked.", "Then left"]
        );
    }

    #[test]
    fn blank_lines_with_whitespace_separate_paragraphs() {
        let doc = segment_document(
            "  One line\nstill one.\n   \n\n Two.\n",
            &SegmentationConfig::default(),
        )
        .unwrap();
        assert_eq!(doc.paragraph_count(), 2);
        assert_eq!(doc.paragraph_text(0), "One line\nstill one.");
        assert_eq!(doc.paragraph_text(1), "Two.");
    }

    #[test]
    fn from_paragraphs_keeps_boundaries() {
        let doc = SegmentedDocument::from_paragraphs(
            "d",
            &["First. Second.", " Third "],
            &SegmentationConfig::default(),
        )
        .unwrap();
        assert_eq!(doc.raw_text, "First. Second.\n\nThird");
        assert_eq!(doc.paragraph_count(), 2);
        assert_eq!(doc.sentence_count(), 3);
        assert!(SegmentedDocument::from_paragraphs(
            "d",
            &["ok", "  "],
            &SegmentationConfig::default()
        )
        .is_err());
    }

    #[test]
    fn from_parts_rejects_sentence_outside_paragraph() {
        let paragraphs = vec![Paragraph {
            index: 0,
            char_span: Span::new(0, 3),
        }];
        let sentences = vec![Sentence {
            index: 0,
            paragraph_index: 0,
            char_span: Span::new(2, 5),
        }];
        assert!(SegmentedDocument::from_parts("x", "abcdef", paragraphs, sentences).is_err());
    }

    #[test]
    fn serde_round_trip_validates() {
        let doc = segment_document("A b. C d.\n\nE.", &SegmentationConfig::default()).unwrap();
        let json = serde_json::to_string(&doc).unwrap();
        let back: SegmentedDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(doc, back);
        let broken = json.replace("\"index\":1", "\"index\":5");
        assert!(serde_json::from_str::<SegmentedDocument>(&broken).is_err());
    }
}
