//! Entity mentions, the entity → sentence → paragraph index, and entity
//! relevance derived from sentence scores.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::attnscore::{ScoreKind, ScoreSheet};
use crate::corpus::{SegmentedDocument, Span};
use crate::error::{Error, Result};

/// A recognized mention, with its span relative to the text passed to
/// [`Recognizer::recognize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub text: String,
    pub span: Span,
    pub label: String,
}

pub trait Recognizer {
    fn recognize(&self, text: &str) -> Vec<Mention>;
}

impl<T: Recognizer + ?Sized> Recognizer for Box<T> {
    fn recognize(&self, text: &str) -> Vec<Mention> {
        (**self).recognize(text)
    }
}

/// Rule-based recognizer: maximal runs of capitalized words (or words with
/// digits) joined by single spaces. Leading function words such as "The" or
/// "In" are dropped from a run.
#[derive(Debug, Clone, Default)]
pub struct CapitalizedSpanRecognizer;

const LEADING_FUNCTION_WORDS: &[&str] = &[
    "A", "After", "An", "And", "As", "At", "But", "By", "During", "For", "From", "He", "Her",
    "His", "How", "I", "If", "In", "It", "Its", "Of", "On", "Or", "She", "So", "The", "Their",
    "Then", "There", "These", "They", "This", "To", "We", "What", "When", "Where", "Which",
    "While", "Who", "Why", "With",
];

impl Recognizer for CapitalizedSpanRecognizer {
    fn recognize(&self, text: &str) -> Vec<Mention> {
        let mut words: Vec<(usize, usize)> = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            let part = c.is_alphanumeric() || c == '-' || c == '\'';
            match (part, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    words.push((s, i));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            words.push((s, text.len()));
        }

        let is_name = |w: &str| {
            let mut chars = w.chars();
            chars.next().is_some_and(|c| c.is_uppercase())
                && LEADING_FUNCTION_WORDS.binary_search(&w).is_err()
        };
        let mut mentions = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let (s, e) = words[i];
            if !is_name(&text[s..e]) {
                i += 1;
                continue;
            }
            let mut end = e;
            let mut j = i + 1;
            while j < words.len() && &text[end..words[j].0] == " " {
                let w = &text[words[j].0..words[j].1];
                if !w
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit())
                {
                    break;
                }
                end = words[j].1;
                j += 1;
            }
            mentions.push(Mention {
                text: text[s..end].to_string(),
                span: Span::new(s, end),
                label: "NAME".into(),
            });
            i = j;
        }
        mentions
    }
}

pub fn canonicalize(surface: &str) -> String {
    surface
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub type EntityId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub sentence: usize,
    /// Span into the document's raw text.
    pub char_span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub canonical: String,
    pub mentions: Vec<EntityMention>,
}

impl Entity {
    pub fn sentences(&self) -> BTreeSet<usize> {
        self.mentions.iter().map(|m| m.sentence).collect()
    }
}

/// Entities in order of first mention. Entity ids are positions in
/// `entities`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityIndex {
    pub entities: Vec<Entity>,
    pub sentence_to_entities: BTreeMap<usize, BTreeSet<EntityId>>,
    pub paragraph_to_entities: BTreeMap<usize, BTreeSet<EntityId>>,
}

impl EntityIndex {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn find(&self, canonical: &str) -> Option<EntityId> {
        self.entities.iter().position(|e| e.canonical == canonical)
    }

    /// Paragraphs containing at least one mention of the entity.
    pub fn paragraphs_of(&self, entity: EntityId) -> impl Iterator<Item = usize> + '_ {
        self.paragraph_to_entities
            .iter()
            .filter(move |(_, ents)| ents.contains(&entity))
            .map(|(&p, _)| p)
    }

    /// Builds an index from (canonical form, sentence, raw-text span)
    /// triples, deriving both maps from the document structure.
    pub fn from_mentions(
        doc: &SegmentedDocument,
        mentions: impl IntoIterator<Item = (String, EntityMention)>,
    ) -> Result<Self> {
        let mut index = EntityIndex::default();
        let mut ids: HashMap<String, EntityId> = HashMap::new();
        for (canonical, mention) in mentions {
            let sentence = doc.sentences.get(mention.sentence).ok_or_else(|| {
                Error::ShapeMismatch(format!("mention in missing sentence {}", mention.sentence))
            })?;
            let id = *ids.entry(canonical.clone()).or_insert_with(|| {
                index.entities.push(Entity {
                    canonical,
                    mentions: Vec::new(),
                });
                index.entities.len() - 1
            });
            index
                .sentence_to_entities
                .entry(sentence.index)
                .or_default()
                .insert(id);
            index
                .paragraph_to_entities
                .entry(sentence.paragraph_index)
                .or_default()
                .insert(id);
            index.entities[id].mentions.push(mention);
        }
        Ok(index)
    }
}

pub fn extract_entities(doc: &SegmentedDocument, recognizer: &dyn Recognizer) -> EntityIndex {
    let mentions = doc.sentences.iter().flat_map(|s| {
        let offset = s.char_span.start;
        recognizer
            .recognize(doc.sentence_text(s.index))
            .into_iter()
            .filter(|m| m.span.end <= s.char_span.len() && m.span.start < m.span.end)
            .filter_map(move |m| {
                let canonical = canonicalize(&m.text);
                (!canonical.is_empty()).then(|| {
                    (
                        canonical,
                        EntityMention {
                            sentence: s.index,
                            char_span: Span::new(offset + m.span.start, offset + m.span.end),
                        },
                    )
                })
            })
    });
    EntityIndex::from_mentions(doc, mentions.collect::<Vec<_>>())
        .expect("recognized mentions reference existing sentences")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityScores {
    pub kind: ScoreKind,
    /// Indexed by entity id.
    pub scores: Vec<f64>,
}

/// Each entity scores the mean of the sheet's scores over the distinct
/// sentences that mention it.
pub fn entity_scores(index: &EntityIndex, sheet: &ScoreSheet) -> EntityScores {
    let scores = index
        .entities
        .iter()
        .map(|e| {
            let sentences = e.sentences();
            sentences.iter().map(|&s| sheet.scores()[s]).sum::<f64>() / sentences.len() as f64
        })
        .collect();
    EntityScores {
        kind: sheet.kind(),
        scores,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{segment_document, SegmentationConfig};

    fn index(text: &str) -> (SegmentedDocument, EntityIndex) {
        let doc = segment_document(text, &SegmentationConfig::default()).unwrap();
        let idx = extract_entities(&doc, &CapitalizedSpanRecognizer);
        (doc, idx)
    }

    #[test]
    fn function_words_are_sorted() {
        assert!(LEADING_FUNCTION_WORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn repeated_entity_across_sentences() {
        let (doc, idx) = index("Chicago grew. Chicago burned.");
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.entities[0].canonical, "chicago");
        assert_eq!(idx.entities[0].mentions.len(), 2);
        assert_eq!(idx.entities[0].sentences(), BTreeSet::from([0, 1]));
        let m = &idx.entities[0].mentions[1];
        assert_eq!(&doc.raw_text[m.char_span.start..m.char_span.end], "Chicago");
    }

    #[test]
    fn lowercase_text_has_no_entities() {
        let (_, idx) = index("the river rose. then it fell.");
        assert!(idx.is_empty());
        assert!(idx.paragraph_to_entities.is_empty());
    }

    #[test]
    fn multiword_names_and_function_words() {
        let r = CapitalizedSpanRecognizer;
        let got: Vec<String> = r
            .recognize("The Great Fire hit New York in 1871 while Mary slept.")
            .into_iter()
            .map(|m| m.text)
            .collect();
        assert_eq!(got, ["Great Fire", "New York", "Mary"]);
    }

    #[test]
    fn entity_in_two_paragraphs() {
        let (_, idx) = index("Oslo is north.\n\nWe like Oslo.\n\nnothing here.");
        let id = idx.find("oslo").unwrap();
        assert_eq!(idx.paragraphs_of(id).collect::<Vec<_>>(), vec![0, 1]);
        assert!(!idx.paragraph_to_entities.contains_key(&2));
    }

    #[test]
    fn mean_over_distinct_sentences() {
        let (doc, idx) = index("Paris is big. Paris and Paris again. Lyon too.");
        assert_eq!(doc.sentence_count(), 3);
        let sheet = ScoreSheet::attention(vec![0], vec![0.2, 0.4, 0.9]);
        let s = entity_scores(&idx, &sheet);
        assert!((s.scores[idx.find("paris").unwrap()] - 0.3).abs() < 1e-12);
        assert_eq!(s.scores[idx.find("lyon").unwrap()], 0.9);
        assert_eq!(s.kind, ScoreKind::Attention);
    }

    #[test]
    fn index_json_round_trip() {
        let (_, idx) = index("Rome fell. Rome rose.\n\nAthens waited.");
        let json = serde_json::to_string(&idx).unwrap();
        assert_eq!(serde_json::from_str::<EntityIndex>(&json).unwrap(), idx);
    }
}
