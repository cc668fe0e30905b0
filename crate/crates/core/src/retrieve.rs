//! Two-view selection and entity-based paragraph expansion.
//!
//! Attention and embedding scores are never mixed numerically. With a
//! budget of `k`, the attention view picks its top `ceil(k/2)` sentences
//! and entities, the embedding view its top `floor(k/2)`, and the union of
//! the picks is expanded to paragraphs: each picked sentence contributes
//! its own paragraph, each picked entity every paragraph that mentions it.

use crate::clock::Stopwatch;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::attnscore::{score_long_document, LongContextConfig, ScoreSheet};
use crate::backend::{AttentionBackend, EmbeddingBackend};
use crate::corpus::{RetrievalSample, SegmentedDocument};
use crate::embscore::sentence_embedding_scores;
use crate::entity::{
    entity_scores, extract_entities, EntityId, EntityIndex, EntityScores, Recognizer,
};
use crate::error::{Error, Result};
use crate::rank::rank_descending;

/// Which scoring views take part in selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewMode {
    #[default]
    Both,
    AttnOnly,
    EmbOnly,
}

/// Picks per view and category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quotas {
    pub attention: usize,
    pub embedding: usize,
}

impl Quotas {
    /// `(ceil(k/2), floor(k/2))`.
    pub fn split(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidK(k));
        }
        Ok(Quotas {
            attention: k.div_ceil(2),
            embedding: k / 2,
        })
    }

    /// Under a single-view ablation the disabled view's quota moves to the
    /// active one, so each category still gets `k` picks.
    pub fn for_view(k: usize, view: ViewMode) -> Result<Self> {
        let both = Quotas::split(k)?;
        Ok(match view {
            ViewMode::Both => both,
            ViewMode::AttnOnly => Quotas {
                attention: k,
                embedding: 0,
            },
            ViewMode::EmbOnly => Quotas {
                attention: 0,
                embedding: k,
            },
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewPicks {
    /// Best first.
    pub sentences: Vec<usize>,
    /// Entity ids, best first.
    pub entities: Vec<EntityId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerViewPicks {
    pub attention: ViewPicks,
    pub embedding: ViewPicks,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Selection {
    pub sentences: BTreeSet<usize>,
    pub entities: BTreeSet<EntityId>,
    pub picks: PerViewPicks,
}

/// Scores of one view: per sentence, and optionally per entity.
#[derive(Debug, Clone, Copy)]
pub struct ViewScores<'a> {
    pub sentences: &'a ScoreSheet,
    pub entities: Option<&'a EntityScores>,
}

fn top_entities(index: &EntityIndex, scores: &EntityScores, n: usize) -> Vec<EntityId> {
    let mut ids: Vec<EntityId> = (0..index.len()).collect();
    ids.sort_by(|&a, &b| {
        scores.scores[b].total_cmp(&scores.scores[a]).then_with(|| {
            index.entities[a]
                .canonical
                .cmp(&index.entities[b].canonical)
        })
    });
    ids.truncate(n);
    ids
}

fn view<'a>(
    sheet: &'a Option<ScoreSheet>,
    entities: &'a Option<EntityScores>,
) -> Option<ViewScores<'a>> {
    sheet.as_ref().map(|sentences| ViewScores {
        sentences,
        entities: entities.as_ref(),
    })
}

fn pick(view: Option<ViewScores<'_>>, index: &EntityIndex, quota: usize) -> ViewPicks {
    let Some(view) = view else {
        return ViewPicks::default();
    };
    let mut sentences = rank_descending(view.sentences.scores());
    sentences.truncate(quota);
    let entities = view
        .entities
        .map(|e| top_entities(index, e, quota))
        .unwrap_or_default();
    ViewPicks {
        sentences,
        entities,
    }
}

/// Rank-based selection with explicit quotas. A view passed as `None`
/// contributes nothing; a view without entity scores picks sentences only.
pub fn select_with_quotas(
    attention: Option<ViewScores<'_>>,
    embedding: Option<ViewScores<'_>>,
    index: &EntityIndex,
    quotas: Quotas,
) -> Result<Selection> {
    for v in attention.iter().chain(embedding.iter()) {
        if let Some(e) = v.entities {
            if e.scores.len() != index.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} entity scores for {} entities",
                    e.scores.len(),
                    index.len()
                )));
            }
        }
    }
    if let (Some(a), Some(e)) = (attention, embedding) {
        if a.sentences.len() != e.sentences.len() {
            return Err(Error::ShapeMismatch(
                "score sheets cover different sentence counts".into(),
            ));
        }
    }
    let picks = PerViewPicks {
        attention: pick(attention, index, quotas.attention),
        embedding: pick(embedding, index, quotas.embedding),
    };
    Ok(Selection {
        sentences: picks
            .attention
            .sentences
            .iter()
            .chain(&picks.embedding.sentences)
            .copied()
            .collect(),
        entities: picks
            .attention
            .entities
            .iter()
            .chain(&picks.embedding.entities)
            .copied()
            .collect(),
        picks,
    })
}

pub fn select_topk(
    attn: &ScoreSheet,
    emb: &ScoreSheet,
    ent_attn: &EntityScores,
    ent_emb: &EntityScores,
    index: &EntityIndex,
    k: usize,
) -> Result<Selection> {
    select_with_quotas(
        Some(ViewScores {
            sentences: attn,
            entities: Some(ent_attn),
        }),
        Some(ViewScores {
            sentences: emb,
            entities: Some(ent_emb),
        }),
        index,
        Quotas::split(k)?,
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalResult {
    pub selected_sentences: BTreeSet<usize>,
    pub selected_entities: BTreeSet<EntityId>,
    /// Document order, no duplicates.
    pub paragraphs: Vec<usize>,
    pub per_view_picks: PerViewPicks,
    pub k: usize,
}

impl RetrievalResult {
    /// The JSON object printed by the `retrieve` command.
    pub fn to_json(&self, index: &EntityIndex) -> serde_json::Value {
        let names = |ids: &mut dyn Iterator<Item = &EntityId>| -> Vec<String> {
            ids.map(|&e| index.entities[e].canonical.clone()).collect()
        };
        let view = |v: &ViewPicks| {
            serde_json::json!({
                "sentences": v.sentences,
                "entities": names(&mut v.entities.iter()),
            })
        };
        serde_json::json!({
            "paragraphs": self.paragraphs,
            "sentences": self.selected_sentences,
            "entities": names(&mut self.selected_entities.iter()),
            "views": {
                "attention": view(&self.per_view_picks.attention),
                "embedding": view(&self.per_view_picks.embedding),
            },
            "k": self.k,
        })
    }
}

pub fn expand_to_paragraphs(
    selection: &Selection,
    doc: &SegmentedDocument,
    index: &EntityIndex,
    k: usize,
) -> RetrievalResult {
    let mut paragraphs: BTreeSet<usize> = selection
        .sentences
        .iter()
        .map(|&s| doc.paragraph_of(s))
        .collect();
    for &e in &selection.entities {
        paragraphs.extend(index.paragraphs_of(e));
    }
    RetrievalResult {
        selected_sentences: selection.sentences.clone(),
        selected_entities: selection.entities.clone(),
        paragraphs: paragraphs.into_iter().collect(),
        per_view_picks: selection.picks.clone(),
        k,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSettings {
    pub layers: Vec<usize>,
    pub k: usize,
    pub view: ViewMode,
    pub entity_expansion: bool,
    pub embed_batch_size: usize,
    pub long_context: LongContextConfig,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        RetrievalSettings {
            layers: Vec::new(),
            k: 3,
            view: ViewMode::Both,
            entity_expansion: true,
            embed_batch_size: 32,
            long_context: LongContextConfig::default(),
        }
    }
}

/// Everything computed on the way to a result.
#[derive(Debug, Clone)]
pub struct RetrievalTrace {
    pub attention: Option<ScoreSheet>,
    pub embedding: Option<ScoreSheet>,
    pub index: EntityIndex,
    pub entity_attention: Option<EntityScores>,
    pub entity_embedding: Option<EntityScores>,
    pub result: RetrievalResult,
    pub seconds: f64,
}

/// The full pipeline: attention and embedding scoring, entity indexing,
/// two-view selection and paragraph expansion.
pub struct Retriever {
    pub attention: Box<dyn AttentionBackend>,
    pub embedding: Box<dyn EmbeddingBackend>,
    pub recognizer: Box<dyn Recognizer>,
    pub settings: RetrievalSettings,
}

impl Retriever {
    pub fn retrieve(&self, sample: &RetrievalSample) -> Result<RetrievalResult> {
        self.retrieve_k(sample, self.settings.k)
    }

    pub fn retrieve_k(&self, sample: &RetrievalSample, k: usize) -> Result<RetrievalResult> {
        Ok(self.trace(&sample.document, &sample.query, k)?.result)
    }

    pub fn trace(&self, doc: &SegmentedDocument, query: &str, k: usize) -> Result<RetrievalTrace> {
        let started = Stopwatch::start();
        let s = &self.settings;
        let quotas = Quotas::for_view(k, s.view)?;
        let attention = if quotas.attention > 0 {
            Some(score_long_document(
                &*self.attention,
                doc,
                query,
                &s.layers,
                &s.long_context,
            )?)
        } else {
            None
        };
        let embedding = if quotas.embedding > 0 {
            Some(sentence_embedding_scores(
                doc,
                query,
                &*self.embedding,
                s.embed_batch_size,
            )?)
        } else {
            None
        };
        let index = if s.entity_expansion {
            extract_entities(doc, &*self.recognizer)
        } else {
            EntityIndex::default()
        };
        let ent = |sheet: &Option<ScoreSheet>| {
            sheet
                .as_ref()
                .filter(|_| s.entity_expansion)
                .map(|sh| entity_scores(&index, sh))
        };
        let (entity_attention, entity_embedding) = (ent(&attention), ent(&embedding));
        let selection = select_with_quotas(
            view(&attention, &entity_attention),
            view(&embedding, &entity_embedding),
            &index,
            quotas,
        )?;
        let result = expand_to_paragraphs(&selection, doc, &index, k);
        Ok(RetrievalTrace {
            attention,
            embedding,
            index,
            entity_attention,
            entity_embedding,
            result,
            seconds: started.seconds(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attnscore::ScoreKind;
    use crate::corpus::{segment_document, SegmentationConfig};
    use crate::entity::CapitalizedSpanRecognizer;

    fn att(scores: &[f64]) -> ScoreSheet {
        ScoreSheet::attention(vec![0], scores.to_vec())
    }

    fn emb(scores: &[f64]) -> ScoreSheet {
        ScoreSheet::embedding("m", scores.to_vec())
    }

    fn none(kind: ScoreKind) -> EntityScores {
        EntityScores {
            kind,
            scores: vec![],
        }
    }

    #[test]
    fn quota_split() {
        assert_eq!(
            Quotas::split(3).unwrap(),
            Quotas {
                attention: 2,
                embedding: 1
            }
        );
        assert_eq!(
            Quotas::split(1).unwrap(),
            Quotas {
                attention: 1,
                embedding: 0
            }
        );
        assert_eq!(
            Quotas::split(4).unwrap(),
            Quotas {
                attention: 2,
                embedding: 2
            }
        );
        assert!(matches!(Quotas::split(0), Err(Error::InvalidK(0))));
        assert_eq!(
            Quotas::for_view(3, ViewMode::EmbOnly).unwrap(),
            Quotas {
                attention: 0,
                embedding: 3
            }
        );
        assert_eq!(
            Quotas::for_view(3, ViewMode::AttnOnly).unwrap(),
            Quotas {
                attention: 3,
                embedding: 0
            }
        );
    }

    #[test]
    fn k3_takes_two_attention_and_one_embedding_pick() {
        let index = EntityIndex::default();
        let sel = select_topk(
            &att(&[0.1, 0.9, 0.5, 0.2]),
            &emb(&[0.3, 0.1, 0.0, 0.8]),
            &none(ScoreKind::Attention),
            &none(ScoreKind::Embedding),
            &index,
            3,
        )
        .unwrap();
        assert_eq!(sel.picks.attention.sentences, vec![1, 2]);
        assert_eq!(sel.picks.embedding.sentences, vec![3]);
        assert_eq!(sel.sentences, BTreeSet::from([1, 2, 3]));
    }

    #[test]
    fn coinciding_views_shrink_the_union() {
        let index = EntityIndex::default();
        let sel = select_topk(
            &att(&[0.9, 0.1, 0.5]),
            &emb(&[0.8, 0.2, 0.1]),
            &none(ScoreKind::Attention),
            &none(ScoreKind::Embedding),
            &index,
            2,
        )
        .unwrap();
        assert_eq!(sel.picks.attention.sentences, vec![0]);
        assert_eq!(sel.picks.embedding.sentences, vec![0]);
        assert_eq!(sel.sentences.len(), 1);
    }

    #[test]
    fn entity_ties_break_by_canonical_form() {
        let doc = segment_document(
            "Zeta met Alpha. Beta slept.",
            &SegmentationConfig::default(),
        )
        .unwrap();
        let index = extract_entities(&doc, &CapitalizedSpanRecognizer);
        let scores = EntityScores {
            kind: ScoreKind::Attention,
            scores: index
                .entities
                .iter()
                .map(|e| if e.canonical == "beta" { 0.1 } else { 0.7 })
                .collect(),
        };
        let picks = top_entities(&index, &scores, 2);
        let names: Vec<&str> = picks
            .iter()
            .map(|&e| index.entities[e].canonical.as_str())
            .collect();
        assert_eq!(names, ["alpha", "zeta"]);
    }

    #[test]
    fn expansion_unions_sentence_and_entity_paragraphs() {
        let text = "P zero.\n\nKyoto one.\n\nP two.\n\nP three.\n\nKyoto four. Other.\n\nP five.\n\nP six.\n\nKyoto seven.";
        let doc = segment_document(text, &SegmentationConfig::default()).unwrap();
        let index = extract_entities(&doc, &CapitalizedSpanRecognizer);
        let kyoto = index.find("kyoto").unwrap();
        // sentence 5 ("Other.") is in paragraph 4
        assert_eq!(doc.paragraph_of(5), 4);
        let sel = Selection {
            sentences: BTreeSet::from([5]),
            entities: BTreeSet::from([kyoto]),
            picks: PerViewPicks::default(),
        };
        let result = expand_to_paragraphs(&sel, &doc, &index, 3);
        assert_eq!(result.paragraphs, vec![1, 4, 7]);

        let empty = expand_to_paragraphs(&Selection::default(), &doc, &index, 1);
        assert!(empty.paragraphs.is_empty());
    }

    #[test]
    fn entity_everywhere_covers_every_paragraph() {
        let doc = segment_document(
            "Nile a.\n\nNile b.\n\nNile c.",
            &SegmentationConfig::default(),
        )
        .unwrap();
        let index = extract_entities(&doc, &CapitalizedSpanRecognizer);
        let sel = Selection {
            sentences: BTreeSet::new(),
            entities: BTreeSet::from([0]),
            picks: PerViewPicks::default(),
        };
        assert_eq!(
            expand_to_paragraphs(&sel, &doc, &index, 1).paragraphs,
            vec![0, 1, 2]
        );
    }

    #[test]
    fn result_json_shape() {
        let doc = segment_document("Nile a. b.\n\nc.", &SegmentationConfig::default()).unwrap();
        let index = extract_entities(&doc, &CapitalizedSpanRecognizer);
        let sel = select_with_quotas(
            Some(ViewScores {
                sentences: &att(&[0.1, 0.2, 0.9]),
                entities: None,
            }),
            None,
            &index,
            Quotas::for_view(1, ViewMode::AttnOnly).unwrap(),
        )
        .unwrap();
        let json = expand_to_paragraphs(&sel, &doc, &index, 1).to_json(&index);
        assert_eq!(json["paragraphs"], serde_json::json!([1]));
        assert_eq!(json["sentences"], serde_json::json!([2]));
        assert_eq!(json["k"], 1);
        assert_eq!(
            json["views"]["attention"]["sentences"],
            serde_json::json!([2])
        );
        assert_eq!(
            json["views"]["embedding"]["entities"],
            serde_json::json!([])
        );
    }
}
