mod common;

use std::collections::BTreeSet;

use common::*;
use longdoc::attnscore::ScoreSheet;
use longdoc::backend::lexical::{LexicalAttention, LexicalEmbedder};
use longdoc::corpus::{segment_document, SegmentationConfig, SegmentedDocument};
use longdoc::embscore::{cosine, sentence_embedding_scores};
use longdoc::entity::{entity_scores, CapitalizedSpanRecognizer, EntityIndex, EntityMention};
use longdoc::retrieve::{
    expand_to_paragraphs, select_topk, Quotas, RetrievalResult, RetrievalSettings, Retriever,
    ViewMode,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    doc: SegmentedDocument,
    index: EntityIndex,
    attn: ScoreSheet,
    emb: ScoreSheet,
}

/// Scores on a 1/1000 grid so monotone transforms keep every value distinct.
fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let doc = synthetic_document(rng.gen_range(1..8), rng.gen_range(1..4));
    let n = doc.sentence_count();
    let entities: Vec<BTreeSet<usize>> = (0..rng.gen_range(0..6))
        .map(|_| {
            (0..rng.gen_range(1..4))
                .map(|_| rng.gen_range(0..n))
                .collect()
        })
        .collect();
    let index = index_from_sets(&doc, &entities);
    let grid = |rng: &mut ChaCha8Rng| {
        (0..n)
            .map(|_| rng.gen_range(0..1000) as f64 / 1000.0)
            .collect::<Vec<_>>()
    };
    let attn = ScoreSheet::attention(vec![0], grid(&mut rng));
    let emb = ScoreSheet::embedding("m", grid(&mut rng));
    Case {
        doc,
        index,
        attn,
        emb,
    }
}

fn run(case: &Case, attn: &ScoreSheet, emb: &ScoreSheet, k: usize) -> RetrievalResult {
    let ea = entity_scores(&case.index, attn);
    let ee = entity_scores(&case.index, emb);
    let selection = select_topk(attn, emb, &ea, &ee, &case.index, k).unwrap();
    expand_to_paragraphs(&selection, &case.doc, &case.index, k)
}

/// Every selected sentence's paragraph and every paragraph mentioning a
/// selected entity is present, and nothing else is.
fn closure_violations(case: &Case, result: &RetrievalResult) -> usize {
    let mut required = BTreeSet::new();
    for &s in &result.selected_sentences {
        required.insert(case.doc.sentences[s].paragraph_index);
    }
    for &e in &result.selected_entities {
        for m in &case.index.entities[e].mentions {
            required.insert(case.doc.sentences[m.sentence].paragraph_index);
        }
    }
    let got: BTreeSet<usize> = result.paragraphs.iter().copied().collect();
    let sorted = result.paragraphs.windows(2).all(|w| w[0] < w[1]);
    required.symmetric_difference(&got).count() + usize::from(!sorted)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn quotas_split_k(k in 1usize..200) {
        let q = Quotas::split(k).unwrap();
        prop_assert_eq!(q.attention, k.div_ceil(2));
        prop_assert_eq!(q.embedding, k / 2);
        prop_assert_eq!(Quotas::for_view(k, ViewMode::AttnOnly).unwrap(), Quotas { attention: k, embedding: 0 });
        prop_assert_eq!(Quotas::for_view(k, ViewMode::EmbOnly).unwrap(), Quotas { attention: 0, embedding: k });
    }

    #[test]
    fn per_view_picks_respect_quotas(seed in any::<u64>(), k in 1usize..8) {
        let case = random_case(seed);
        let r = run(&case, &case.attn, &case.emb, k);
        let n = case.doc.sentence_count();
        let e = case.index.len();
        prop_assert_eq!(r.per_view_picks.attention.sentences.len(), k.div_ceil(2).min(n));
        prop_assert_eq!(r.per_view_picks.embedding.sentences.len(), (k / 2).min(n));
        prop_assert_eq!(r.per_view_picks.attention.entities.len(), k.div_ceil(2).min(e));
        prop_assert_eq!(r.per_view_picks.embedding.entities.len(), (k / 2).min(e));
    }

    #[test]
    fn results_are_closed(seed in any::<u64>(), k in 1usize..8) {
        let case = random_case(seed);
        let r = run(&case, &case.attn, &case.emb, k);
        prop_assert_eq!(closure_violations(&case, &r), 0);
    }

    #[test]
    fn sentence_picks_ignore_monotone_transforms(seed in any::<u64>(), k in 1usize..8) {
        let case = random_case(seed);
        let base = run(&case, &case.attn, &case.emb, k);
        for f in [|x: f64| x.exp(), |x: f64| x * x * x + x, |x: f64| (x + 0.5).ln()] {
            let r = run(&case, &case.attn.map(f), &case.emb.map(f), k);
            prop_assert_eq!(&r.per_view_picks.attention.sentences, &base.per_view_picks.attention.sentences);
            prop_assert_eq!(&r.per_view_picks.embedding.sentences, &base.per_view_picks.embedding.sentences);
        }
    }

    // Entity scores are means, so only linear rescaling preserves their
    // order; powers of two keep the floating-point means exact as well.
    #[test]
    fn selection_ignores_rescaling(seed in any::<u64>(), k in 1usize..8) {
        let case = random_case(seed);
        let base = run(&case, &case.attn, &case.emb, k);
        let r = run(&case, &case.attn.map(|x| 4.0 * x), &case.emb.map(|x| 0.5 * x), k);
        prop_assert_eq!(r, base);
    }

    #[test]
    fn paragraphs_grow_with_k(seed in any::<u64>(), k in 1usize..8) {
        let case = random_case(seed);
        let small: BTreeSet<usize> = run(&case, &case.attn, &case.emb, k).paragraphs.into_iter().collect();
        let large: BTreeSet<usize> = run(&case, &case.attn, &case.emb, k + 1).paragraphs.into_iter().collect();
        prop_assert!(small.is_subset(&large));
    }

    #[test]
    fn entity_scores_are_mention_means(seed in any::<u64>()) {
        let case = random_case(seed);
        let scores = entity_scores(&case.index, &case.attn);
        for (e, entity) in case.index.entities.iter().enumerate() {
            let vals: Vec<f64> = entity.sentences().iter().map(|&s| case.attn.scores()[s]).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= scores.scores[e] + 1e-12 && scores.scores[e] <= hi + 1e-12);
        }
        // repeating a mention inside a sentence does not reweight the mean
        let doubled: Vec<(String, EntityMention)> = case
            .index
            .entities
            .iter()
            .flat_map(|e| e.mentions.iter().chain(e.mentions.iter()).map(move |m| (e.canonical.clone(), m.clone())))
            .collect();
        let index2 = EntityIndex::from_mentions(&case.doc, doubled).unwrap();
        prop_assert_eq!(entity_scores(&index2, &case.attn).scores, scores.scores);
    }

    #[test]
    fn cosine_ignores_positive_scaling(a in proptest::collection::vec(-1.0f32..1.0, 8), b in proptest::collection::vec(-1.0f32..1.0, 8), c in 0.01f32..100.0) {
        let scaled: Vec<f32> = a.iter().map(|x| x * c).collect();
        if let (Some(x), Some(y)) = (cosine(&a, &b), cosine(&scaled, &b)) {
            prop_assert!((x - y).abs() < 1e-5);
            prop_assert!((-1.0..=1.0).contains(&x));
        }
    }
}

#[test]
fn embedding_scores_do_not_depend_on_batch_size() {
    let doc = segment_document(
        "Ada Lovelace wrote notes. The engine was analytical.\n\nBabbage designed it. Nobody built it then. Later a replica ran.",
        &SegmentationConfig::default(),
    )
    .unwrap();
    let backend = LexicalEmbedder::default();
    let reference =
        sentence_embedding_scores(&doc, "who designed the engine", &backend, 64).unwrap();
    for batch in [1, 2, 3] {
        assert_eq!(
            sentence_embedding_scores(&doc, "who designed the engine", &backend, batch).unwrap(),
            reference
        );
    }
}

#[test]
fn retriever_is_deterministic_and_closed() {
    let make = || Retriever {
        attention: Box::new(LexicalAttention::builder().layers(8).heads(4).build()),
        embedding: Box::new(LexicalEmbedder::default()),
        recognizer: Box::new(CapitalizedSpanRecognizer),
        settings: RetrievalSettings {
            layers: vec![3, 5],
            ..Default::default()
        },
    };
    let doc = segment_document(
        "Marie Curie studied in Paris. She won two prizes.\n\nThe Sorbonne hired Pierre Curie.\n\nRadium glows faintly. Marie Curie named polonium.",
        &SegmentationConfig::default(),
    )
    .unwrap();
    let a = make()
        .trace(&doc, "Which element did Marie Curie name?", 3)
        .unwrap();
    let b = make()
        .trace(&doc, "Which element did Marie Curie name?", 3)
        .unwrap();
    assert_eq!(a.result, b.result);
    assert_eq!(a.attention, b.attention);
    let case = Case {
        doc: doc.clone(),
        index: a.index.clone(),
        attn: a.attention.clone().unwrap(),
        emb: a.embedding.clone().unwrap(),
    };
    assert_eq!(closure_violations(&case, &a.result), 0);
    assert!(a.result.paragraphs.contains(&2));
    let json = a.result.to_json(&a.index);
    assert!(json["paragraphs"].is_array());
    assert!(json["entities"]
        .as_array()
        .unwrap()
        .iter()
        .any(|e| e == "marie curie"));
}
