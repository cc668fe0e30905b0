use longdoc::corpus::{
    align_tokens, load_dataset, parse_dataset, segment_document, write_dataset, DatasetStats,
    SegmentationConfig,
};
use longdoc::fixtures::{planted_layer_profile, planted_retrieval, PlantedOptions, ProfileOptions};
use longdoc::tokenize::{Tokenizer, WordTokenizer};
use longdoc::Error;
use proptest::prelude::*;

fn prose() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        "[a-zA-Z]{1,8}".prop_map(|w| w),
        Just(" ".to_string()),
        Just(" ".to_string()),
        Just(". ".to_string()),
        Just("? ".to_string()),
        Just("\n".to_string()),
        Just("\n\n".to_string()),
        Just("Dr. ".to_string()),
        Just("\u{201d} ".to_string()),
        Just("é".to_string()),
        Just("3.5".to_string()),
    ];
    proptest::collection::vec(piece, 0..60).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn segmentation_covers_all_text(text in prose()) {
        let rules = SegmentationConfig::default();
        match segment_document(&text, &rules) {
            Err(Error::EmptyDocument) => prop_assert!(text.trim().is_empty()),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
            Ok(doc) => {
                doc.validate().unwrap();
                // every non-whitespace byte is in exactly one sentence
                for (i, c) in text.char_indices() {
                    let holders = doc.sentences.iter().filter(|s| s.char_span.start <= i && i < s.char_span.end).count();
                    if c.is_whitespace() {
                        prop_assert!(holders <= 1);
                    } else {
                        prop_assert_eq!(holders, 1, "byte {} {:?}", i, c);
                    }
                }
                for s in &doc.sentences {
                    let p = doc.paragraphs[s.paragraph_index].char_span;
                    prop_assert!(p.contains(&s.char_span));
                    let body = doc.sentence_text(s.index);
                    prop_assert_eq!(body.trim(), body);
                }
                let json = serde_json::to_string(&doc).unwrap();
                let back: longdoc::corpus::SegmentedDocument = serde_json::from_str(&json).unwrap();
                prop_assert_eq!(back, doc);
            }
        }
    }

    #[test]
    fn alignment_nests_sentences_in_paragraphs(text in prose(), query in "[a-z ]{1,20}[a-z]") {
        let Ok(doc) = segment_document(&text, &SegmentationConfig::default()) else { return Ok(()); };
        let align = align_tokens(&doc, &query, &WordTokenizer).unwrap();
        align.validate().unwrap();
        prop_assert_eq!(align.doc_token_count, WordTokenizer.count(&text));
        prop_assert_eq!(align.query_token_count, WordTokenizer.count(&query));
        for s in &doc.sentences {
            let st = align.sentence_token_spans[s.index];
            let pt = align.paragraph_token_spans[s.paragraph_index];
            prop_assert!(pt.first <= st.first && st.last <= pt.last);
        }
        // every token lies in some sentence
        for t in 0..align.doc_token_count {
            prop_assert!(align.sentence_token_spans.iter().any(|s| s.contains(t)));
        }
    }

    #[test]
    fn substring_tokenization_is_a_slice(text in prose(), a in 0usize..200, b in 0usize..200) {
        let tokens = WordTokenizer.tokenize(&text);
        if tokens.is_empty() {
            return Ok(());
        }
        let (lo, hi) = (a.min(b) % tokens.len(), a.max(b) % tokens.len());
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let sub = &text[tokens[lo].start..tokens[hi].end];
        let sub_tokens: Vec<(usize, usize)> = WordTokenizer.tokenize(sub).iter().map(|t| (t.start, t.end)).collect();
        let expected: Vec<(usize, usize)> = tokens[lo..=hi].iter().map(|t| (t.start - tokens[lo].start, t.end - tokens[lo].start)).collect();
        prop_assert_eq!(sub_tokens, expected);
    }
}

#[test]
fn dataset_round_trips_through_jsonl() {
    let planted = planted_retrieval(
        11,
        &PlantedOptions {
            samples: 5,
            ..Default::default()
        },
    )
    .unwrap();
    let profile = planted_layer_profile(
        12,
        &ProfileOptions {
            samples: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let all: Vec<_> = planted.samples.into_iter().chain(profile.samples).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.jsonl");
    write_dataset(&path, &all).unwrap();
    let back = load_dataset(&path, &SegmentationConfig::default()).unwrap();
    assert_eq!(back, all);
}

#[test]
fn schema_errors_carry_line_numbers() {
    let good = r#"{"id":"a","paragraphs":["One. Two.","Three."],"query":"q","gold":[1]}"#;
    let text =
        format!("{good}\n\n{{\"id\":\"b\",\"paragraphs\":[\"x\"],\"query\":\"q\",\"gold\":[4]}}\n");
    match parse_dataset(&text, &SegmentationConfig::default()) {
        Err(Error::Schema { record, message }) => {
            assert_eq!(record, 3);
            assert!(message.contains("exceeds"), "{message}");
        }
        other => panic!("expected schema error, got {other:?}"),
    }
    let unknown = r#"{"id":"a","paragraphs":["x"],"query":"q","gold":[0],"extra":1}"#;
    assert!(matches!(
        parse_dataset(unknown, &SegmentationConfig::default()),
        Err(Error::Schema { record: 1, .. })
    ));
    let samples = parse_dataset(good, &SegmentationConfig::default()).unwrap();
    assert_eq!(samples[0].document.sentence_count(), 3);
    let stats = DatasetStats::from_samples(&samples);
    assert_eq!(
        (stats.samples, stats.max_words, stats.mean_evidences),
        (1, 3, 1.0)
    );
}
