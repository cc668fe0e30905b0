//! Seeded synthetic datasets with scripted-backend fixtures whose attention
//! and embeddings carry a planted signal, so tests and demos run without a
//! model.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{build_haystack, HaystackSpec};
use crate::backend::scripted::{
    AttentionFixture, EmbeddingFixture, ScriptedFixture, VectorFixture,
};
use crate::backend::{AttentionTensor, PromptTemplate};
use crate::corpus::{
    align_tokens, QueryType, RetrievalSample, SegmentationConfig, SegmentedDocument, SubqueryGold,
};
use crate::error::{Error, Result};
use crate::tokenize::WordTokenizer;

const CONSONANTS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

/// Background attention stays below this; planted spikes sit well above it.
const NOISE_CEILING: u32 = 20;

struct Babble(ChaCha8Rng);

impl Babble {
    fn word(&mut self) -> String {
        let syllables = self.0.gen_range(1..=3);
        (0..syllables)
            .map(|_| {
                let c = CONSONANTS[self.0.gen_range(0..CONSONANTS.len())];
                let v = VOWELS[self.0.gen_range(0..VOWELS.len())];
                format!("{c}{v}")
            })
            .collect()
    }

    /// At least four letters, so it never reads as an abbreviation.
    fn long_word(&mut self) -> String {
        let mut w = self.word();
        while w.len() < 4 {
            w.push_str(&self.word());
        }
        w
    }

    fn name(&mut self) -> String {
        let w = self.long_word();
        let mut chars = w.chars();
        let first = chars.next().expect("non-empty word").to_ascii_uppercase();
        std::iter::once(first).chain(chars).collect()
    }

    /// Lowercase words ending in a period, sometimes mentioning one name.
    fn sentence(&mut self, names: &[String]) -> String {
        let n = self.0.gen_range(5..=9);
        let mut words: Vec<String> = (0..n - 1).map(|_| self.word()).collect();
        words.push(self.long_word());
        if !names.is_empty() && self.0.gen_bool(0.4) {
            let at = self.0.gen_range(1..n - 1);
            words[at] = names[self.0.gen_range(0..names.len())].clone();
        }
        format!("{}.", words.join(" "))
    }

    fn unit_vector(&mut self, dim: usize) -> Vec<f32> {
        let v: Vec<f32> = (0..dim).map(|_| self.0.gen_range(-1.0f32..1.0)).collect();
        let norm = v
            .iter()
            .map(|x| x * x)
            .sum::<f32>()
            .sqrt()
            .max(f32::EPSILON);
        v.into_iter().map(|x| x / norm).collect()
    }

    fn noise(&mut self) -> f32 {
        self.0.gen_range(0..NOISE_CEILING) as f32 / 1000.0
    }

    fn spike(&mut self) -> f32 {
        self.0.gen_range(600..900) as f32 / 1000.0
    }
}

/// Dense `[layer][head][t][q]` buffer filled with low noise.
struct TensorBuf {
    layers: Vec<usize>,
    heads: usize,
    doc_len: usize,
    query_len: usize,
    values: Vec<f32>,
}

impl TensorBuf {
    fn noisy(
        rng: &mut Babble,
        layers: Vec<usize>,
        heads: usize,
        doc_len: usize,
        query_len: usize,
    ) -> Self {
        let n = layers.len() * heads * doc_len * query_len;
        let values = (0..n).map(|_| rng.noise()).collect();
        TensorBuf {
            layers,
            heads,
            doc_len,
            query_len,
            values,
        }
    }

    fn set(&mut self, layer_pos: usize, head: usize, t: usize, q: usize, v: f32) {
        let i = ((layer_pos * self.heads + head) * self.doc_len + t) * self.query_len + q;
        self.values[i] = v;
    }

    fn finish(self) -> Result<AttentionTensor> {
        AttentionTensor::new(
            self.layers,
            self.heads,
            self.doc_len,
            self.query_len,
            self.values,
        )
    }
}

fn base_fixture(model_id: &str, num_layers: usize, heads: usize) -> ScriptedFixture {
    ScriptedFixture {
        model_id: model_id.into(),
        num_layers: Some(num_layers),
        num_heads: Some(heads),
        window_limit: 1 << 20,
        template: PromptTemplate::default(),
        fail: false,
        attention: Vec::new(),
        embeddings: None,
    }
}

/// A dataset plus the scripted fixture that serves it.
#[derive(Debug, Clone)]
pub struct PlantedSet {
    pub samples: Vec<RetrievalSample>,
    pub fixture: ScriptedFixture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedOptions {
    pub samples: usize,
    pub num_layers: usize,
    pub heads: usize,
    pub min_paragraphs: usize,
    pub max_paragraphs: usize,
    pub sentences_per_paragraph: usize,
    pub dim: usize,
}

impl Default for PlantedOptions {
    fn default() -> Self {
        PlantedOptions {
            samples: 50,
            num_layers: 4,
            heads: 2,
            min_paragraphs: 4,
            max_paragraphs: 8,
            sentences_per_paragraph: 3,
            dim: 32,
        }
    }
}

fn random_document(
    rng: &mut Babble,
    id: &str,
    paragraphs: usize,
    per: usize,
) -> Result<SegmentedDocument> {
    let names: Vec<String> = (0..4).map(|_| rng.name()).collect();
    let texts: Vec<String> = (0..paragraphs)
        .map(|_| {
            (0..per)
                .map(|_| rng.sentence(&names))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let doc = SegmentedDocument::from_paragraphs(id, &texts, &SegmentationConfig::default())?;
    if doc.sentence_count() != paragraphs * per {
        return Err(Error::Config(format!(
            "generated document {id} did not segment cleanly"
        )));
    }
    Ok(doc)
}

/// One gold paragraph per sample. Attention spikes on a token of one gold
/// sentence at every layer and head, and the query embedding sits next to
/// that sentence's embedding, so both views rank it first.
pub fn planted_retrieval(seed: u64, opts: &PlantedOptions) -> Result<PlantedSet> {
    if opts.min_paragraphs == 0
        || opts.min_paragraphs > opts.max_paragraphs
        || opts.sentences_per_paragraph == 0
    {
        return Err(Error::Config(
            "planted dataset needs 1 <= min_paragraphs <= max_paragraphs".into(),
        ));
    }
    let mut rng = Babble(ChaCha8Rng::seed_from_u64(seed));
    let mut fixture = base_fixture("planted", opts.num_layers, opts.heads);
    let mut vectors: HashMap<String, Vec<f32>> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut remember = |text: &str, v: Vec<f32>| {
        if !vectors.contains_key(text) {
            order.push(text.to_string());
            vectors.insert(text.to_string(), v);
        }
    };
    let mut samples = Vec::with_capacity(opts.samples);
    for i in 0..opts.samples {
        let id = format!("planted-{i:03}");
        let paragraphs = rng.0.gen_range(opts.min_paragraphs..=opts.max_paragraphs);
        let doc = random_document(&mut rng, &id, paragraphs, opts.sentences_per_paragraph)?;
        let gold_sentence = rng.0.gen_range(0..doc.sentence_count());
        let gold = doc.paragraph_of(gold_sentence);
        let cue: Vec<&str> = doc
            .sentence_text(gold_sentence)
            .split_whitespace()
            .take(3)
            .collect();
        let query = format!(
            "which passage says {} {}?",
            cue.join(" ").trim_end_matches('.'),
            rng.word()
        );

        let align = align_tokens(&doc, &query, &WordTokenizer)?;
        let span = align.sentence_token_spans[gold_sentence];
        let target = rng.0.gen_range(span.first..=span.last);
        let layers: Vec<usize> = (0..opts.num_layers).collect();
        let mut buf = TensorBuf::noisy(
            &mut rng,
            layers,
            opts.heads,
            align.doc_token_count,
            align.query_token_count,
        );
        for l in 0..opts.num_layers {
            for h in 0..opts.heads {
                let v = rng.spike();
                buf.set(l, h, target, 0, v);
            }
        }
        fixture.attention.push(AttentionFixture {
            document: doc.raw_text.clone(),
            query: query.clone(),
            tensor: buf.finish()?,
        });

        let mut gold_vec = Vec::new();
        for s in 0..doc.sentence_count() {
            let v = rng.unit_vector(opts.dim);
            if s == gold_sentence {
                gold_vec = v.clone();
            }
            remember(doc.sentence_text(s), v);
        }
        let jitter = rng.unit_vector(opts.dim);
        remember(
            &query,
            gold_vec
                .iter()
                .zip(&jitter)
                .map(|(g, j)| g + 0.1 * j)
                .collect(),
        );

        samples.push(RetrievalSample {
            sample_id: id,
            document: doc,
            query,
            gold_paragraph_indices: BTreeSet::from([gold]),
            query_type: QueryType::SingleHop,
            subquery_gold: None,
        });
    }
    fixture.embeddings = Some(EmbeddingFixture {
        model_id: "planted-embedder".into(),
        vectors: order
            .into_iter()
            .map(|text| {
                let values = vectors.remove(&text).expect("remembered vector");
                VectorFixture { text, values }
            })
            .collect(),
    });
    Ok(PlantedSet { samples, fixture })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOptions {
    pub samples: usize,
    pub num_layers: usize,
    pub heads: usize,
    pub paragraphs: usize,
    /// Layer where subquery `j`'s gold paragraph ranks first.
    pub best_layers: Vec<usize>,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            samples: 6,
            num_layers: 24,
            heads: 2,
            paragraphs: 6,
            best_layers: vec![13, 17, 21],
        }
    }
}

/// Multi-hop samples with subquery gold. For subquery `j`, the layer
/// `best_layers[j]` spikes on its gold paragraph while every other layer
/// spikes harder on a decoy paragraph, so the gold paragraph is first only
/// at the planted layer. The fixture covers subqueries only.
pub fn planted_layer_profile(seed: u64, opts: &ProfileOptions) -> Result<PlantedSet> {
    if opts.best_layers.is_empty() || opts.best_layers.iter().any(|&l| l >= opts.num_layers) {
        return Err(Error::Config(
            "best layers must be non-empty and below num_layers".into(),
        ));
    }
    if opts.paragraphs < opts.best_layers.len() + 1 {
        return Err(Error::Config("need more paragraphs than subqueries".into()));
    }
    let mut rng = Babble(ChaCha8Rng::seed_from_u64(seed));
    let mut fixture = base_fixture("planted-profile", opts.num_layers, opts.heads);
    let mut samples = Vec::with_capacity(opts.samples);
    for i in 0..opts.samples {
        let id = format!("profile-{i:03}");
        let doc = random_document(&mut rng, &id, opts.paragraphs, 2)?;
        let mut paragraphs: Vec<usize> = (0..opts.paragraphs).collect();
        let mut subqueries = Vec::new();
        for (j, &best) in opts.best_layers.iter().enumerate() {
            let gold = paragraphs.remove(rng.0.gen_range(0..paragraphs.len()));
            let query = format!(
                "part {} of question {i} about {} {}?",
                j + 1,
                rng.word(),
                rng.word()
            );
            let align = align_tokens(&doc, &query, &WordTokenizer)?;
            let para_token = |rng: &mut Babble, p: usize| {
                let span = align.paragraph_token_spans[p];
                rng.0.gen_range(span.first..=span.last)
            };
            let layers: Vec<usize> = (0..opts.num_layers).collect();
            let mut buf = TensorBuf::noisy(
                &mut rng,
                layers,
                opts.heads,
                align.doc_token_count,
                align.query_token_count,
            );
            for l in 0..opts.num_layers {
                let (para, value) = if l == best {
                    (gold, 0.9)
                } else {
                    let mut decoy = rng.0.gen_range(0..opts.paragraphs - 1);
                    if decoy >= gold {
                        decoy += 1;
                    }
                    (decoy, 0.5)
                };
                let t = para_token(&mut rng, para);
                for h in 0..opts.heads {
                    buf.set(l, h, t, 0, value);
                }
            }
            fixture.attention.push(AttentionFixture {
                document: doc.raw_text.clone(),
                query: query.clone(),
                tensor: buf.finish()?,
            });
            subqueries.push(SubqueryGold {
                query,
                gold: BTreeSet::from([gold]),
            });
        }
        samples.push(RetrievalSample {
            sample_id: id,
            query: format!("combined question {i}"),
            gold_paragraph_indices: subqueries
                .iter()
                .flat_map(|s| s.gold.iter().copied())
                .collect(),
            document: doc,
            query_type: QueryType::Composition,
            subquery_gold: Some(subqueries),
        });
    }
    Ok(PlantedSet { samples, fixture })
}

/// Scripted attention for a needle sweep: at layer `l`, the first
/// `planted[l]` heads put their strongest weight on a needle token and the
/// rest on a filler token. Layers missing from `planted` get no needle heads.
pub fn planted_niah(
    seed: u64,
    spec: &HaystackSpec,
    num_layers: usize,
    heads: usize,
    planted: &[(usize, usize)],
) -> Result<ScriptedFixture> {
    if let Some(&(l, c)) = planted.iter().find(|&&(l, c)| l >= num_layers || c > heads) {
        return Err(Error::Config(format!(
            "cannot plant {c} heads at layer {l} with {num_layers} layers of {heads} heads"
        )));
    }
    let mut rng = Babble(ChaCha8Rng::seed_from_u64(seed));
    let mut fixture = base_fixture("planted-niah", num_layers, heads);
    for &depth in &spec.depths {
        let hay = build_haystack(spec, depth, &WordTokenizer)?;
        let align = align_tokens(&hay.document, &spec.question, &WordTokenizer)?;
        let needle = align.sentence_token_spans[hay.needle_sentence];
        let filler: Vec<usize> = (0..align.doc_token_count)
            .filter(|t| !needle.contains(*t))
            .collect();
        if filler.is_empty() {
            return Err(Error::Config("haystack has no filler tokens".into()));
        }
        let layers: Vec<usize> = (0..num_layers).collect();
        let mut buf = TensorBuf::noisy(
            &mut rng,
            layers,
            heads,
            align.doc_token_count,
            align.query_token_count,
        );
        for l in 0..num_layers {
            let count = planted
                .iter()
                .find(|&&(pl, _)| pl == l)
                .map_or(0, |&(_, c)| c);
            for h in 0..heads {
                let t = if h < count {
                    rng.0.gen_range(needle.first..=needle.last)
                } else {
                    filler[rng.0.gen_range(0..filler.len())]
                };
                let q = rng.0.gen_range(0..align.query_token_count);
                let v = rng.spike();
                buf.set(l, h, t, q, v);
            }
        }
        fixture.attention.push(AttentionFixture {
            document: hay.document.raw_text.clone(),
            query: spec.question.clone(),
            tensor: buf.finish()?,
        });
    }
    Ok(fixture)
}
