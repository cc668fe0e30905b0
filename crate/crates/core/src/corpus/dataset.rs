use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::segment::{segment_with_id, SegmentationConfig, SegmentedDocument};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryType {
    SingleHop,
    Comparison,
    Composition,
    Summarization,
    #[default]
    Unspecified,
}

impl std::str::FromStr for QueryType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', ' '], "_")
            .as_str()
        {
            "single_hop" => Ok(QueryType::SingleHop),
            "comparison" => Ok(QueryType::Comparison),
            "composition" => Ok(QueryType::Composition),
            "summarization" => Ok(QueryType::Summarization),
            "unspecified" | "" => Ok(QueryType::Unspecified),
            other => Err(format!("unknown query type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubqueryGold {
    pub query: String,
    pub gold: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RetrievalSample {
    pub sample_id: String,
    pub document: SegmentedDocument,
    pub query: String,
    pub gold_paragraph_indices: BTreeSet<usize>,
    pub query_type: QueryType,
    pub subquery_gold: Option<Vec<SubqueryGold>>,
}

/// One line of the canonical JSONL format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    paragraphs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    document: Option<String>,
    query: String,
    gold: Vec<usize>,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    query_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subqueries: Option<Vec<SubqueryRecord>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubqueryRecord {
    q: String,
    gold: Vec<usize>,
}

impl RetrievalSample {
    fn from_record(record: Record, number: usize, rules: &SegmentationConfig) -> Result<Self> {
        let schema = |message: String| Error::Schema {
            record: number,
            message,
        };
        let document = match (record.paragraphs, record.document) {
            (Some(paragraphs), None) => {
                SegmentedDocument::from_paragraphs(record.id.clone(), &paragraphs, rules)
            }
            (None, Some(text)) => segment_with_id(&record.id, &text, rules),
            (Some(_), Some(_)) => {
                return Err(schema(
                    "record has both \"paragraphs\" and \"document\"".into(),
                ))
            }
            (None, None) => {
                return Err(schema(
                    "record has neither \"paragraphs\" nor \"document\"".into(),
                ))
            }
        }
        .map_err(|e| schema(e.to_string()))?;

        let n = document.paragraph_count();
        let check_gold = |gold: Vec<usize>, what: &str| -> Result<BTreeSet<usize>> {
            match gold.iter().find(|&&g| g >= n) {
                Some(g) => Err(schema(format!(
                    "{what} index {g} exceeds paragraph count {n}"
                ))),
                None => Ok(gold.into_iter().collect()),
            }
        };
        let gold_paragraph_indices = check_gold(record.gold, "gold")?;
        let query_type = match record.query_type.as_deref() {
            Some(t) => t.parse().map_err(schema)?,
            None => QueryType::Unspecified,
        };
        let subquery_gold = record
            .subqueries
            .map(|subs| {
                subs.into_iter()
                    .enumerate()
                    .map(|(j, s)| {
                        Ok(SubqueryGold {
                            query: s.q,
                            gold: check_gold(s.gold, &format!("subquery {j} gold"))?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        Ok(RetrievalSample {
            sample_id: record.id,
            document,
            query: record.query,
            gold_paragraph_indices,
            query_type,
            subquery_gold,
        })
    }

    fn to_record(&self) -> Record {
        Record {
            id: self.sample_id.clone(),
            paragraphs: Some(
                (0..self.document.paragraph_count())
                    .map(|i| self.document.paragraph_text(i).to_string())
                    .collect(),
            ),
            document: None,
            query: self.query.clone(),
            gold: self.gold_paragraph_indices.iter().copied().collect(),
            query_type: match self.query_type {
                QueryType::Unspecified => None,
                t => Some(
                    serde_json::to_value(t)
                        .ok()
                        .and_then(|v| v.as_str().map(String::from))
                        .unwrap_or_default(),
                ),
            },
            subqueries: self.subquery_gold.as_ref().map(|subs| {
                subs.iter()
                    .map(|s| SubqueryRecord {
                        q: s.query.clone(),
                        gold: s.gold.iter().copied().collect(),
                    })
                    .collect()
            }),
        }
    }

    /// Serializes the sample as one canonical JSONL line (no newline).
    pub fn to_jsonl(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("record serialization cannot fail")
    }
}

/// Parses canonical JSONL. Blank lines are skipped; record numbers in errors
/// are 1-based line numbers.
pub fn parse_dataset(text: &str, rules: &SegmentationConfig) -> Result<Vec<RetrievalSample>> {
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let number = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| Error::Schema {
            record: number,
            message: e.to_string(),
        })?;
        samples.push(RetrievalSample::from_record(record, number, rules)?);
    }
    Ok(samples)
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    rules: &SegmentationConfig,
) -> Result<Vec<RetrievalSample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_dataset(&text, rules)
}

pub fn write_dataset(path: impl AsRef<Path>, samples: &[RetrievalSample]) -> Result<()> {
    let path = path.as_ref();
    let wrap = |e| Error::io(format!("writing {}", path.display()), e);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(wrap)?);
    for s in samples {
        writeln!(out, "{}", s.to_jsonl()).map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}

/// Summary statistics in the shape of a dataset comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub samples: usize,
    pub mean_words: f64,
    pub max_words: usize,
    pub mean_paragraphs: f64,
    pub mean_evidences: f64,
}

impl DatasetStats {
    pub fn from_samples(samples: &[RetrievalSample]) -> Self {
        let n = samples.len();
        let mean = |total: f64| if n == 0 { 0.0 } else { total / n as f64 };
        let words: Vec<usize> = samples.iter().map(|s| s.document.word_count()).collect();
        DatasetStats {
            samples: n,
            mean_words: mean(words.iter().sum::<usize>() as f64),
            max_words: words.iter().copied().max().unwrap_or(0),
            mean_paragraphs: mean(
                samples
                    .iter()
                    .map(|s| s.document.paragraph_count())
                    .sum::<usize>() as f64,
            ),
            mean_evidences: mean(
                samples
                    .iter()
                    .map(|s| s.gold_paragraph_indices.len())
                    .sum::<usize>() as f64,
            ),
        }
    }
}
