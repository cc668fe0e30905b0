//! Paragraph-level F-1 evaluation over a top-k sweep.

use crate::clock::Stopwatch;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::corpus::RetrievalSample;
use crate::error::{Error, Result};
use crate::retrieve::Retriever;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn retrieval_f1(retrieved: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> Result<Prf> {
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    let hits = retrieved.intersection(gold).count() as f64;
    let precision = if retrieved.is_empty() {
        0.0
    } else {
        hits / retrieved.len() as f64
    };
    let recall = hits / gold.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Prf {
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: String,
    pub k: usize,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Wall-clock time of indexing plus retrieval.
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KAggregate {
    pub k: usize,
    pub samples: usize,
    pub failed: usize,
    pub mean_f1: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_sample: Vec<SampleRow>,
    pub aggregates: Vec<KAggregate>,
    pub failed_ids: Vec<String>,
    pub config_fingerprint: String,
}

impl EvalReport {
    /// Aggregates are macro averages over per-sample rows; failed samples
    /// count as zero.
    pub fn from_rows(
        per_sample: Vec<SampleRow>,
        ks: &[usize],
        config_fingerprint: impl Into<String>,
    ) -> Self {
        let aggregates = ks
            .iter()
            .map(|&k| {
                let rows: Vec<&SampleRow> = per_sample.iter().filter(|r| r.k == k).collect();
                let n = rows.len();
                let mean = |f: fn(&SampleRow) -> f64| {
                    if n == 0 {
                        0.0
                    } else {
                        rows.iter().map(|r| f(r)).sum::<f64>() / n as f64
                    }
                };
                KAggregate {
                    k,
                    samples: n,
                    failed: rows.iter().filter(|r| r.error.is_some()).count(),
                    mean_f1: mean(|r| r.f1),
                    mean_precision: mean(|r| r.precision),
                    mean_recall: mean(|r| r.recall),
                    mean_seconds: mean(|r| r.seconds),
                }
            })
            .collect();
        let failed_ids = per_sample
            .iter()
            .filter(|r| r.error.is_some())
            .map(|r| r.sample_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        EvalReport {
            per_sample,
            aggregates,
            failed_ids,
            config_fingerprint: config_fingerprint.into(),
        }
    }

    /// `sample_id,k,f1,seconds`
    pub fn csv(&self) -> String {
        let mut out = String::from("sample_id,k,f1,seconds\n");
        for r in &self.per_sample {
            let id = if r.sample_id.contains([',', '"', '\n']) {
                format!("\"{}\"", r.sample_id.replace('"', "\"\""))
            } else {
                r.sample_id.clone()
            };
            out.push_str(&format!("{id},{},{},{}\n", r.k, r.f1, r.seconds));
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = String::from("k\tmean_f1\tmean_seconds\tsamples\tfailed\n");
        for a in &self.aggregates {
            out.push_str(&format!(
                "{}\t{:.4}\t{:.4}\t{}\t{}\n",
                a.k, a.mean_f1, a.mean_seconds, a.samples, a.failed
            ));
        }
        out
    }
}

fn evaluate_one(retriever: &Retriever, sample: &RetrievalSample, k: usize) -> SampleRow {
    let started = Stopwatch::start();
    let outcome = retriever.retrieve_k(sample, k);
    let seconds = started.seconds();
    let scored = outcome.and_then(|result| {
        let retrieved: BTreeSet<usize> = result.paragraphs.into_iter().collect();
        retrieval_f1(&retrieved, &sample.gold_paragraph_indices)
    });
    match scored {
        Ok(prf) => SampleRow {
            sample_id: sample.sample_id.clone(),
            k,
            f1: prf.f1,
            precision: prf.precision,
            recall: prf.recall,
            seconds,
            error: None,
        },
        Err(e) => SampleRow {
            sample_id: sample.sample_id.clone(),
            k,
            f1: 0.0,
            precision: 0.0,
            recall: 0.0,
            seconds,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every sample at every k. Each worker thread builds its own
/// retriever with `make`; per-sample failures are recorded, not returned.
pub fn run_eval_with<F>(
    dataset: &[RetrievalSample],
    ks: &[usize],
    workers: usize,
    fingerprint: &str,
    make: F,
) -> Result<EvalReport>
where
    F: Fn() -> Result<Retriever> + Sync,
{
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config(format!(
            "k values must be non-empty and positive, got {ks:?}"
        )));
    }
    let workers = workers.clamp(1, dataset.len().max(1));
    let jobs: Vec<(usize, usize)> = (0..ks.len())
        .flat_map(|ki| (0..dataset.len()).map(move |si| (ki, si)))
        .collect();
    let mut rows: Vec<(usize, SampleRow)> = if workers == 1 {
        let retriever = make()?;
        jobs.iter()
            .enumerate()
            .map(|(j, &(ki, si))| (j, evaluate_one(&retriever, &dataset[si], ks[ki])))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let (jobs, make) = (&jobs, &make);
                    scope.spawn(move || -> Result<Vec<(usize, SampleRow)>> {
                        let retriever = make()?;
                        Ok(jobs
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| j % workers == w)
                            .map(|(j, &(ki, si))| {
                                (j, evaluate_one(&retriever, &dataset[si], ks[ki]))
                            })
                            .collect())
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation worker panicked"))
                .collect::<Result<Vec<_>>>()
                .map(|parts| parts.into_iter().flatten().collect())
        })?
    };
    rows.sort_by_key(|(j, _)| *j);
    Ok(EvalReport::from_rows(
        rows.into_iter().map(|(_, r)| r).collect(),
        ks,
        fingerprint,
    ))
}

/// Evaluates with retrievers built from `config`, using its worker count.
pub fn run_eval(
    dataset: &[RetrievalSample],
    config: &PipelineConfig,
    ks: &[usize],
) -> Result<EvalReport> {
    run_eval_with(dataset, ks, config.workers, &config.fingerprint(), || {
        config.build_retriever()
    })
}
