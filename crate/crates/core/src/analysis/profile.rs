use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::attnscore::{paragraph_attention_scores, Strategy};
use crate::backend::{forward_with_attention, AttentionBackend};
use crate::corpus::RetrievalSample;
use crate::error::{Error, Result};
use crate::rank::rank_of;

/// Mean gold-paragraph rank for every (layer, subquery) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub layer_ids: Vec<usize>,
    /// `ranks[layer position][subquery]`, 1 = best.
    pub ranks: Vec<Vec<f64>>,
    /// Layer id with the lowest mean rank per subquery (lowest id on ties).
    pub best_layer_per_subquery: Vec<usize>,
    /// Samples contributing to each subquery position.
    pub subquery_counts: Vec<usize>,
    pub sample_count: usize,
}

impl LayerProfile {
    pub fn num_subqueries(&self) -> usize {
        self.subquery_counts.len()
    }

    /// `(layer, subquery, mean_rank)` rows, subqueries numbered from 1.
    pub fn csv(&self) -> String {
        let mut out = String::from("layer,subquery,mean_rank\n");
        for (li, &layer) in self.layer_ids.iter().enumerate() {
            for (j, r) in self.ranks[li].iter().enumerate() {
                out.push_str(&format!("{layer},{},{r}\n", j + 1));
            }
        }
        out
    }
}

/// Best (numerically smallest) rank among the gold paragraphs.
pub fn gold_rank(paragraph_scores: &[f64], gold: &BTreeSet<usize>) -> Option<usize> {
    gold.iter().map(|&g| rank_of(paragraph_scores, g)).min()
}

/// Ranks paragraphs by single-layer attention scores for every subquery of
/// every sample and averages the gold paragraph's rank per layer.
pub fn profile_layers(
    samples: &[RetrievalSample],
    backend: &dyn AttentionBackend,
    layers: &[usize],
) -> Result<LayerProfile> {
    let mut sums: Vec<Vec<f64>> = vec![Vec::new(); layers.len()];
    let mut counts: Vec<usize> = Vec::new();
    for sample in samples {
        let subqueries = sample
            .subquery_gold
            .as_deref()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::MissingSubqueries {
                sample: sample.sample_id.clone(),
            })?;
        if subqueries.len() > counts.len() {
            counts.resize(subqueries.len(), 0);
            for row in &mut sums {
                row.resize(subqueries.len(), 0.0);
            }
        }
        for (j, sub) in subqueries.iter().enumerate() {
            if sub.gold.is_empty() {
                continue;
            }
            let (tensor, align) = forward_with_attention(
                backend,
                &sample.document,
                &sub.query,
                layers,
                Strategy::None,
            )?;
            for (li, &layer) in layers.iter().enumerate() {
                let scores = paragraph_attention_scores(&tensor.select_layers(&[layer])?, &align)?;
                sums[li][j] += gold_rank(&scores, &sub.gold).expect("gold is non-empty") as f64;
            }
            counts[j] += 1;
        }
    }
    let ranks: Vec<Vec<f64>> = sums
        .iter()
        .map(|row| {
            row.iter()
                .zip(&counts)
                .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
                .collect()
        })
        .collect();
    let best_layer_per_subquery = (0..counts.len())
        .map(|j| {
            let best = (0..layers.len())
                .min_by(|&a, &b| {
                    ranks[a][j]
                        .total_cmp(&ranks[b][j])
                        .then(layers[a].cmp(&layers[b]))
                })
                .expect("at least one layer");
            layers[best]
        })
        .collect();
    Ok(LayerProfile {
        layer_ids: layers.to_vec(),
        ranks,
        best_layer_per_subquery,
        subquery_counts: counts,
        sample_count: samples.len(),
    })
}

/// Layers that achieve the best mean rank for at least one subquery,
/// sorted and deduplicated.
pub fn select_layers(profile: &LayerProfile) -> Vec<usize> {
    profile
        .best_layer_per_subquery
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(best: &[usize]) -> LayerProfile {
        LayerProfile {
            layer_ids: vec![],
            ranks: vec![],
            best_layer_per_subquery: best.to_vec(),
            subquery_counts: vec![1; best.len()],
            sample_count: 1,
        }
    }

    #[test]
    fn selection_is_a_sorted_set() {
        assert_eq!(select_layers(&profile(&[13, 17, 17, 21])), vec![13, 17, 21]);
        assert_eq!(select_layers(&profile(&[21, 13, 17])), vec![13, 17, 21]);
        assert_eq!(select_layers(&profile(&[9])), vec![9]);
        assert_eq!(select_layers(&profile(&[4, 4, 4])), vec![4]);
    }

    #[test]
    fn best_gold_rank_wins() {
        let scores = [0.1, 0.9, 0.5, 0.5];
        assert_eq!(gold_rank(&scores, &BTreeSet::from([3])), Some(3));
        assert_eq!(gold_rank(&scores, &BTreeSet::from([0])), Some(4));
        assert_eq!(gold_rank(&scores, &BTreeSet::from([0, 2, 3])), Some(2));
        assert_eq!(gold_rank(&scores, &BTreeSet::new()), None);
    }
}
