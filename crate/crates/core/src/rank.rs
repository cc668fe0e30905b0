//! Deterministic descending rankings. Equal scores go to the lower index.

use std::cmp::Ordering;

pub fn descending(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Indices sorted best first.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| descending((a, scores[a]), (b, scores[b])));
    idx
}

/// 1-based rank of `index` in the descending order of `scores`.
pub fn rank_of(scores: &[f64], index: usize) -> usize {
    let s = scores[index];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < index))
        .count()
}
