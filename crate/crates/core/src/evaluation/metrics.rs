use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::featuredb::{VectorId, VectorStore};
use crate::reporting::{version_distance, Version, VersionDistanceWeights};

/// Precision, recall and F1 with flags for the degenerate cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Nothing was reported; `precision` is reported as 0.
    pub precision_undefined: bool,
    /// Both sets are empty; all three values are reported as 0.
    pub vacuous: bool,
}

/// Raw counts behind a micro-averaged [`Prf1`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub true_positives: usize,
    pub reported: usize,
    pub relevant: usize,
}

impl Counts {
    pub fn of<T: Ord>(reported: &BTreeSet<T>, truth: &BTreeSet<T>) -> Self {
        Self {
            true_positives: reported.intersection(truth).count(),
            reported: reported.len(),
            relevant: truth.len(),
        }
    }

    pub fn add(&mut self, other: Counts) {
        self.true_positives += other.true_positives;
        self.reported += other.reported;
        self.relevant += other.relevant;
    }

    pub fn false_positives(&self) -> usize {
        self.reported - self.true_positives
    }

    pub fn false_negatives(&self) -> usize {
        self.relevant - self.true_positives
    }

    pub fn prf1(&self) -> Prf1 {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.true_positives, self.reported);
        let recall = ratio(self.true_positives, self.relevant);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf1 {
            precision,
            recall,
            f1,
            precision_undefined: self.reported == 0,
            vacuous: self.reported == 0 && self.relevant == 0,
        }
    }
}

pub fn prf1<T: Ord>(reported: &BTreeSet<T>, truth: &BTreeSet<T>) -> Prf1 {
    Counts::of(reported, truth).prf1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VersionMetrics {
    /// Share of true positives whose version is exact.
    pub precision: f64,
    pub mean_distance: f64,
    pub true_positives: usize,
}

/// Version precision and mean version distance over `(identified, true)`
/// pairs of true-positive libraries. Both are 0 when there are none.
pub fn version_metrics(results: &[(Version, Version)], w: &VersionDistanceWeights) -> VersionMetrics {
    let n = results.len();
    if n == 0 {
        return VersionMetrics {
            precision: 0.0,
            mean_distance: 0.0,
            true_positives: 0,
        };
    }
    let exact = results.iter().filter(|(a, b)| a.triple() == b.triple()).count();
    let total: f64 = results.iter().map(|(a, b)| version_distance(a, b, w)).sum();
    VersionMetrics {
        precision: exact as f64 / n as f64,
        mean_distance: total / n as f64,
        true_positives: n,
    }
}

/// For each `k` in `ks`, the fraction of queries whose counterpart is among
/// the top-`k` results.
pub fn recall_at_k(queries: &[(Vec<f64>, VectorId)], store: &VectorStore, ks: &[usize]) -> Result<Vec<f64>> {
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let mut found = vec![0usize; ks.len()];
    for (q, want) in queries {
        let hits = store.topk(q, max_k)?;
        let rank = hits
            .iter()
            .position(|h| h.function == want.function && h.unit == want.unit);
        for (i, &k) in ks.iter().enumerate() {
            if rank.is_some_and(|r| r < k) {
                found[i] += 1;
            }
        }
    }
    let n = queries.len().max(1) as f64;
    Ok(found.into_iter().map(|f| f as f64 / n).collect())
}

/// Area under the ROC curve of scores for positives against negatives,
/// counting ties as one half.
pub fn roc_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    if positives.is_empty() || negatives.is_empty() {
        return 0.5;
    }
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid_rank = (i + j + 1) as f64 / 2.0;
        rank_sum += mid_rank * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let np = positives.len() as f64;
    let nn = negatives.len() as f64;
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn prf1_examples() {
        let p = prf1(&set(&["x"]), &set(&["x"]));
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = prf1(&set(&["a", "b", "c", "d"]), &set(&["a", "b", "e"]));
        assert_eq!(p.precision, 0.5);
        assert!((p.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.f1 - 4.0 / 7.0).abs() < 1e-15);
        let p = prf1(&set(&[]), &set(&["a"]));
        assert!(p.precision_undefined && !p.vacuous);
        assert_eq!((p.precision, p.recall), (0.0, 0.0));
        let p = prf1::<String>(&set(&[]), &set(&[]));
        assert!(p.vacuous);
    }

    #[test]
    fn auc_extremes() {
        assert_eq!(roc_auc(&[0.9, 0.8], &[0.1, 0.2]), 1.0);
        assert_eq!(roc_auc(&[0.1], &[0.9]), 0.0);
        assert_eq!(roc_auc(&[0.5], &[0.5]), 0.5);
    }
}
