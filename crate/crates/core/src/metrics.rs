//! Per-head classification metrics: accuracy, precision, recall, F1 and ROC AUC.

use alloc::string::String;
use alloc::vec::Vec;

use crate::bundle::ModelBundle;
use crate::corpus::{CorpusError, LabeledExample};
use crate::model::exceeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Counts predictions `score > threshold` against `labels`.
    pub fn from_scores(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (exceeds(s, threshold), y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// Zero when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Zero when there are no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; zero when both are zero.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Area under the ROC curve via the rank statistic, with tied scores
/// sharing their mid-rank. `None` when only one class is present.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; positions i..=j share the mean rank.
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += mid_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HeadMetrics {
    pub head: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the test set holds a single class for this head.
    pub auc: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
}

impl HeadMetrics {
    pub fn from_scores(head: impl Into<String>, scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let c = Confusion::from_scores(scores, labels, threshold);
        HeadMetrics {
            head: head.into(),
            accuracy: c.accuracy(),
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            auc: roc_auc(scores, labels),
            positives: c.tp + c.fn_,
            negatives: c.tn + c.fp,
        }
    }
}

/// Scores every example with `bundle` and reports metrics per head.
pub fn evaluate(
    bundle: &ModelBundle,
    test: &[LabeledExample],
    threshold: f64,
) -> Result<Vec<HeadMetrics>, CorpusError> {
    if test.is_empty() {
        return Err(CorpusError::EmptyTestSet);
    }
    let heads = bundle.head_names();
    let targets: Vec<Vec<f64>> =
        test.iter().enumerate().map(|(i, ex)| ex.targets(heads, i)).collect::<Result<_, _>>()?;
    let scores: Vec<Vec<f64>> = test.iter().map(|ex| bundle.head_scores(&ex.text)).collect();
    Ok(heads
        .iter()
        .enumerate()
        .map(|(h, name)| {
            let s: Vec<f64> = scores.iter().map(|row| row[h]).collect();
            let y: Vec<bool> = targets.iter().map(|row| row[h] == 1.0).collect();
            HeadMetrics::from_scores(name.clone(), &s, &y, threshold)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Pairwise definition of AUC, used as an independent check.
    fn auc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            for (j, &yj) in labels.iter().enumerate() {
                if yi && !yj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn perfect_classifier() {
        let m = HeadMetrics::from_scores("h", &[0.9, 0.1, 0.8, 0.2], &[true, false, true, false], 0.5);
        assert_eq!((m.accuracy, m.f1, m.auc), (1.0, 1.0, Some(1.0)));
    }

    #[test]
    fn hand_counted_f1() {
        // TP=2, FP=1, FN=1, TN=1
        let scores = [0.9, 0.8, 0.7, 0.2, 0.1];
        let labels = [true, true, false, true, false];
        let c = Confusion::from_scores(&scores, &labels, 0.5);
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (2, 1, 1, 1));
        assert!((c.precision() - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.recall() - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.f1() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_auc_undefined() {
        assert_eq!(roc_auc(&[0.1, 0.9], &[true, true]), None);
        assert_eq!(roc_auc(&[0.1, 0.9], &[false, false]), None);
    }

    #[test]
    fn ties_use_midrank() {
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(roc_auc(&[0.5, 0.5, 0.9, 0.1], &[true, false, true, false]), Some(0.875));
    }

    #[test]
    fn threshold_zero_recalls_everything() {
        let m = HeadMetrics::from_scores("h", &[1e-300, 0.3], &[true, false], 0.0);
        assert_eq!(m.recall, 1.0);
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_definition(
            data in proptest::collection::vec((0u8..6, any::<bool>()), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 5.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, y)| *y).collect();
            match roc_auc(&scores, &labels) {
                Some(auc) => {
                    prop_assert!((auc - auc_pairwise(&scores, &labels)).abs() < 1e-12);
                    prop_assert!((0.0..=1.0).contains(&auc));
                }
                None => prop_assert!(labels.iter().all(|&y| y) || labels.iter().all(|&y| !y)),
            }
        }

        #[test]
        fn auc_invariant_under_monotone_transform(
            data in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
            let squared: Vec<f64> = scores.iter().map(|s| s * s).collect();
            let labels: Vec<bool> = data.iter().map(|(_, y)| *y).collect();
            prop_assert_eq!(roc_auc(&scores, &labels), roc_auc(&squared, &labels));
        }

        #[test]
        fn metrics_in_unit_interval(
            data in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 1..40),
            threshold in 0.0f64..1.0,
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
            let labels: Vec<bool> = data.iter().map(|(_, y)| *y).collect();
            let m = HeadMetrics::from_scores("h", &scores, &labels, threshold);
            for v in [m.accuracy, m.precision, m.recall, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if m.precision + m.recall > 0.0 {
                let harmonic = 2.0 * m.precision * m.recall / (m.precision + m.recall);
                prop_assert!((m.f1 - harmonic).abs() < 1e-12);
            }
        }
    }
}
