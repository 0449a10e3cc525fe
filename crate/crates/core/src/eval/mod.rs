//! Metrics, aggregation, misclassification breakdowns and significance tests.
//!
//! Artifacts are the positive class: recall is the fraction of artifact
//! epochs detected, specificity the fraction of non-artifact epochs kept.

pub mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::Architecture;
use crate::model::{ArtifactKind, EpochRef, Label, TaskId, TaskSetName};
use crate::xplan::{Analysis, ScopeKind};

pub use stats::{
    kendall_counts, kendall_tau, wilcoxon_signed_rank, KendallCounts, KendallResult, WilcoxonMethod, WilcoxonResult,
};

/// Significance level applied to every reported test.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

pub fn is_significant(p_value: f64) -> bool {
    p_value < SIGNIFICANCE_LEVEL
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u32,
    #[serde(rename = "fn")]
    pub fn_: u32,
    pub tn: u32,
    pub fp: u32,
}

impl ConfusionCounts {
    pub fn recall(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_) as f64
    }

    pub fn specificity(&self) -> f64 {
        self.tn as f64 / (self.tn + self.fp) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub counts: ConfusionCounts,
    pub recall: f64,
    pub specificity: f64,
    pub balanced_accuracy: f64,
}

/// Scores hard predictions against truths (`true` = artifact).
pub fn score(predictions: &[bool], truths: &[bool]) -> Result<Scores> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        match (t, p) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
        }
    }
    if c.tp + c.fn_ == 0 || c.tn + c.fp == 0 {
        return Err(Error::Undefined(
            "recall and specificity need both classes in the validation set".into(),
        ));
    }
    Ok(Scores::from_counts(c))
}

impl Scores {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        let recall = counts.recall();
        let specificity = counts.specificity();
        Scores {
            counts,
            recall,
            specificity,
            balanced_accuracy: balanced_accuracy(recall, specificity),
        }
    }
}

pub fn balanced_accuracy(recall: f64, specificity: f64) -> f64 {
    (recall + specificity) / 2.0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Misclassified {
    pub epoch: EpochRef,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub task_id: Option<TaskId>,
    pub true_label: Label,
    pub predicted_label: Label,
}

/// Outcome of one trained split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub analysis: Analysis,
    /// Artifact kind of the training data.
    pub train_kind: ArtifactKind,
    pub scope: ScopeKind,
    pub task_set: TaskSetName,
    pub subject: String,
    pub fold: u32,
    pub cumulative_repetitions: u32,
    pub architecture: Architecture,
    pub recall: f64,
    pub specificity: f64,
    pub balanced_accuracy: f64,
    pub counts: ConfusionCounts,
    /// Artifact validation epochs per task.
    pub validated_by_task: BTreeMap<TaskId, u32>,
    pub misclassified: Vec<Misclassified>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdKind {
    Population,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
}

/// Linear interpolation between order statistics at `(n - 1) q`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn aggregate(values: &[f64]) -> Result<Summary> {
    aggregate_with(values, StdKind::Population)
}

pub fn aggregate_with(values: &[f64], std_kind: StdKind) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Undefined("empty group".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // summing in sorted order keeps the result permutation-invariant
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let ss: f64 = sorted.iter().map(|v| (v - mean).powi(2)).sum();
    let denom = match std_kind {
        StdKind::Population => n as f64,
        StdKind::Sample if n > 1 => (n - 1) as f64,
        StdKind::Sample => return Err(Error::Undefined("sample std needs two values".into())),
    };
    Ok(Summary {
        n,
        mean,
        std: (ss / denom).sqrt(),
        p10: percentile(&sorted, 0.10),
        p25: percentile(&sorted, 0.25),
        p50: percentile(&sorted, 0.50),
        p75: percentile(&sorted, 0.75),
        p90: percentile(&sorted, 0.90),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Recall,
    Specificity,
    BalancedAccuracy,
}

impl Metric {
    pub fn of(self, r: &ResultRecord) -> f64 {
        match self {
            Metric::Recall => r.recall,
            Metric::Specificity => r.specificity,
            Metric::BalancedAccuracy => r.balanced_accuracy,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Recall => "recall",
            Metric::Specificity => "specificity",
            Metric::BalancedAccuracy => "balanced_accuracy",
        }
    }
}

/// Summaries of `metric` over records grouped by `key`.
pub fn aggregate_by<K: Ord>(
    records: &[ResultRecord],
    key: impl Fn(&ResultRecord) -> K,
    metric: Metric,
) -> Result<BTreeMap<K, Summary>> {
    let mut groups: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry(key(r)).or_default().push(metric.of(r));
    }
    groups.into_iter().map(|(k, v)| aggregate(&v).map(|s| (k, s))).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MisclassRow {
    pub task_id: TaskId,
    pub subject: String,
    pub cumulative_repetitions: u32,
    pub count: u32,
}

/// Misclassified artifact epochs counted per (task, subject, cumulative
/// repetitions), sorted by key.
pub fn misclassification_table(records: &[ResultRecord]) -> Vec<MisclassRow> {
    let mut counts: BTreeMap<(TaskId, String, u32), u32> = BTreeMap::new();
    for r in records {
        for m in &r.misclassified {
            if let Some(t) = m.task_id {
                *counts
                    .entry((t, r.subject.clone(), r.cumulative_repetitions))
                    .or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|((task_id, subject, cumulative_repetitions), count)| MisclassRow {
            task_id,
            subject,
            cumulative_repetitions,
            count,
        })
        .collect()
}

/// Per-task miss rate: misclassified artifact epochs over validated ones.
pub fn task_miss_rates(records: &[ResultRecord]) -> BTreeMap<TaskId, (u32, u32)> {
    let mut out: BTreeMap<TaskId, (u32, u32)> = BTreeMap::new();
    for r in records {
        for (&t, &n) in &r.validated_by_task {
            out.entry(t).or_default().1 += n;
        }
        for m in &r.misclassified {
            if let Some(t) = m.task_id {
                out.entry(t).or_default().0 += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_arithmetic() {
        let truths = [vec![true; 10], vec![false; 3]].concat();
        let mut preds = truths.clone();
        preds[0] = false;
        let s = score(&preds, &truths).unwrap();
        assert_eq!(
            s.counts,
            ConfusionCounts {
                tp: 9,
                fn_: 1,
                tn: 3,
                fp: 0
            }
        );
        assert_eq!((s.recall, s.specificity), (0.9, 1.0));
        assert!((balanced_accuracy(0.71, 0.91) - 0.81).abs() < 1e-12);
        let inv: Vec<bool> = truths.iter().map(|t| !t).collect();
        let s = score(&inv, &truths).unwrap();
        assert_eq!((s.recall, s.specificity), (0.0, 0.0));
        assert!(score(&[true], &[true]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[0.7]).unwrap();
        assert_eq!((s.mean, s.std), (0.7, 0.0));
        let s = aggregate(&[0.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.std), (0.5, 0.5));
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        let s = aggregate(&v).unwrap();
        assert!((s.p50 - 5.5).abs() < 1e-12);
        assert!((s.p10 - 1.9).abs() < 1e-12);
        assert!(aggregate(&[]).is_err());
        let s = aggregate_with(&[0.0, 1.0], StdKind::Sample).unwrap();
        assert!((s.std - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn significance_threshold() {
        assert!(is_significant(0.049));
        assert!(!is_significant(0.05));
    }
}
