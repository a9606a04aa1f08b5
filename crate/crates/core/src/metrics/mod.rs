//! Evaluation metrics and inter-annotator agreement.
//!
//! Zero denominators yield 0 for precision, recall and F1. This pulls
//! macro averages down for classes that are never predicted.

mod kappa;
mod table;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SymptomSet;

pub use kappa::{
    fleiss_kappa, interpret_kappa, multilabel_kappa, rating_table, KappaBand, KappaReport, LabelKappa, MultilabelKappa,
};
pub use table::{render_table, TableRow};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{gold} gold labels but {pred} predictions")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("label {label} outside vocabulary of size {labels}")]
    LabelOutOfRange { label: usize, labels: usize },
    #[error("item {item}: ratings sum to {got}, expected {expected}")]
    RowSum { item: usize, expected: usize, got: usize },
    #[error("item {item}: expected {expected} categories, got {got}")]
    RowWidth { item: usize, expected: usize, got: usize },
    #[error("at least two raters are required")]
    TooFewRaters,
    #[error("annotator {annotator} rated {got} items, expected {expected}")]
    InconsistentCoverage { annotator: usize, expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// TP / (TP + FP).
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// TP / (TP + FN).
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall, computed from counts as
    /// 2TP / (2TP + FP + FN).
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    /// (TP + TN) / total.
    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// One-vs-rest counts for `target`.
pub fn confusion_counts<T: PartialEq>(gold: &[T], pred: &[T], target: &T) -> Result<ConfusionCounts, MetricsError> {
    check_lengths(gold.len(), pred.len())?;
    let mut c = ConfusionCounts::default();
    for (g, p) in gold.iter().zip(pred) {
        match (g == target, p == target) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn check_lengths(gold: usize, pred: usize) -> Result<(), MetricsError> {
    if gold != pred {
        return Err(MetricsError::LengthMismatch { gold, pred });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// One-vs-rest (TP + TN) / total for this class.
    pub accuracy: f64,
    pub support: usize,
    pub counts: ConfusionCounts,
}

impl ClassMetrics {
    fn new(label: String, counts: ConfusionCounts) -> Self {
        ClassMetrics {
            label,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            accuracy: counts.accuracy(),
            support: counts.tp + counts.fn_,
            counts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub per_class: Vec<ClassMetrics>,
    pub micro: Averages,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    pub weighted: Averages,
    /// Exact-match fraction for single-label data; fraction of correct
    /// indicator cells for multi-label data.
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subset_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hamming_loss: Option<f64>,
}

impl EvalReport {
    fn aggregate(n: usize, per_class: Vec<ClassMetrics>, accuracy: f64) -> Self {
        let summed = per_class.iter().fold(ConfusionCounts::default(), |a, c| a + c.counts);
        let micro = Averages {
            precision: summed.precision(),
            recall: summed.recall(),
            f1: summed.f1(),
        };
        let k = per_class.len().max(1) as f64;
        let macro_avg = Averages {
            precision: per_class.iter().map(|c| c.precision).sum::<f64>() / k,
            recall: per_class.iter().map(|c| c.recall).sum::<f64>() / k,
            f1: per_class.iter().map(|c| c.f1).sum::<f64>() / k,
        };
        let support: usize = per_class.iter().map(|c| c.support).sum();
        let weigh = |f: fn(&ClassMetrics) -> f64| {
            if support == 0 {
                0.0
            } else {
                per_class.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / support as f64
            }
        };
        let weighted = Averages {
            precision: weigh(|c| c.precision),
            recall: weigh(|c| c.recall),
            f1: weigh(|c| c.f1),
        };
        EvalReport {
            n,
            per_class,
            micro,
            macro_avg,
            weighted,
            accuracy,
            subset_accuracy: None,
            hamming_loss: None,
        }
    }

    pub fn class(&self, label: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.label == label)
    }

    /// Every score in the report, for range checks.
    pub fn scores(&self) -> Vec<f64> {
        let mut out = vec![self.accuracy];
        for a in [self.micro, self.macro_avg, self.weighted] {
            out.extend([a.precision, a.recall, a.f1]);
        }
        for c in &self.per_class {
            out.extend([c.precision, c.recall, c.f1, c.accuracy]);
        }
        out.extend(self.subset_accuracy);
        out.extend(self.hamming_loss);
        out
    }
}

/// Per-class one-vs-rest metrics over `classes` plus aggregates.
pub fn evaluate_multiclass<T: PartialEq + fmt::Display>(
    gold: &[T],
    pred: &[T],
    classes: &[T],
) -> Result<EvalReport, MetricsError> {
    check_lengths(gold.len(), pred.len())?;
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let per_class = classes
        .iter()
        .map(|c| Ok(ClassMetrics::new(c.to_string(), confusion_counts(gold, pred, c)?)))
        .collect::<Result<Vec<_>, MetricsError>>()?;
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(EvalReport::aggregate(gold.len(), per_class, ratio(correct, gold.len())))
}

/// Per-label binary metrics over the indicator matrix.
pub fn evaluate_multilabel(
    gold: &[SymptomSet],
    pred: &[SymptomSet],
    labels: &[String],
) -> Result<EvalReport, MetricsError> {
    check_lengths(gold.len(), pred.len())?;
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let l = labels.len();
    if let Some(&label) = gold.iter().chain(pred).flatten().find(|&&i| i >= l) {
        return Err(MetricsError::LabelOutOfRange { label, labels: l });
    }
    let mut counts = vec![ConfusionCounts::default(); l];
    let mut exact = 0;
    let mut wrong_cells = 0;
    for (g, p) in gold.iter().zip(pred) {
        if g == p {
            exact += 1;
        }
        for (i, c) in counts.iter_mut().enumerate() {
            match (g.contains(&i), p.contains(&i)) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        wrong_cells += g.symmetric_difference(p).count();
    }
    let n = gold.len();
    let per_class = labels
        .iter()
        .zip(counts)
        .map(|(label, c)| ClassMetrics::new(label.clone(), c))
        .collect();
    let hamming = ratio(wrong_cells, n * l);
    let mut report = EvalReport::aggregate(n, per_class, 1.0 - hamming);
    report.subset_accuracy = Some(ratio(exact, n));
    report.hamming_loss = Some(hamming);
    Ok(report)
}
