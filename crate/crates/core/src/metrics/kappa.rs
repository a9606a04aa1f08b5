use std::fmt;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::SymptomSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaBand {
    Poor,
    Fair,
    Moderate,
    Substantial,
    Perfect,
}

impl KappaBand {
    pub fn label(self) -> &'static str {
        match self {
            KappaBand::Perfect => "Perfect agreement",
            KappaBand::Substantial => "Substantial agreement",
            KappaBand::Moderate => "Moderate agreement",
            KappaBand::Fair => "Fair agreement",
            KappaBand::Poor => "Poor agreement",
        }
    }
}

impl fmt::Display for KappaBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Bands are closed below and open above; exactly 1.0 is perfect.
pub fn interpret_kappa(kappa: f64) -> KappaBand {
    if kappa >= 1.0 {
        KappaBand::Perfect
    } else if kappa >= 0.8 {
        KappaBand::Substantial
    } else if kappa >= 0.6 {
        KappaBand::Moderate
    } else if kappa >= 0.4 {
        KappaBand::Fair
    } else {
        KappaBand::Poor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub kappa: f64,
    /// Mean observed pairwise agreement.
    pub p_bar: f64,
    /// Expected chance agreement.
    pub p_e: f64,
    pub n_items: usize,
    pub n_raters: usize,
    pub n_categories: usize,
    pub interpretation: KappaBand,
}

/// Fleiss' kappa over an items x categories table of rating counts. When
/// every rating falls in one category (`P_e = 1`) kappa is 1.
pub fn fleiss_kappa(table: &[Vec<usize>], n_raters: usize) -> Result<KappaReport, MetricsError> {
    if n_raters < 2 {
        return Err(MetricsError::TooFewRaters);
    }
    let n_categories = table.first().ok_or(MetricsError::Empty)?.len();
    for (item, row) in table.iter().enumerate() {
        if row.len() != n_categories {
            return Err(MetricsError::RowWidth {
                item,
                expected: n_categories,
                got: row.len(),
            });
        }
        let got: usize = row.iter().sum();
        if got != n_raters {
            return Err(MetricsError::RowSum {
                item,
                expected: n_raters,
                got,
            });
        }
    }
    let n_items = table.len();
    let r = n_raters as f64;
    let p_bar = table
        .iter()
        .map(|row| (row.iter().map(|&c| c * c).sum::<usize>() - n_raters) as f64 / (r * (r - 1.0)))
        .sum::<f64>()
        / n_items as f64;
    let p_e: f64 = (0..n_categories)
        .map(|j| {
            let p = table.iter().map(|row| row[j]).sum::<usize>() as f64 / (n_items as f64 * r);
            p * p
        })
        .sum();
    let kappa = if (1.0 - p_e).abs() < 1e-12 {
        1.0
    } else {
        ((p_bar - p_e) / (1.0 - p_e)).min(1.0)
    };
    Ok(KappaReport {
        kappa,
        p_bar,
        p_e,
        n_items,
        n_raters,
        n_categories,
        interpretation: interpret_kappa(kappa),
    })
}

/// Counts per item of how many annotators chose each category.
/// `annotations[a][i]` is annotator `a`'s choice for item `i`; choices not
/// in `categories` are ignored, which the row-sum check then reports.
pub fn rating_table<T: PartialEq>(annotations: &[Vec<T>], categories: &[T]) -> Result<Vec<Vec<usize>>, MetricsError> {
    let n_items = annotations.first().ok_or(MetricsError::Empty)?.len();
    for (annotator, a) in annotations.iter().enumerate() {
        if a.len() != n_items {
            return Err(MetricsError::InconsistentCoverage {
                annotator,
                expected: n_items,
                got: a.len(),
            });
        }
    }
    Ok((0..n_items)
        .map(|i| {
            categories
                .iter()
                .map(|c| annotations.iter().filter(|a| a[i] == *c).count())
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelKappa {
    pub label: String,
    pub report: KappaReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilabelKappa {
    /// Labels with both values observed.
    pub per_label: Vec<LabelKappa>,
    /// Labels every annotator marked the same way on every item.
    pub excluded: Vec<String>,
    /// Unweighted mean over `per_label`; `None` when all were excluded.
    pub macro_kappa: Option<f64>,
    pub interpretation: Option<KappaBand>,
}

/// Binary Fleiss' kappa per label, macro-averaged. `annotations[a][i]` is
/// annotator `a`'s symptom set for item `i`.
pub fn multilabel_kappa(annotations: &[Vec<SymptomSet>], labels: &[String]) -> Result<MultilabelKappa, MetricsError> {
    if annotations.len() < 2 {
        return Err(MetricsError::TooFewRaters);
    }
    let n_items = annotations[0].len();
    if n_items == 0 {
        return Err(MetricsError::Empty);
    }
    for (annotator, a) in annotations.iter().enumerate() {
        if a.len() != n_items {
            return Err(MetricsError::InconsistentCoverage {
                annotator,
                expected: n_items,
                got: a.len(),
            });
        }
        if let Some(&label) = a.iter().flatten().find(|&&l| l >= labels.len()) {
            return Err(MetricsError::LabelOutOfRange {
                label,
                labels: labels.len(),
            });
        }
    }
    let raters = annotations.len();
    let mut per_label = Vec::new();
    let mut excluded = Vec::new();
    for (l, name) in labels.iter().enumerate() {
        let table: Vec<Vec<usize>> = (0..n_items)
            .map(|i| {
                let present = annotations.iter().filter(|a| a[i].contains(&l)).count();
                vec![present, raters - present]
            })
            .collect();
        let used = table.iter().map(|r| r[0]).sum::<usize>();
        if used == 0 || used == raters * n_items {
            excluded.push(name.clone());
            continue;
        }
        per_label.push(LabelKappa {
            label: name.clone(),
            report: fleiss_kappa(&table, raters)?,
        });
    }
    let macro_kappa =
        (!per_label.is_empty()).then(|| per_label.iter().map(|k| k.report.kappa).sum::<f64>() / per_label.len() as f64);
    Ok(MultilabelKappa {
        per_label,
        excluded,
        macro_kappa,
        interpretation: macro_kappa.map(interpret_kappa),
    })
}
