//! Multinomial naive Bayes with additive smoothing.

use serde::{Deserialize, Serialize};

use super::{softmax_in_place, ClassifierError};
use crate::features::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesParams {
    pub alpha: f64,
}

impl Default for NaiveBayesParams {
    fn default() -> Self {
        NaiveBayesParams { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    dim: usize,
    /// `ln P(c)`; `None` for classes with no training samples.
    log_prior: Vec<Option<f64>>,
    /// Row-major `n_classes x dim` of `ln P(f | c)`.
    feature_log_prob: Vec<f64>,
}

impl NaiveBayesModel {
    pub(crate) fn fit(
        x: &[SparseVector],
        y: &[usize],
        n_classes: usize,
        params: &NaiveBayesParams,
    ) -> Result<Self, ClassifierError> {
        let dim = x[0].dim();
        let mut class_count = vec![0usize; n_classes];
        let mut feature_count = vec![0.0; n_classes * dim];
        for (xi, &yi) in x.iter().zip(y) {
            class_count[yi] += 1;
            for &(j, v) in xi.entries() {
                if v < 0.0 {
                    return Err(ClassifierError::NegativeFeature);
                }
                feature_count[yi * dim + j] += v;
            }
        }
        let n = x.len() as f64;
        let log_prior = class_count
            .iter()
            .map(|&c| (c > 0).then(|| (c as f64 / n).ln()))
            .collect();
        let mut feature_log_prob = vec![0.0; n_classes * dim];
        for c in 0..n_classes {
            let row = &feature_count[c * dim..(c + 1) * dim];
            let total: f64 = row.iter().sum::<f64>() + params.alpha * dim as f64;
            for j in 0..dim {
                feature_log_prob[c * dim + j] = ((row[j] + params.alpha) / total).ln();
            }
        }
        Ok(NaiveBayesModel {
            dim,
            log_prior,
            feature_log_prob,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ln P(f | c)` for one feature.
    pub fn feature_log_prob(&self, class: usize, feature: usize) -> f64 {
        self.feature_log_prob[class * self.dim + feature]
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Vec<f64> {
        let mut jll: Vec<f64> = self
            .log_prior
            .iter()
            .enumerate()
            .map(|(c, prior)| match prior {
                Some(p) => p + x.dot_dense(&self.feature_log_prob[c * self.dim..(c + 1) * self.dim]),
                None => f64::NEG_INFINITY,
            })
            .collect();
        softmax_in_place(&mut jll);
        jll
    }
}
