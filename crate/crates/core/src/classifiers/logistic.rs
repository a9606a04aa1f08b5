//! Multinomial logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::softmax_in_place;
use crate::features::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// L2 penalty on the weights (the bias is not penalized).
    pub l2: f64,
    /// Stop when the loss changes by less than this between iterations.
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            learning_rate: 0.1,
            max_iters: 500,
            l2: 1e-4,
            tol: 1e-6,
        }
    }
}

/// Loss and gradient at a parameter point.
#[derive(Debug, Clone)]
pub struct Objective {
    pub loss: f64,
    /// Row-major `n_classes x dim`.
    pub grad_weights: Vec<f64>,
    pub grad_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    n_classes: usize,
    dim: usize,
    /// Row-major `n_classes x dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    iterations: usize,
}

impl LogisticModel {
    /// Builds a model from raw parameters. Panics on inconsistent sizes.
    pub fn from_parameters(n_classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Self {
        assert_eq!(weights.len(), n_classes * dim, "weights must be n_classes x dim");
        assert_eq!(bias.len(), n_classes, "one bias per class");
        LogisticModel {
            n_classes,
            dim,
            weights,
            bias,
            iterations: 0,
        }
    }

    pub(crate) fn fit(x: &[SparseVector], y: &[usize], n_classes: usize, params: &LogisticParams) -> Self {
        let dim = x[0].dim();
        let mut model = Self::from_parameters(n_classes, dim, vec![0.0; n_classes * dim], vec![0.0; n_classes]);
        let mut previous = f64::INFINITY;
        for iter in 0..params.max_iters {
            let obj = model.objective(x, y, params.l2);
            for (w, g) in model.weights.iter_mut().zip(&obj.grad_weights) {
                *w -= params.learning_rate * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&obj.grad_bias) {
                *b -= params.learning_rate * g;
            }
            model.iterations = iter + 1;
            if (previous - obj.loss).abs() < params.tol {
                break;
            }
            previous = obj.loss;
        }
        log::debug!("logistic regression stopped after {} iterations", model.iterations);
        model
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Gradient steps taken during training.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    fn logits(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.n_classes)
            .map(|c| self.bias[c] + x.dot_dense(&self.weights[c * self.dim..(c + 1) * self.dim]))
            .collect()
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Vec<f64> {
        let mut z = self.logits(x);
        softmax_in_place(&mut z);
        z
    }

    /// Mean cross-entropy plus `l2/2 * ||W||^2`, with its gradient.
    pub fn objective(&self, x: &[SparseVector], y: &[usize], l2: f64) -> Objective {
        let n = x.len() as f64;
        let mut loss = 0.0;
        let mut grad_weights = vec![0.0; self.weights.len()];
        let mut grad_bias = vec![0.0; self.n_classes];
        for (xi, &yi) in x.iter().zip(y) {
            let mut z = self.logits(xi);
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += log_sum - z[yi];
            softmax_in_place(&mut z);
            z[yi] -= 1.0;
            for (c, &err) in z.iter().enumerate() {
                grad_bias[c] += err / n;
                let row = &mut grad_weights[c * self.dim..(c + 1) * self.dim];
                for &(j, v) in xi.entries() {
                    row[j] += err * v / n;
                }
            }
        }
        loss /= n;
        let mut penalty = 0.0;
        for (g, w) in grad_weights.iter_mut().zip(&self.weights) {
            *g += l2 * w;
            penalty += w * w;
        }
        loss += 0.5 * l2 * penalty;
        Objective {
            loss,
            grad_weights,
            grad_bias,
        }
    }
}
