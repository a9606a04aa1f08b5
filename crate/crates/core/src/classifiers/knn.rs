//! k-nearest neighbours under cosine distance.

use serde::{Deserialize, Serialize};

use crate::features::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    n_classes: usize,
    dim: usize,
    samples: Vec<SparseVector>,
    labels: Vec<usize>,
}

/// `1 - cos(a, b)`; a zero vector is at distance 1 from everything.
pub fn cosine_distance(a: &SparseVector, b: &SparseVector) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - a.dot(b) / (na * nb)
}

impl KnnModel {
    pub(crate) fn fit(x: &[SparseVector], y: &[usize], n_classes: usize, params: &KnnParams) -> Self {
        KnnModel {
            k: params.k,
            n_classes,
            dim: x[0].dim(),
            samples: x.to_vec(),
            labels: y.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The `k` nearest training labels, ordered by (distance, label).
    pub fn neighbours(&self, x: &SparseVector) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = self
            .samples
            .iter()
            .zip(&self.labels)
            .map(|(s, &l)| (cosine_distance(x, s), l))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(self.k);
        all
    }

    /// Vote fractions among the neighbours.
    pub fn predict_proba(&self, x: &SparseVector) -> Vec<f64> {
        let nn = self.neighbours(x);
        let mut votes = vec![0.0; self.n_classes];
        for (_, l) in &nn {
            votes[*l] += 1.0 / nn.len() as f64;
        }
        votes
    }
}
