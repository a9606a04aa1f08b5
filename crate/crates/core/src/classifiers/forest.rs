//! Random forests: bagged CART trees with per-split feature subsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, MaxFeatures, TreeParams};
use crate::features::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    #[serde(flatten)]
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            bootstrap: true,
            tree: TreeParams {
                max_features: MaxFeatures::Sqrt,
                ..TreeParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    dim: usize,
    n_classes: usize,
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Tree `t` draws from its own ChaCha stream `t` under `seed`, so the
    /// forest is identical however the trees are scheduled.
    pub(crate) fn fit(x: &[SparseVector], y: &[usize], n_classes: usize, params: &ForestParams, seed: u64) -> Self {
        let n = x.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let indices: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit_indices(x, y, n_classes, &params.tree, &indices, Some(&mut rng))
            })
            .collect();
        RandomForest {
            dim: x[0].dim(),
            n_classes,
            trees,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Fraction of trees voting for each class.
    pub fn predict_proba(&self, x: &SparseVector) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for tree in &self.trees {
            votes[tree.predict(x)] += 1.0 / self.trees.len() as f64;
        }
        votes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::argmax;

    fn data() -> (Vec<SparseVector>, Vec<usize>) {
        let x: Vec<_> = (0..40)
            .map(|i| {
                let a = (i % 7) as f64 / 7.0;
                let b = (i % 5) as f64 / 5.0;
                let c = (i % 3) as f64 / 3.0;
                SparseVector::from_dense(&[a, b, c, a * b])
            })
            .collect();
        let y = (0..40).map(|i| (i % 7 + i % 5) % 3).collect();
        (x, y)
    }

    #[test]
    fn single_full_tree_equals_decision_tree() {
        let (x, y) = data();
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            tree: TreeParams::default(),
        };
        let rf = RandomForest::fit(&x, &y, 3, &params, 9);
        let dt = DecisionTree::fit::<ChaCha8Rng>(&x, &y, 3, &TreeParams::default(), None);
        assert_eq!(rf.trees()[0], dt);
        for xi in &x {
            assert_eq!(argmax(&rf.predict_proba(xi)), dt.predict(xi));
        }
    }

    #[test]
    fn seeded_and_deterministic() {
        let (x, y) = data();
        let params = ForestParams {
            n_trees: 10,
            ..ForestParams::default()
        };
        let a = RandomForest::fit(&x, &y, 3, &params, 1);
        assert_eq!(a, RandomForest::fit(&x, &y, 3, &params, 1));
        assert_ne!(a, RandomForest::fit(&x, &y, 3, &params, 2));
        let p = a.predict_proba(&x[0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
