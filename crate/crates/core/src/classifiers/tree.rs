//! CART decision trees with Gini impurity over sparse features.
//!
//! Split search considers, for every feature that varies within the node,
//! the midpoints between consecutive distinct observed values (implicit
//! zeros included). Samples with `x[f] <= threshold` go left. The split
//! with the lowest weighted child impurity wins; ties go to the lower
//! feature index, then the lower threshold. A split is taken even when it
//! does not reduce impurity, so an unlimited tree separates any
//! consistent training set.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::features::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    /// `ceil(sqrt(dim))` features per split.
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, dim: usize) -> usize {
        match self {
            MaxFeatures::All => dim,
            MaxFeatures::Sqrt => ((dim as f64).sqrt().ceil() as usize).max(1),
            MaxFeatures::Count(n) => n.min(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            max_features: MaxFeatures::All,
        }
    }
}

impl TreeParams {
    pub(crate) fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidHyperparameter(m.to_string()));
        if self.max_depth == Some(0) {
            return bad("max_depth must be >= 1 or unlimited");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be >= 2");
        }
        if self.max_features == MaxFeatures::Count(0) {
            return bad("max_features must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        counts: Vec<usize>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    dim: usize,
    n_classes: usize,
    /// Node 0 is the root.
    nodes: Vec<Node>,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|&c| (c as f64).powi(2)).sum::<f64>() / (n as f64).powi(2)
}

struct Candidate {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

impl DecisionTree {
    /// Grows a tree on all samples. `rng` drives feature subsampling and
    /// is only consulted when `max_features` is below the number of
    /// candidate features at a node.
    pub(crate) fn fit<R: Rng>(
        x: &[SparseVector],
        y: &[usize],
        n_classes: usize,
        params: &TreeParams,
        rng: Option<&mut R>,
    ) -> Self {
        let all: Vec<usize> = (0..x.len()).collect();
        Self::fit_indices(x, y, n_classes, params, &all, rng)
    }

    /// Grows a tree on `indices`, which may repeat samples.
    pub(crate) fn fit_indices<R: Rng>(
        x: &[SparseVector],
        y: &[usize],
        n_classes: usize,
        params: &TreeParams,
        indices: &[usize],
        mut rng: Option<&mut R>,
    ) -> Self {
        let dim = x[0].dim();
        let per_split = params.max_features.resolve(dim);
        let mut nodes = Vec::new();
        let mut scratch = Scratch::new(dim);
        let mut stack = vec![(0usize, indices.to_vec(), 0usize)];
        nodes.push(Node::Leaf { counts: Vec::new() });
        while let Some((id, members, depth)) = stack.pop() {
            let mut counts = vec![0usize; n_classes];
            members.iter().for_each(|&i| counts[y[i]] += 1);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_ok = params.max_depth.is_none_or(|d| depth < d);
            let split = if pure || !depth_ok || members.len() < params.min_samples_split {
                None
            } else {
                best_split(x, y, &members, &counts, per_split, rng.as_deref_mut(), &mut scratch)
            };
            match split {
                None => nodes[id] = Node::Leaf { counts },
                Some(c) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        members.iter().partition(|&&i| x[i].get(c.feature) <= c.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { counts: Vec::new() });
                    let right = nodes.len();
                    nodes.push(Node::Leaf { counts: Vec::new() });
                    nodes[id] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        DecisionTree { dim, n_classes, nodes }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_counts(&self, x: &SparseVector) -> &[usize] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x.get(*feature) <= *threshold { *left } else { *right },
            }
        }
    }

    /// Class frequencies in the reached leaf.
    pub fn predict_proba(&self, x: &SparseVector) -> Vec<f64> {
        let counts = self.leaf_counts(x);
        let total: usize = counts.iter().sum();
        if total == 0 {
            return vec![1.0 / self.n_classes as f64; self.n_classes];
        }
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    }

    pub fn predict(&self, x: &SparseVector) -> usize {
        super::argmax(&self.predict_proba(x))
    }
}

/// Per-feature buffers reused across the nodes of one tree.
struct Scratch {
    /// Stored-entry count, min and max per feature in the current node.
    stats: Vec<(usize, f64, f64)>,
    touched: Vec<usize>,
    chosen: Vec<bool>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch {
            stats: vec![(0, 0.0, 0.0); dim],
            touched: Vec::new(),
            chosen: vec![false; dim],
        }
    }
}

fn best_split<R: Rng>(
    x: &[SparseVector],
    y: &[usize],
    members: &[usize],
    counts: &[usize],
    per_split: usize,
    rng: Option<&mut R>,
    scratch: &mut Scratch,
) -> Option<Candidate> {
    let n = members.len();
    for &i in members {
        for &(f, v) in x[i].entries() {
            if v == 0.0 {
                continue;
            }
            let s = &mut scratch.stats[f];
            if s.0 == 0 {
                *s = (0, v, v);
                scratch.touched.push(f);
            }
            s.0 += 1;
            s.1 = s.1.min(v);
            s.2 = s.2.max(v);
        }
    }
    // Features that vary in the node, ascending.
    let mut varying: Vec<usize> = Vec::new();
    for f in scratch.touched.drain(..) {
        let (count, lo, hi) = scratch.stats[f];
        if count < n || lo != hi {
            varying.push(f);
        }
        scratch.stats[f].0 = 0;
    }
    if varying.is_empty() {
        return None;
    }
    varying.sort_unstable();
    if per_split < varying.len() {
        if let Some(rng) = rng {
            let mut picked: Vec<usize> = sample(rng, varying.len(), per_split).into_vec();
            picked.sort_unstable();
            varying = picked.into_iter().map(|i| varying[i]).collect();
        }
    }
    varying.iter().for_each(|&f| scratch.chosen[f] = true);

    // (feature, value, label) for the chosen features, grouped by feature.
    let mut entries: Vec<(usize, f64, usize)> = members
        .iter()
        .flat_map(|&i| x[i].entries().iter().map(move |&(f, v)| (f, v, y[i])))
        .filter(|e| e.1 != 0.0 && scratch.chosen[e.0])
        .collect();
    varying.iter().for_each(|&f| scratch.chosen[f] = false);
    entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut features: Vec<(usize, std::ops::Range<usize>)> = Vec::with_capacity(varying.len());
    let mut start = 0;
    while start < entries.len() {
        let f = entries[start].0;
        let mut end = start;
        while end < entries.len() && entries[end].0 == f {
            end += 1;
        }
        features.push((f, start..end));
        start = end;
    }

    let n_classes = counts.len();
    let mut best: Option<Candidate> = None;
    for (feature, range) in features {
        let run = &entries[range];
        // Groups of equal value in ascending order, with implicit zeros
        // inserted at their sorted position.
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        let mut nonzero = vec![0usize; n_classes];
        for &(_, v, label) in run {
            nonzero[label] += 1;
            match groups.last_mut() {
                Some((gv, gc)) if *gv == v => gc[label] += 1,
                _ => {
                    let mut gc = vec![0usize; n_classes];
                    gc[label] += 1;
                    groups.push((v, gc));
                }
            }
        }
        if run.len() < n {
            let zeros: Vec<usize> = counts.iter().zip(&nonzero).map(|(t, z)| t - z).collect();
            let at = groups.partition_point(|(v, _)| *v < 0.0);
            groups.insert(at, (0.0, zeros));
        }
        let mut left = vec![0usize; n_classes];
        let mut n_left = 0;
        for w in 0..groups.len() - 1 {
            for (l, c) in left.iter_mut().zip(&groups[w].1) {
                *l += c;
                n_left += c;
            }
            let n_right = n - n_left;
            let right_sq: f64 = counts.iter().zip(&left).map(|(t, l)| ((t - l) as f64).powi(2)).sum();
            let right_gini = if n_right == 0 { 0.0 } else { 1.0 - right_sq / (n_right as f64).powi(2) };
            let impurity = (n_left as f64 * gini(&left, n_left) + n_right as f64 * right_gini) / n as f64;
            let (lo, hi) = (groups[w].0, groups[w + 1].0);
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                best = Some(Candidate {
                    impurity,
                    feature,
                    threshold,
                });
            }
        }
    }
    best
}
