//! Classical classifiers over TF-IDF sparse vectors.
//!
//! Every model works on class indices `0..C` into a `class_list`; the
//! lowest index wins every tie. [`TrainedModel`] wraps the five
//! algorithms behind one fit/predict surface and a versioned JSON
//! envelope, and [`ovr`] builds the one-vs-rest multi-label bundle.

pub mod forest;
pub mod knn;
pub mod logistic;
pub mod naive_bayes;
pub mod ovr;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DrugClass;
use crate::features::SparseVector;

pub use forest::{ForestParams, RandomForest};
pub use knn::{KnnModel, KnnParams};
pub use logistic::{LogisticModel, LogisticParams};
pub use naive_bayes::{NaiveBayesModel, NaiveBayesParams};
pub use ovr::{binary_targets, OvrBundle, OvrMember, DEFAULT_THRESHOLD};
pub use tree::{DecisionTree, MaxFeatures, TreeParams};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    Empty,
    #[error("{samples} samples but {labels} labels")]
    LengthMismatch { samples: usize, labels: usize },
    #[error("dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0} needs at least two distinct classes")]
    SingleClass(Algorithm),
    #[error("label {label} outside class list of size {classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("naive Bayes requires non-negative features")]
    NegativeFeature,
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error("class {0:?} is not a drug class")]
    NotADrugClass(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    LogisticRegression,
    NaiveBayes,
    Knn,
    DecisionTree,
    RandomForest,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::LogisticRegression,
        Algorithm::DecisionTree,
        Algorithm::RandomForest,
        Algorithm::Knn,
        Algorithm::NaiveBayes,
    ];

    /// Short name used in reports and on the command line.
    pub fn short_name(self) -> &'static str {
        match self {
            Algorithm::LogisticRegression => "LR",
            Algorithm::NaiveBayes => "NB",
            Algorithm::Knn => "KNN",
            Algorithm::DecisionTree => "DT",
            Algorithm::RandomForest => "RF",
        }
    }

    fn needs_two_classes(self) -> bool {
        matches!(
            self,
            Algorithm::LogisticRegression | Algorithm::DecisionTree | Algorithm::RandomForest
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "lr" | "logistic_regression" => Ok(Algorithm::LogisticRegression),
            "nb" | "naive_bayes" => Ok(Algorithm::NaiveBayes),
            "knn" => Ok(Algorithm::Knn),
            "dt" | "decision_tree" => Ok(Algorithm::DecisionTree),
            "rf" | "random_forest" => Ok(Algorithm::RandomForest),
            _ => Err(format!("unknown algorithm {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Hyperparams {
    LogisticRegression(LogisticParams),
    NaiveBayes(NaiveBayesParams),
    Knn(KnnParams),
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
}

impl Hyperparams {
    pub fn defaults(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::LogisticRegression => Hyperparams::LogisticRegression(LogisticParams::default()),
            Algorithm::NaiveBayes => Hyperparams::NaiveBayes(NaiveBayesParams::default()),
            Algorithm::Knn => Hyperparams::Knn(KnnParams::default()),
            Algorithm::DecisionTree => Hyperparams::DecisionTree(TreeParams::default()),
            Algorithm::RandomForest => Hyperparams::RandomForest(ForestParams::default()),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Hyperparams::LogisticRegression(_) => Algorithm::LogisticRegression,
            Hyperparams::NaiveBayes(_) => Algorithm::NaiveBayes,
            Hyperparams::Knn(_) => Algorithm::Knn,
            Hyperparams::DecisionTree(_) => Algorithm::DecisionTree,
            Hyperparams::RandomForest(_) => Algorithm::RandomForest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub params: Hyperparams,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(params: Hyperparams, seed: u64) -> Self {
        ModelSpec { params, seed }
    }

    pub fn defaults(algorithm: Algorithm, seed: u64) -> Self {
        Self::new(Hyperparams::defaults(algorithm), seed)
    }

    pub fn algorithm(&self) -> Algorithm {
        self.params.algorithm()
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidHyperparameter(m.to_string()));
        // NaN fails both.
        let positive = |v: f64| v > 0.0;
        let non_negative = |v: f64| v >= 0.0;
        match &self.params {
            Hyperparams::LogisticRegression(p) => {
                if !positive(p.learning_rate) {
                    return bad("learning_rate must be > 0");
                }
                if p.max_iters == 0 {
                    return bad("max_iters must be >= 1");
                }
                if !non_negative(p.l2) || !non_negative(p.tol) {
                    return bad("l2 and tol must be >= 0");
                }
            }
            Hyperparams::NaiveBayes(p) => {
                if !positive(p.alpha) {
                    return bad("alpha must be > 0");
                }
            }
            Hyperparams::Knn(p) => {
                if p.k == 0 {
                    return bad("k must be >= 1");
                }
            }
            Hyperparams::DecisionTree(p) => p.validate()?,
            Hyperparams::RandomForest(p) => {
                if p.n_trees == 0 {
                    return bad("n_trees must be >= 1");
                }
                p.tree.validate()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    LogisticRegression(LogisticModel),
    NaiveBayes(NaiveBayesModel),
    Knn(KnnModel),
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
}

/// A fitted multi-class model. Serialized as
/// `{version, spec, class_list, payload}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub spec: ModelSpec,
    pub class_list: Vec<String>,
    pub payload: Payload,
}

pub(crate) fn check_dims(x: &[SparseVector]) -> Result<usize, ClassifierError> {
    let dim = x.first().ok_or(ClassifierError::Empty)?.dim();
    if let Some(v) = x.iter().find(|v| v.dim() != dim) {
        return Err(ClassifierError::DimensionMismatch {
            expected: dim,
            got: v.dim(),
        });
    }
    Ok(dim)
}

/// Index of the first maximum.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl TrainedModel {
    /// Fits `spec` on `x` with labels `y` indexing into `class_list`.
    pub fn fit(
        spec: &ModelSpec,
        x: &[SparseVector],
        y: &[usize],
        class_list: Vec<String>,
    ) -> Result<Self, ClassifierError> {
        spec.validate()?;
        if x.len() != y.len() {
            return Err(ClassifierError::LengthMismatch {
                samples: x.len(),
                labels: y.len(),
            });
        }
        check_dims(x)?;
        let n_classes = class_list.len();
        if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
            return Err(ClassifierError::LabelOutOfRange {
                label,
                classes: n_classes,
            });
        }
        let distinct = {
            let mut seen = vec![false; n_classes];
            y.iter().for_each(|&l| seen[l] = true);
            seen.iter().filter(|s| **s).count()
        };
        if spec.algorithm().needs_two_classes() && distinct < 2 {
            return Err(ClassifierError::SingleClass(spec.algorithm()));
        }
        let payload = match &spec.params {
            Hyperparams::LogisticRegression(p) => Payload::LogisticRegression(LogisticModel::fit(x, y, n_classes, p)),
            Hyperparams::NaiveBayes(p) => Payload::NaiveBayes(NaiveBayesModel::fit(x, y, n_classes, p)?),
            Hyperparams::Knn(p) => Payload::Knn(KnnModel::fit(x, y, n_classes, p)),
            Hyperparams::DecisionTree(p) => Payload::DecisionTree(DecisionTree::fit(
                x,
                y,
                n_classes,
                p,
                Some(&mut ChaCha8Rng::seed_from_u64(spec.seed)),
            )),
            Hyperparams::RandomForest(p) => Payload::RandomForest(RandomForest::fit(x, y, n_classes, p, spec.seed)),
        };
        Ok(TrainedModel {
            version: MODEL_VERSION,
            spec: spec.clone(),
            class_list,
            payload,
        })
    }

    pub fn dim(&self) -> usize {
        match &self.payload {
            Payload::LogisticRegression(m) => m.dim(),
            Payload::NaiveBayes(m) => m.dim(),
            Payload::Knn(m) => m.dim(),
            Payload::DecisionTree(m) => m.dim(),
            Payload::RandomForest(m) => m.dim(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_list.len()
    }

    fn check(&self, x: &SparseVector) -> Result<(), ClassifierError> {
        if x.dim() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }

    /// Class probabilities; vote fractions for kNN and random forests,
    /// leaf frequencies for a single tree.
    pub fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>, ClassifierError> {
        self.check(x)?;
        Ok(match &self.payload {
            Payload::LogisticRegression(m) => m.predict_proba(x),
            Payload::NaiveBayes(m) => m.predict_proba(x),
            Payload::Knn(m) => m.predict_proba(x),
            Payload::DecisionTree(m) => m.predict_proba(x),
            Payload::RandomForest(m) => m.predict_proba(x),
        })
    }

    pub fn predict(&self, x: &SparseVector) -> Result<usize, ClassifierError> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    pub fn predict_label(&self, x: &SparseVector) -> Result<&str, ClassifierError> {
        Ok(&self.class_list[self.predict(x)?])
    }

    pub fn to_json(&self) -> Result<String, ClassifierError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifierError> {
        let model: TrainedModel = serde_json::from_str(text)?;
        if model.version != MODEL_VERSION {
            return Err(ClassifierError::Version(model.version));
        }
        Ok(model)
    }

    /// Multi-class drug model. The class list holds the classes present
    /// in `y`, in enum order.
    pub fn fit_drug(spec: &ModelSpec, x: &[SparseVector], y: &[DrugClass]) -> Result<Self, ClassifierError> {
        let present: Vec<DrugClass> = DrugClass::ALL.into_iter().filter(|c| y.contains(c)).collect();
        let labels: Vec<usize> = y
            .iter()
            .map(|c| present.iter().position(|p| p == c).expect("present"))
            .collect();
        Self::fit(spec, x, &labels, present.iter().map(|c| c.name().to_string()).collect())
    }

    pub fn predict_drug(&self, x: &SparseVector) -> Result<DrugClass, ClassifierError> {
        let label = self.predict_label(x)?;
        label
            .parse()
            .map_err(|_| ClassifierError::NotADrugClass(label.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xs() -> Vec<SparseVector> {
        vec![
            SparseVector::from_dense(&[1.0, 0.0]),
            SparseVector::from_dense(&[0.9, 0.1]),
            SparseVector::from_dense(&[0.0, 1.0]),
            SparseVector::from_dense(&[0.1, 0.9]),
        ]
    }

    fn classes() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn all_algorithms_fit_and_round_trip() {
        let y = [0, 0, 1, 1];
        for alg in Algorithm::ALL {
            let mut spec = ModelSpec::defaults(alg, 3);
            if let Hyperparams::Knn(p) = &mut spec.params {
                p.k = 1;
            }
            let m = TrainedModel::fit(&spec, &xs(), &y, classes()).unwrap();
            for (x, &label) in xs().iter().zip(&y) {
                assert_eq!(m.predict(x).unwrap(), label, "{alg}");
                let p = m.predict_proba(x).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn envelope_fields() {
        let m = TrainedModel::fit(&ModelSpec::defaults(Algorithm::NaiveBayes, 0), &xs(), &[0, 0, 1, 1], classes())
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["class_list", "payload", "spec", "version"]);
        assert_eq!(v["spec"]["algorithm"], "naive_bayes");
        assert_eq!(v["payload"]["kind"], "naive_bayes");
    }

    #[test]
    fn fit_errors() {
        let spec = ModelSpec::defaults(Algorithm::LogisticRegression, 0);
        assert!(matches!(
            TrainedModel::fit(&spec, &xs(), &[0, 0, 0, 0], classes()),
            Err(ClassifierError::SingleClass(_))
        ));
        assert!(matches!(
            TrainedModel::fit(&spec, &xs(), &[0, 1], classes()),
            Err(ClassifierError::LengthMismatch { .. })
        ));
        let mut mixed = xs();
        mixed.push(SparseVector::zeros(3));
        assert!(matches!(
            TrainedModel::fit(&spec, &mixed, &[0, 0, 1, 1, 1], classes()),
            Err(ClassifierError::DimensionMismatch { .. })
        ));
        assert!(TrainedModel::fit(&ModelSpec::defaults(Algorithm::NaiveBayes, 0), &xs(), &[0, 0, 0, 0], classes()).is_ok());
        let bad = ModelSpec::new(Hyperparams::Knn(KnnParams { k: 0 }), 0);
        assert!(matches!(
            TrainedModel::fit(&bad, &xs(), &[0, 0, 1, 1], classes()),
            Err(ClassifierError::InvalidHyperparameter(_))
        ));
    }

    #[test]
    fn predict_checks_dimension() {
        let m = TrainedModel::fit(&ModelSpec::defaults(Algorithm::Knn, 0), &xs(), &[0, 0, 1, 1], classes()).unwrap();
        assert!(matches!(
            m.predict(&SparseVector::zeros(5)),
            Err(ClassifierError::DimensionMismatch { expected: 2, got: 5 })
        ));
    }

    #[test]
    fn drug_helpers() {
        let y = [DrugClass::Heroin, DrugClass::Heroin, DrugClass::Alcohol, DrugClass::Alcohol];
        let m = TrainedModel::fit_drug(&ModelSpec::defaults(Algorithm::DecisionTree, 0), &xs(), &y).unwrap();
        assert_eq!(m.class_list, ["Alcohol", "Heroin"]);
        assert_eq!(m.predict_drug(&xs()[0]).unwrap(), DrugClass::Heroin);
    }

    #[test]
    fn algorithm_names() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.short_name().parse::<Algorithm>().unwrap(), alg);
        }
    }
}
