//! One-vs-rest multi-label symptom prediction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_dims, ClassifierError, ModelSpec, TrainedModel, MODEL_VERSION};
use crate::corpus::{SymptomSet, SymptomVocabulary};
use crate::features::SparseVector;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "member", rename_all = "snake_case")]
pub enum OvrMember {
    Model(TrainedModel),
    /// Label had no positive or no negative examples; always predicts
    /// absence.
    ConstantNegative { positives: usize, samples: usize },
}

impl OvrMember {
    /// `P(present | x)`.
    pub fn positive_probability(&self, x: &SparseVector) -> Result<f64, ClassifierError> {
        match self {
            OvrMember::Model(m) => Ok(m.predict_proba(x)?[1]),
            OvrMember::ConstantNegative { .. } => Ok(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvrBundle {
    pub version: u32,
    pub spec: ModelSpec,
    pub labels: Vec<String>,
    pub threshold: f64,
    pub dim: usize,
    pub members: Vec<OvrMember>,
}

/// Presence (1) / absence (0) of `label` per sample.
pub fn binary_targets(y: &[SymptomSet], label: usize) -> Vec<usize> {
    y.iter().map(|s| usize::from(s.contains(&label))).collect()
}

impl OvrBundle {
    /// One binary model per vocabulary label, trained in parallel and
    /// kept in vocabulary order.
    pub fn fit(
        spec: &ModelSpec,
        x: &[SparseVector],
        y: &[SymptomSet],
        vocab: &SymptomVocabulary,
        threshold: f64,
    ) -> Result<Self, ClassifierError> {
        spec.validate()?;
        if x.len() != y.len() {
            return Err(ClassifierError::LengthMismatch {
                samples: x.len(),
                labels: y.len(),
            });
        }
        let dim = check_dims(x)?;
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ClassifierError::InvalidHyperparameter("threshold must be in [0, 1]".into()));
        }
        let members = (0..vocab.len())
            .into_par_iter()
            .map(|label| {
                let targets = binary_targets(y, label);
                let positives = targets.iter().sum::<usize>();
                if positives == 0 || positives == targets.len() {
                    return Ok(OvrMember::ConstantNegative {
                        positives,
                        samples: targets.len(),
                    });
                }
                TrainedModel::fit(spec, x, &targets, vec!["absent".into(), "present".into()]).map(OvrMember::Model)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(OvrBundle {
            version: MODEL_VERSION,
            spec: spec.clone(),
            labels: vocab.labels().to_vec(),
            threshold,
            dim,
            members,
        })
    }

    fn check(&self, x: &SparseVector) -> Result<(), ClassifierError> {
        if x.dim() != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        Ok(())
    }

    pub fn probabilities(&self, x: &SparseVector) -> Result<Vec<f64>, ClassifierError> {
        self.check(x)?;
        self.members.iter().map(|m| m.positive_probability(x)).collect()
    }

    /// Labels whose positive probability reaches the threshold.
    pub fn predict(&self, x: &SparseVector) -> Result<SymptomSet, ClassifierError> {
        Ok(self
            .probabilities(x)?
            .into_iter()
            .enumerate()
            .filter(|(_, p)| *p >= self.threshold)
            .map(|(i, _)| i)
            .collect())
    }

    /// Indices of labels that got a constant-negative stub.
    pub fn stub_labels(&self) -> Vec<usize> {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, m)| matches!(m, OvrMember::ConstantNegative { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_json(&self) -> Result<String, ClassifierError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifierError> {
        let bundle: OvrBundle = serde_json::from_str(text)?;
        if bundle.version != MODEL_VERSION {
            return Err(ClassifierError::Version(bundle.version));
        }
        Ok(bundle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{Algorithm, Hyperparams};

    fn vocab(labels: &[&str]) -> SymptomVocabulary {
        SymptomVocabulary::from_entries(labels.iter().map(|l| (l.to_string(), Vec::<String>::new()))).unwrap()
    }

    fn set(items: &[usize]) -> SymptomSet {
        items.iter().cloned().collect()
    }

    #[test]
    fn gold_set_feeds_exactly_its_members() {
        let v = SymptomVocabulary::seed();
        let gold: SymptomSet = ["respiratory depression", "drowsiness", "loss of consciousness"]
            .iter()
            .map(|l| v.index_of(l).unwrap())
            .collect();
        let y = vec![gold.clone()];
        let positive: Vec<usize> = (0..v.len()).filter(|&l| binary_targets(&y, l)[0] == 1).collect();
        assert_eq!(positive, gold.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn stubs_and_thresholding() {
        let x = vec![
            SparseVector::from_dense(&[1.0, 0.0]),
            SparseVector::from_dense(&[0.0, 1.0]),
            SparseVector::from_dense(&[1.0, 1.0]),
        ];
        let y = vec![set(&[0]), set(&[1]), set(&[0, 1])];
        let spec = ModelSpec::new(Hyperparams::defaults(Algorithm::DecisionTree), 0);
        let b = OvrBundle::fit(&spec, &x, &y, &vocab(&["nausea", "vomiting", "coma"]), 0.5).unwrap();
        assert_eq!(b.stub_labels(), vec![2]);
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(&b.predict(xi).unwrap(), yi);
        }
        let back = OvrBundle::from_json(&b.to_json().unwrap()).unwrap();
        assert_eq!(back, b);
        assert!(b.predict(&SparseVector::zeros(3)).is_err());
    }

    #[test]
    fn predict_is_union_of_member_decisions() {
        let x: Vec<_> = (0..12)
            .map(|i| SparseVector::from_dense(&[(i % 3) as f64, (i % 4) as f64, 1.0]))
            .collect();
        let y: Vec<_> = (0..12).map(|i| set(&[i % 2, 2 + (i % 3 == 0) as usize])).collect();
        let spec = ModelSpec::defaults(Algorithm::LogisticRegression, 0);
        let b = OvrBundle::fit(&spec, &x, &y, &vocab(&["a", "b", "c", "d"]), 0.5).unwrap();
        for xi in &x {
            let expected: SymptomSet = b
                .members
                .iter()
                .enumerate()
                .filter(|(_, m)| m.positive_probability(xi).unwrap() >= 0.5)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(b.predict(xi).unwrap(), expected);
        }
    }
}
