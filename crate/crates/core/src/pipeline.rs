//! A fitted normalize -> TF-IDF -> classifier chain stored as one JSON
//! artifact, so prediction needs nothing but the model file.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{ClassifierError, ModelSpec, OvrBundle, TrainedModel};
use crate::corpus::{DrugClass, LabeledPost, Post, SymptomSet, SymptomVocabulary};
use crate::features::{FeatureError, SparseVector, TfidfModel, TfidfParams};
use crate::metrics::{evaluate_multiclass, evaluate_multilabel, EvalReport, MetricsError};
use crate::normalize::{LexiconError, NormalizeConfig, Normalizer, SlangLexicon, UnknownStopwordList};

pub const PIPELINE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Stopwords(#[from] UnknownStopwordList),
    #[error("unsupported pipeline version {0}")]
    Version(u32),
    #[error("model was trained for the {model} task, not {requested}")]
    WrongTask { model: Task, requested: Task },
    #[error("no training documents")]
    Empty,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// One drug class per post.
    Drug,
    /// Zero or more symptoms per post, one binary model each.
    Symptoms,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Drug => "drug",
            Task::Symptoms => "symptoms",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "drug" => Ok(Task::Drug),
            "symptoms" | "symptom" => Ok(Task::Symptoms),
            other => Err(format!("unknown task {other:?}; expected drug or symptoms")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskModel {
    Drug(TrainedModel),
    Symptoms(OvrBundle),
}

impl TaskModel {
    pub fn task(&self) -> Task {
        match self {
            TaskModel::Drug(_) => Task::Drug,
            TaskModel::Symptoms(_) => Task::Symptoms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub normalize: NormalizeConfig,
    pub tfidf: TfidfParams,
    /// Positive-probability cut-off for symptom members.
    pub threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            normalize: NormalizeConfig::default(),
            tfidf: TfidfParams::default(),
            threshold: crate::classifiers::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Artifact {
    version: u32,
    config: PipelineConfig,
    lexicon_version: String,
    lexicon: String,
    vocab: SymptomVocabulary,
    tfidf: TfidfModel,
    model: TaskModel,
}

/// Output for one post. Exactly one of `drug` / `symptoms` is set,
/// matching the model's task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub post_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drug: Option<DrugClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symptoms: Option<Vec<String>>,
    /// Class (drug task) or label (symptom task) probabilities, in model
    /// order.
    pub probabilities: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    lexicon: SlangLexicon,
    vocab: SymptomVocabulary,
    normalizer: Normalizer,
    tfidf: TfidfModel,
    model: TaskModel,
}

impl PartialEq for Pipeline {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.lexicon == other.lexicon
            && self.vocab == other.vocab
            && self.tfidf == other.tfidf
            && self.model == other.model
    }
}

impl Pipeline {
    /// Fits TF-IDF on the training posts only, then the task model.
    pub fn fit(
        task: Task,
        spec: &ModelSpec,
        config: PipelineConfig,
        lexicon: SlangLexicon,
        vocab: SymptomVocabulary,
        train: &[LabeledPost],
    ) -> Result<Self, PipelineError> {
        if train.is_empty() {
            return Err(PipelineError::Empty);
        }
        let normalizer = Normalizer::new(config.normalize.clone(), lexicon.clone(), &vocab)?;
        let docs: Vec<_> = train.iter().map(|l| normalizer.normalize(&l.post)).collect();
        let tfidf = TfidfModel::fit(&docs, config.tfidf)?;
        let x: Vec<SparseVector> = docs.iter().map(|d| tfidf.transform(d)).collect();
        let model = match task {
            Task::Drug => {
                let y: Vec<DrugClass> = train.iter().map(|l| l.drug).collect();
                TaskModel::Drug(TrainedModel::fit_drug(spec, &x, &y)?)
            }
            Task::Symptoms => {
                let y: Vec<SymptomSet> = train.iter().map(|l| l.symptoms.clone()).collect();
                TaskModel::Symptoms(OvrBundle::fit(spec, &x, &y, &vocab, config.threshold)?)
            }
        };
        Ok(Pipeline {
            config,
            lexicon,
            vocab,
            normalizer,
            tfidf,
            model,
        })
    }

    pub fn task(&self) -> Task {
        self.model.task()
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn vocab(&self) -> &SymptomVocabulary {
        &self.vocab
    }

    pub fn lexicon(&self) -> &SlangLexicon {
        &self.lexicon
    }

    pub fn tfidf(&self) -> &TfidfModel {
        &self.tfidf
    }

    pub fn model(&self) -> &TaskModel {
        &self.model
    }

    pub fn vectorize(&self, post: &Post) -> SparseVector {
        self.tfidf.transform(&self.normalizer.normalize(post))
    }

    pub fn predict(&self, post: &Post) -> Result<Prediction, PipelineError> {
        let x = self.vectorize(post);
        Ok(match &self.model {
            TaskModel::Drug(m) => {
                let probs = m.predict_proba(&x)?;
                Prediction {
                    post_id: post.id.clone(),
                    drug: Some(m.predict_drug(&x)?),
                    symptoms: None,
                    probabilities: m.class_list.iter().cloned().zip(probs).collect(),
                }
            }
            TaskModel::Symptoms(b) => {
                let probs = b.probabilities(&x)?;
                Prediction {
                    post_id: post.id.clone(),
                    drug: None,
                    symptoms: Some(self.vocab.labels_of(&b.predict(&x)?)),
                    probabilities: b.labels.iter().cloned().zip(probs).collect(),
                }
            }
        })
    }

    pub fn predict_drugs(&self, posts: &[Post]) -> Result<Vec<DrugClass>, PipelineError> {
        let TaskModel::Drug(m) = &self.model else {
            return Err(self.wrong(Task::Drug));
        };
        posts.iter().map(|p| Ok(m.predict_drug(&self.vectorize(p))?)).collect()
    }

    pub fn predict_symptoms(&self, posts: &[Post]) -> Result<Vec<SymptomSet>, PipelineError> {
        let TaskModel::Symptoms(b) = &self.model else {
            return Err(self.wrong(Task::Symptoms));
        };
        posts.iter().map(|p| Ok(b.predict(&self.vectorize(p))?)).collect()
    }

    fn wrong(&self, requested: Task) -> PipelineError {
        PipelineError::WrongTask {
            model: self.task(),
            requested,
        }
    }

    /// Scores the model on labeled posts. Drug reports cover all eight
    /// classes; symptom reports cover the whole vocabulary.
    pub fn evaluate(&self, test: &[LabeledPost]) -> Result<EvalReport, PipelineError> {
        let posts: Vec<Post> = test.iter().map(|l| l.post.clone()).collect();
        Ok(match self.task() {
            Task::Drug => {
                let gold: Vec<DrugClass> = test.iter().map(|l| l.drug).collect();
                evaluate_multiclass(&gold, &self.predict_drugs(&posts)?, &DrugClass::ALL)?
            }
            Task::Symptoms => {
                let gold: Vec<SymptomSet> = test.iter().map(|l| l.symptoms.clone()).collect();
                evaluate_multilabel(&gold, &self.predict_symptoms(&posts)?, self.vocab.labels())?
            }
        })
    }

    pub fn to_json(&self) -> Result<String, PipelineError> {
        let artifact = Artifact {
            version: PIPELINE_VERSION,
            config: self.config.clone(),
            lexicon_version: self.lexicon.version().to_string(),
            lexicon: self.lexicon.to_tsv(),
            vocab: self.vocab.clone(),
            tfidf: self.tfidf.clone(),
            model: self.model.clone(),
        };
        Ok(serde_json::to_string(&artifact)?)
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let a: Artifact = serde_json::from_str(text)?;
        if a.version != PIPELINE_VERSION {
            return Err(PipelineError::Version(a.version));
        }
        let lexicon = SlangLexicon::parse_tsv(&a.lexicon, &a.lexicon_version)?;
        let normalizer = Normalizer::new(a.config.normalize.clone(), lexicon.clone(), &a.vocab)?;
        Ok(Pipeline {
            config: a.config,
            lexicon,
            vocab: a.vocab,
            normalizer,
            tfidf: a.tfidf,
            model: a.model,
        })
    }
}
