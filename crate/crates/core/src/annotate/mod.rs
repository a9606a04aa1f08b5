//! The hybrid annotation loop: LLM suggestions, human decisions through
//! an event-sourced queue, agreement statistics and round bookkeeping.
//!
//! Between rounds the suggester is refreshed with few-shot examples drawn
//! from the newest corrected gold rather than retrained.

mod agreement;
mod prompt;
mod provider;
mod round;
mod store;
mod suggest;

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DrugClass, Flag, LabeledPost, Post, SymptomSet};
use crate::metrics::MetricsError;

pub use agreement::{agreement_report, AgreementReport};
pub use prompt::{extract_post, parse_response, FewShotExample, ParsedLabels, PromptTemplate, DEFAULT_TEMPLATE};
pub use provider::{
    CompletionRequest, HttpProvider, LexiconMockProvider, LlmProvider, MockProvider, ProviderError,
};
pub use round::{run_round, select_few_shot, AcceptSuggestions, Reviewer, RoundContext, RoundReport, MAX_FEW_SHOT};
pub use store::{Event, EventKind, QueueState, QueueStats, QueueStore, EVENTS_FILE, SNAPSHOT_FILE};
pub use suggest::Suggester;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("invalid annotator config: {0}")]
    Config(String),
    #[error("unknown prompt template {0:?}")]
    UnknownTemplate(String),
    #[error("already queued: {}", .0.join(", "))]
    AlreadyQueued(Vec<String>),
    #[error("unknown post id {0:?}")]
    UnknownPost(String),
    #[error("annotator {annotator:?} already decided {post_id:?}")]
    DuplicateDecision { post_id: String, annotator: String },
    #[error("invalid decision for {post_id:?}: {message}")]
    InvalidDecision { post_id: String, message: String },
    #[error("round {0} is still open")]
    RoundOpen(u32),
    #[error("round {0} is already closed")]
    RoundClosed(u32),
    #[error("round {round} has {undecided} undecided records")]
    RoundIncomplete { round: u32, undecided: usize },
    #[error("no records in round {0}")]
    EmptyRound(u32),
    #[error("missing decisions: {}", .0.iter().map(|(p, a)| format!("{p}/{a}")).collect::<Vec<_>>().join(", "))]
    IncompleteCoverage(Vec<(String, String)>),
    #[error("event log {path}: {message}")]
    CorruptLog { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Connection settings for the suggestion model. The credential itself
/// is read from the environment variable named here and never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotatorConfig {
    pub endpoint: String,
    pub model: String,
    pub template_id: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// First retry delay; doubled on each further attempt.
    pub backoff_ms: u64,
    pub credential_env: String,
    pub max_tokens: u32,
    /// Suggestion requests in flight at once.
    pub parallelism: usize,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        AnnotatorConfig {
            endpoint: "http://127.0.0.1:8081/v1/complete".into(),
            model: "gpt-3.5-turbo".into(),
            template_id: DEFAULT_TEMPLATE.into(),
            timeout_ms: 30_000,
            max_retries: 3,
            backoff_ms: 500,
            credential_env: "DOSEWATCH_LLM_API_KEY".into(),
            max_tokens: 256,
            parallelism: 4,
        }
    }
}

impl AnnotatorConfig {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if self.endpoint.trim().is_empty() {
            return Err(AnnotateError::Config("endpoint is empty".into()));
        }
        if self.model.trim().is_empty() {
            return Err(AnnotateError::Config("model is empty".into()));
        }
        if self.timeout_ms == 0 {
            return Err(AnnotateError::Config("timeout must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(AnnotateError::Config("parallelism must be at least 1".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.backoff_ms.saturating_mul(1u64 << attempt.min(20)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionStatus {
    Ok,
    ParseFailed,
    TransportFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestedAnnotation {
    pub post_id: String,
    /// `None` when the model answered "unknown" or no labels were parsed.
    pub drug: Option<DrugClass>,
    pub symptoms: SymptomSet,
    #[serde(default)]
    pub flags: BTreeSet<Flag>,
    #[serde(default)]
    pub rationale: String,
    /// Verbatim model output; `None` only when no response arrived.
    pub raw_response: Option<String>,
    pub status: SuggestionStatus,
    #[serde(default)]
    pub error: Option<String>,
    pub template: String,
}

impl SuggestedAnnotation {
    pub fn is_usable(&self) -> bool {
        self.status == SuggestionStatus::Ok
    }
}

/// Labels a human assigns to one post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionInput {
    pub drug: DrugClass,
    pub symptoms: SymptomSet,
    #[serde(default)]
    pub flags: BTreeSet<Flag>,
}

impl DecisionInput {
    /// Whether these labels differ from a usable suggestion.
    pub fn corrects(&self, suggestion: Option<&SuggestedAnnotation>) -> bool {
        match suggestion {
            Some(s) if s.is_usable() => {
                s.drug != Some(self.drug) || s.symptoms != self.symptoms || s.flags != self.flags
            }
            _ => false,
        }
    }

    /// The suggestion's labels, if it is usable and names a drug.
    pub fn from_suggestion(s: &SuggestedAnnotation) -> Option<Self> {
        if !s.is_usable() {
            return None;
        }
        Some(DecisionInput {
            drug: s.drug?,
            symptoms: s.symptoms.clone(),
            flags: s.flags.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub annotator: String,
    #[serde(flatten)]
    pub labels: DecisionInput,
    pub timestamp: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Pending,
    Decided,
    Conflict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// Conflicts wait for the adjudicator.
    #[default]
    Adjudication,
    /// A strict majority on the drug class settles a conflict.
    Majority,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueueConfig {
    pub required_decisions: usize,
    pub merge: MergeMode,
    /// Annotator id whose decision on a conflicting record settles it.
    pub adjudicator: String,
    /// Events between snapshots.
    pub snapshot_every: usize,
}

impl Default for QueueConfig {
    fn default() -> Self {
        QueueConfig {
            required_decisions: 1,
            merge: MergeMode::Adjudication,
            adjudicator: "adjudicator".into(),
            snapshot_every: 1000,
        }
    }
}

impl QueueConfig {
    /// Three independent annotators per item, as in agreement studies.
    pub fn three_annotators() -> Self {
        QueueConfig {
            required_decisions: 3,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub post: Post,
    pub round: u32,
    pub suggestion: Option<SuggestedAnnotation>,
    pub decisions: Vec<Decision>,
    pub adjudication: Option<Decision>,
    pub status: RecordStatus,
}

impl AnnotationRecord {
    pub fn decision_by(&self, annotator: &str) -> Option<&Decision> {
        self.decisions.iter().find(|d| d.annotator == annotator)
    }

    fn majority_drug(&self) -> Option<DrugClass> {
        let n = self.decisions.len();
        DrugClass::ALL
            .into_iter()
            .find(|c| 2 * self.decisions.iter().filter(|d| d.labels.drug == *c).count() > n)
    }

    fn drugs_agree(&self) -> bool {
        self.decisions.windows(2).all(|w| w[0].labels.drug == w[1].labels.drug)
    }

    pub(crate) fn recompute_status(&mut self, cfg: &QueueConfig) {
        self.status = if self.adjudication.is_some() {
            RecordStatus::Decided
        } else if self.decisions.is_empty() || self.decisions.len() < cfg.required_decisions.max(1) {
            RecordStatus::Pending
        } else if self.drugs_agree() || (cfg.merge == MergeMode::Majority && self.majority_drug().is_some()) {
            RecordStatus::Decided
        } else {
            RecordStatus::Conflict
        };
    }

    /// The gold labels of a decided record: the adjudicator's decision if
    /// any, otherwise the agreed (or majority) drug with symptoms chosen
    /// by a strict majority of the annotators who gave that drug (their
    /// union if none reaches a majority), and the union of their flags.
    pub fn resolved(&self) -> Option<DecisionInput> {
        if self.status != RecordStatus::Decided {
            return None;
        }
        if let Some(a) = &self.adjudication {
            return Some(a.labels.clone());
        }
        let drug = if self.drugs_agree() {
            self.decisions.first()?.labels.drug
        } else {
            self.majority_drug()?
        };
        let voters: Vec<&Decision> = self.decisions.iter().filter(|d| d.labels.drug == drug).collect();
        let mut symptoms = SymptomSet::new();
        for s in voters.iter().flat_map(|d| &d.labels.symptoms) {
            if 2 * voters.iter().filter(|d| d.labels.symptoms.contains(s)).count() > voters.len() {
                symptoms.insert(*s);
            }
        }
        let flags: BTreeSet<Flag> = voters.iter().flat_map(|d| d.labels.flags.iter().cloned()).collect();
        if symptoms.is_empty() && flags.is_empty() {
            symptoms = voters.iter().flat_map(|d| d.labels.symptoms.iter().cloned()).collect();
        }
        Some(DecisionInput { drug, symptoms, flags })
    }

    /// Whether the resolved gold differs from a usable suggestion.
    pub fn corrected(&self) -> bool {
        self.resolved().is_some_and(|r| r.corrects(self.suggestion.as_ref()))
    }

    pub fn to_labeled(&self) -> Option<LabeledPost> {
        let r = self.resolved()?;
        Some(LabeledPost {
            post: self.post.clone(),
            drug: r.drug,
            symptoms: r.symptoms,
            flags: r.flags,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decision(annotator: &str, drug: DrugClass, symptoms: &[usize]) -> Decision {
        Decision {
            annotator: annotator.into(),
            labels: DecisionInput {
                drug,
                symptoms: symptoms.iter().cloned().collect(),
                flags: BTreeSet::new(),
            },
            timestamp: String::new(),
        }
    }

    fn record(decisions: Vec<Decision>) -> AnnotationRecord {
        AnnotationRecord {
            post: Post::new("p", "text"),
            round: 1,
            suggestion: None,
            decisions,
            adjudication: None,
            status: RecordStatus::Pending,
        }
    }

    #[test]
    fn status_rules() {
        let three = QueueConfig::three_annotators();
        let mut r = record(vec![
            decision("a", DrugClass::Heroin, &[0]),
            decision("b", DrugClass::Heroin, &[0]),
        ]);
        r.recompute_status(&three);
        assert_eq!(r.status, RecordStatus::Pending);
        r.decisions.push(decision("c", DrugClass::Fentanyl, &[0]));
        r.recompute_status(&three);
        assert_eq!(r.status, RecordStatus::Conflict);
        assert_eq!(r.resolved(), None);

        let majority = QueueConfig {
            merge: MergeMode::Majority,
            ..three.clone()
        };
        r.recompute_status(&majority);
        assert_eq!(r.status, RecordStatus::Decided);
        assert_eq!(r.resolved().unwrap().drug, DrugClass::Heroin);

        r.adjudication = Some(decision("adjudicator", DrugClass::Fentanyl, &[1]));
        r.recompute_status(&three);
        assert_eq!(r.resolved().unwrap().drug, DrugClass::Fentanyl);
    }

    #[test]
    fn symptoms_by_majority_of_agreeing_annotators() {
        let mut r = record(vec![
            decision("a", DrugClass::Heroin, &[0, 1]),
            decision("b", DrugClass::Heroin, &[0]),
            decision("c", DrugClass::Heroin, &[0, 1, 2]),
        ]);
        r.recompute_status(&QueueConfig::three_annotators());
        assert_eq!(r.resolved().unwrap().symptoms, [0, 1].into_iter().collect());
    }

    #[test]
    fn correction_detection() {
        let s = SuggestedAnnotation {
            post_id: "p".into(),
            drug: Some(DrugClass::Heroin),
            symptoms: [0].into_iter().collect(),
            flags: BTreeSet::new(),
            rationale: String::new(),
            raw_response: Some(String::new()),
            status: SuggestionStatus::Ok,
            error: None,
            template: DEFAULT_TEMPLATE.into(),
        };
        let same = DecisionInput::from_suggestion(&s).unwrap();
        assert!(!same.corrects(Some(&s)));
        let changed = DecisionInput {
            drug: DrugClass::Fentanyl,
            ..same.clone()
        };
        assert!(changed.corrects(Some(&s)));
        let failed = SuggestedAnnotation {
            status: SuggestionStatus::TransportFailed,
            ..s
        };
        assert!(!changed.corrects(Some(&failed)));
    }

    #[test]
    fn config_validation_and_backoff() {
        let cfg = AnnotatorConfig::default();
        cfg.validate().unwrap();
        assert!(AnnotatorConfig {
            model: " ".into(),
            ..cfg.clone()
        }
        .validate()
        .is_err());
        assert!(AnnotatorConfig {
            timeout_ms: 0,
            ..cfg.clone()
        }
        .validate()
        .is_err());
        assert_eq!(cfg.backoff(0), Duration::from_millis(500));
        assert_eq!(cfg.backoff(2), Duration::from_millis(2000));
    }
}
