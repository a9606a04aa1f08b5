//! JSON shapes of the v1 API.

use dosewatch_core::annotate::{AnnotationRecord, QueueStats, QueueStore, RecordStatus, SuggestedAnnotation, SuggestionStatus};
use dosewatch_core::metrics::interpret_kappa;
use dosewatch_core::normalize::{clean_text, SlangLexicon};
use dosewatch_core::{DrugClass, Flag};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighlightKind {
    Drug,
    Symptom,
}

/// A lexicon or symptom-phrase match over `ItemView::tokens`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Highlight {
    pub kind: HighlightKind,
    pub start: usize,
    pub len: usize,
    pub phrase: String,
    /// Drug class name or symptom label.
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionView {
    pub drug: Option<DrugClass>,
    pub symptoms: Vec<String>,
    pub flags: Vec<Flag>,
    pub rationale: String,
    pub status: SuggestionStatus,
    /// Whether the UI should pre-fill the form from it.
    pub usable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundProgress {
    pub round: u32,
    pub total: usize,
    pub decided: usize,
    pub conflict: usize,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub post_id: String,
    pub text: String,
    pub source: String,
    pub round: u32,
    pub status: RecordStatus,
    /// Cleaned surface tokens the highlights index into.
    pub tokens: Vec<String>,
    pub highlights: Vec<Highlight>,
    pub suggestion: Option<SuggestionView>,
    /// Annotators who have decided this item so far.
    pub decided_by: Vec<String>,
    pub required_decisions: usize,
    pub progress: RoundProgress,
}

impl ItemView {
    pub fn build(record: &AnnotationRecord, store: &QueueStore, lexicon: &SlangLexicon) -> Self {
        let vocab = store.vocab();
        let cleaned = clean_text(&record.post.text);
        let tokens: Vec<String> = cleaned.split_whitespace().map(str::to_string).collect();
        let mut highlights: Vec<Highlight> = lexicon
            .matcher()
            .scan(&tokens)
            .into_iter()
            .map(|m| Highlight {
                kind: HighlightKind::Drug,
                start: m.offset,
                len: m.len,
                phrase: m.phrase,
                value: m.value.name().to_string(),
            })
            .collect();
        highlights.extend(vocab.matcher().scan(&tokens).into_iter().map(|m| Highlight {
            kind: HighlightKind::Symptom,
            start: m.offset,
            len: m.len,
            phrase: m.phrase,
            value: vocab.label(m.value).unwrap_or_default().to_string(),
        }));
        highlights.sort_by_key(|h| (h.start, h.kind == HighlightKind::Symptom));
        ItemView {
            post_id: record.post.id.clone(),
            text: record.post.text.clone(),
            source: record.post.source.clone(),
            round: record.round,
            status: record.status,
            tokens,
            highlights,
            suggestion: record.suggestion.as_ref().map(|s| SuggestionView::build(s, store)),
            decided_by: record.decisions.iter().map(|d| d.annotator.clone()).collect(),
            required_decisions: store.config().required_decisions,
            progress: RoundProgress::of(store, record.round),
        }
    }
}

impl SuggestionView {
    fn build(s: &SuggestedAnnotation, store: &QueueStore) -> Self {
        SuggestionView {
            drug: s.drug,
            symptoms: store.vocab().labels_of(&s.symptoms),
            flags: s.flags.iter().cloned().collect(),
            rationale: s.rationale.clone(),
            status: s.status,
            usable: s.is_usable(),
        }
    }
}

impl RoundProgress {
    pub fn of(store: &QueueStore, round: u32) -> Self {
        let records = store.records().iter().filter(|r| r.round == round);
        let mut p = RoundProgress {
            round,
            total: 0,
            decided: 0,
            conflict: 0,
            closed: store.state().closed_rounds.contains_key(&round),
        };
        for r in records {
            p.total += 1;
            match r.status {
                RecordStatus::Decided => p.decided += 1,
                RecordStatus::Conflict => p.conflict += 1,
                RecordStatus::Pending => {}
            }
        }
        p
    }

    pub fn all(store: &QueueStore) -> Vec<Self> {
        let rounds: std::collections::BTreeSet<u32> = store.records().iter().map(|r| r.round).collect();
        rounds.into_iter().map(|r| Self::of(store, r)).collect()
    }
}

/// Request body of a decision. Labels are names, checked against the
/// server vocabularies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionBody {
    pub annotator: String,
    pub drug: String,
    #[serde(default)]
    pub symptoms: Vec<String>,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub post_id: String,
    pub status: RecordStatus,
    pub decisions: usize,
    /// Queue-wide count of decisions that changed a suggestion.
    pub corrections: usize,
    pub correction_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsView {
    #[serde(flatten)]
    pub stats: QueueStats,
    pub kappa_drug_band: Option<String>,
    pub kappa_symptoms_band: Option<String>,
    pub rounds: Vec<RoundProgress>,
}

impl StatsView {
    pub fn build(store: &QueueStore) -> Self {
        let stats = store.stats();
        let band = |k: Option<f64>| k.map(|k| interpret_kappa(k).label().to_string());
        StatsView {
            kappa_drug_band: band(stats.kappa_drug),
            kappa_symptoms_band: band(stats.kappa_symptoms),
            rounds: RoundProgress::all(store),
            stats,
        }
    }
}

/// Band thresholds as `(lower bound, label)`, lowest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandView {
    pub min: f64,
    pub label: String,
}

/// Every label the UI may offer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabView {
    pub drugs: Vec<DrugClass>,
    pub symptoms: Vec<String>,
    pub flags: Vec<Flag>,
    pub bands: Vec<BandView>,
}

impl VocabView {
    pub fn build(store: &QueueStore) -> Self {
        let bands = [f64::NEG_INFINITY, 0.4, 0.6, 0.8, 1.0]
            .into_iter()
            .map(|min| BandView {
                min: if min.is_finite() { min } else { -1.0 },
                label: interpret_kappa(min).label().to_string(),
            })
            .collect();
        VocabView {
            drugs: DrugClass::ALL.to_vec(),
            symptoms: store.vocab().labels().to_vec(),
            flags: vec![Flag::PolydrugUncertainty, Flag::WithdrawalSuspected],
            bands,
        }
    }
}
