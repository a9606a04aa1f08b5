use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::agreement::AgreementReport;
use super::prompt::{FewShotExample, PromptTemplate};
use super::provider::LlmProvider;
use super::store::QueueStore;
use super::suggest::Suggester;
use super::{AnnotateError, AnnotationRecord, AnnotatorConfig, DecisionInput, RecordStatus};
use crate::corpus::{DrugClass, Post};
use crate::normalize::SlangLexicon;

/// Few-shot examples carried into the next round.
pub const MAX_FEW_SHOT: usize = 4;
const FEW_SHOT_CHARS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub closed: bool,
    pub items: usize,
    pub suggested: usize,
    pub suggestion_ok: usize,
    pub parse_failed: usize,
    pub transport_failed: usize,
    pub decided: usize,
    /// Decided records whose gold differs from a usable suggestion.
    pub corrected: usize,
    pub correction_rate: f64,
    /// Present when at least two annotators decided the same records.
    pub agreement: Option<AgreementReport>,
    /// Gold records in this and all earlier closed rounds.
    pub gold_total: usize,
}

/// Source of human decisions for a round.
pub trait Reviewer {
    fn annotators(&self) -> Vec<String>;

    /// `None` leaves the record undecided by this annotator for now.
    fn decide(&mut self, record: &AnnotationRecord, annotator: &str) -> Option<DecisionInput>;

    /// Settles a conflict; the default leaves it open.
    fn adjudicate(&mut self, _record: &AnnotationRecord) -> Option<DecisionInput> {
        None
    }
}

/// Accepts every usable suggestion that names a drug and at least one
/// symptom or flag; everything else is left for a human.
#[derive(Debug, Clone)]
pub struct AcceptSuggestions {
    pub annotator: String,
}

impl Reviewer for AcceptSuggestions {
    fn annotators(&self) -> Vec<String> {
        vec![self.annotator.clone()]
    }

    fn decide(&mut self, record: &AnnotationRecord, _annotator: &str) -> Option<DecisionInput> {
        let input = DecisionInput::from_suggestion(record.suggestion.as_ref()?)?;
        (!input.symptoms.is_empty() || !input.flags.is_empty()).then_some(input)
    }
}

/// What a round needs to ask the model for suggestions.
pub struct RoundContext<'a> {
    pub provider: &'a dyn LlmProvider,
    pub config: &'a AnnotatorConfig,
    pub template: &'a PromptTemplate,
    pub lexicon: &'a SlangLexicon,
}

/// Runs one round end to end: suggest for new posts, queue them, collect
/// decisions, settle conflicts and close the round if everything is
/// decided. Safe to re-run after an interruption; work already in the
/// log is not repeated. A round left open returns its interim report.
pub fn run_round<R: Reviewer + ?Sized>(
    store: &mut QueueStore,
    ctx: &RoundContext<'_>,
    posts: &[Post],
    round: u32,
    reviewer: &mut R,
) -> Result<RoundReport, AnnotateError> {
    if let Some(report) = store.state().closed_rounds.get(&round) {
        return Ok(report.clone());
    }
    let fresh: Vec<Post> = {
        let mut seen = BTreeSet::new();
        posts
            .iter()
            .filter(|p| store.record(&p.id).is_none() && seen.insert(p.id.as_str()))
            .cloned()
            .collect()
    };
    if !fresh.is_empty() {
        let examples = store.state().few_shot.clone();
        let suggester = Suggester {
            provider: ctx.provider,
            config: ctx.config,
            template: ctx.template,
            lexicon: ctx.lexicon,
            vocab: store.vocab(),
            examples: &examples,
        };
        let suggestions = suggester.suggest_batch(&fresh)?;
        log::info!("round {round}: queued {} posts", fresh.len());
        store.enqueue_batch(fresh.into_iter().zip(suggestions.into_iter().map(Some)).collect(), round)?;
    }

    let ids: Vec<String> = store
        .records()
        .iter()
        .filter(|r| r.round == round)
        .map(|r| r.post.id.clone())
        .collect();
    let annotators = reviewer.annotators();
    let adjudicator = store.config().adjudicator.clone();
    for id in &ids {
        for a in &annotators {
            let record = store.record(id).expect("queued");
            if record.status != RecordStatus::Pending || record.decision_by(a).is_some() {
                continue;
            }
            if let Some(input) = reviewer.decide(record, a) {
                store.record_decision(id, a, input)?;
            }
        }
        let record = store.record(id).expect("queued");
        if record.status == RecordStatus::Conflict {
            if let Some(input) = reviewer.adjudicate(record) {
                store.adjudicate(id, &adjudicator, input)?;
            }
        }
    }

    let report = store.round_report(round)?;
    if report.decided < report.items {
        log::info!("round {round}: {} of {} decided, left open", report.decided, report.items);
        return Ok(report);
    }
    let records: Vec<&AnnotationRecord> = store.records().iter().filter(|r| r.round == round).collect();
    let few_shot = select_few_shot(&records, store);
    store.close_round(round, few_shot)
}

/// Up to `MAX_FEW_SHOT` gold examples with distinct drugs, corrected
/// records first since they show where the model went wrong.
pub fn select_few_shot(records: &[&AnnotationRecord], store: &QueueStore) -> Vec<FewShotExample> {
    let (corrected, rest): (Vec<&AnnotationRecord>, Vec<&AnnotationRecord>) =
        records.iter().partition(|r| r.corrected());
    let mut drugs: BTreeSet<DrugClass> = BTreeSet::new();
    let mut out = Vec::new();
    for r in corrected.into_iter().chain(rest) {
        if out.len() == MAX_FEW_SHOT {
            break;
        }
        let Some(gold) = r.resolved() else { continue };
        if !drugs.insert(gold.drug) {
            continue;
        }
        out.push(FewShotExample {
            text: r.post.text.chars().take(FEW_SHOT_CHARS).collect(),
            drug: gold.drug,
            symptoms: gold
                .symptoms
                .iter()
                .filter_map(|&s| store.vocab().label(s).map(String::from))
                .collect(),
            flags: gold.flags.into_iter().collect(),
        });
    }
    out
}
