//! Append-only event log plus snapshot. The log is the source of truth;
//! the snapshot only shortens replay.
//!
//! Layout of a store directory:
//! - `events.jsonl`: one `{seq, ts, kind, payload}` object per line
//! - `snapshot.json`: `{last_seq, ...state}` written atomically

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::agreement::{agreement_report, AgreementReport};
use super::prompt::FewShotExample;
use super::round::RoundReport;
use super::{
    AnnotateError, AnnotationRecord, Decision, DecisionInput, QueueConfig, RecordStatus, SuggestedAnnotation,
    SuggestionStatus,
};
use crate::corpus::{write_labeled, LabeledPost, Post, SymptomVocabulary};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Suggested,
    Decided,
    Adjudicated,
    RoundClosed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub ts: String,
    pub kind: EventKind,
    pub payload: Value,
}

#[derive(Serialize, Deserialize)]
struct SuggestedPayload {
    post: Post,
    round: u32,
    suggestion: Option<SuggestedAnnotation>,
}

#[derive(Serialize, Deserialize)]
struct DecidedPayload {
    post_id: String,
    annotator: String,
    #[serde(flatten)]
    labels: DecisionInput,
}

#[derive(Serialize, Deserialize)]
struct RoundClosedPayload {
    round: u32,
    report: RoundReport,
    few_shot: Vec<FewShotExample>,
}

/// Everything derivable from the event log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub last_seq: u64,
    records: Vec<AnnotationRecord>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    pub closed_rounds: BTreeMap<u32, RoundReport>,
    /// Examples for the next round's prompts.
    pub few_shot: Vec<FewShotExample>,
    /// Decisions that changed a usable suggestion.
    pub corrections: usize,
}

fn corrupt(path: &str, message: impl Into<String>) -> AnnotateError {
    AnnotateError::CorruptLog {
        path: path.into(),
        message: message.into(),
    }
}

impl QueueState {
    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn record(&self, post_id: &str) -> Option<&AnnotationRecord> {
        self.index.get(post_id).map(|&i| &self.records[i])
    }

    fn reindex(&mut self) {
        self.index = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.post.id.clone(), i))
            .collect();
    }

    /// Rounds that have records but no close event.
    pub fn open_rounds(&self) -> BTreeSet<u32> {
        self.records
            .iter()
            .map(|r| r.round)
            .filter(|r| !self.closed_rounds.contains_key(r))
            .collect()
    }

    pub fn current_round(&self) -> Option<u32> {
        self.records
            .iter()
            .map(|r| r.round)
            .chain(self.closed_rounds.keys().cloned())
            .max()
    }

    /// Applies one event. Events at or below `last_seq` are skipped, so
    /// replaying an overlapping log is harmless.
    pub fn apply(&mut self, event: &Event, cfg: &QueueConfig) -> Result<(), AnnotateError> {
        if event.seq <= self.last_seq {
            return Ok(());
        }
        let src = "event log";
        if event.seq != self.last_seq + 1 {
            return Err(corrupt(src, format!("expected seq {}, found {}", self.last_seq + 1, event.seq)));
        }
        let bad = |e: serde_json::Error| corrupt(src, format!("seq {}: {e}", event.seq));
        match event.kind {
            EventKind::Suggested => {
                let p: SuggestedPayload = serde_json::from_value(event.payload.clone()).map_err(bad)?;
                if self.index.contains_key(&p.post.id) {
                    return Err(corrupt(src, format!("seq {}: {} queued twice", event.seq, p.post.id)));
                }
                self.index.insert(p.post.id.clone(), self.records.len());
                self.records.push(AnnotationRecord {
                    post: p.post,
                    round: p.round,
                    suggestion: p.suggestion,
                    decisions: Vec::new(),
                    adjudication: None,
                    status: RecordStatus::Pending,
                });
            }
            EventKind::Decided | EventKind::Adjudicated => {
                let p: DecidedPayload = serde_json::from_value(event.payload.clone()).map_err(bad)?;
                let i = *self
                    .index
                    .get(&p.post_id)
                    .ok_or_else(|| corrupt(src, format!("seq {}: unknown post {}", event.seq, p.post_id)))?;
                let record = &mut self.records[i];
                if p.labels.corrects(record.suggestion.as_ref()) {
                    self.corrections += 1;
                }
                let decision = Decision {
                    annotator: p.annotator,
                    labels: p.labels,
                    timestamp: event.ts.clone(),
                };
                if event.kind == EventKind::Decided {
                    record.decisions.push(decision);
                } else {
                    record.adjudication = Some(decision);
                }
                record.recompute_status(cfg);
            }
            EventKind::RoundClosed => {
                let p: RoundClosedPayload = serde_json::from_value(event.payload.clone()).map_err(bad)?;
                self.closed_rounds.insert(p.round, p.report);
                self.few_shot = p.few_shot;
            }
        }
        self.last_seq = event.seq;
        Ok(())
    }

    /// Rebuilds state from a complete log.
    pub fn replay<'a, I: IntoIterator<Item = &'a Event>>(events: I, cfg: &QueueConfig) -> Result<Self, AnnotateError> {
        let mut state = QueueState::default();
        for e in events {
            state.apply(e, cfg)?;
        }
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueStats {
    pub total: usize,
    pub pending: usize,
    pub decided: usize,
    pub conflict: usize,
    /// Decisions that changed a usable suggestion.
    pub corrections: usize,
    /// Decided records whose gold differs from their suggestion, over
    /// decided records.
    pub correction_rate: f64,
    pub kappa_drug: Option<f64>,
    pub kappa_symptoms: Option<f64>,
    pub round: Option<u32>,
    pub closed_rounds: Vec<u32>,
    pub annotators: Vec<String>,
}

type Clock = Box<dyn Fn() -> String + Send + Sync>;

/// Single owner of the queue: every mutation is validated, appended to
/// the log, then applied.
pub struct QueueStore {
    dir: Option<PathBuf>,
    log: Option<File>,
    state: QueueState,
    config: QueueConfig,
    vocab: SymptomVocabulary,
    clock: Clock,
    since_snapshot: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnnotateError + '_ {
    move |source| AnnotateError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl QueueStore {
    pub fn in_memory(config: QueueConfig, vocab: SymptomVocabulary) -> Self {
        QueueStore {
            dir: None,
            log: None,
            state: QueueState::default(),
            config,
            vocab,
            clock: Box::new(now),
            since_snapshot: 0,
        }
    }

    /// Opens (or creates) a store directory: loads the snapshot if any,
    /// then replays newer log events. A torn final log line, left by a
    /// crash mid-write, is cut off.
    pub fn open(dir: &Path, config: QueueConfig, vocab: SymptomVocabulary) -> Result<Self, AnnotateError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let snapshot_path = dir.join(SNAPSHOT_FILE);
        let mut state = if snapshot_path.exists() {
            let text = fs::read_to_string(&snapshot_path).map_err(io_err(&snapshot_path))?;
            let mut s: QueueState = serde_json::from_str(&text)
                .map_err(|e| corrupt(&snapshot_path.display().to_string(), e.to_string()))?;
            s.reindex();
            s
        } else {
            QueueState::default()
        };
        let events_path = dir.join(EVENTS_FILE);
        let events = read_log(&events_path, true)?;
        if state.last_seq > events.last().map_or(0, |e| e.seq) {
            return Err(corrupt(
                &events_path.display().to_string(),
                "snapshot is newer than the event log",
            ));
        }
        for e in &events {
            state.apply(e, &config)?;
        }
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&events_path)
            .map_err(io_err(&events_path))?;
        Ok(QueueStore {
            dir: Some(dir.to_path_buf()),
            log: Some(log),
            state,
            config,
            vocab,
            clock: Box::new(now),
            since_snapshot: 0,
        })
    }

    /// Replaces the timestamp source, e.g. with a fixed clock in tests.
    pub fn with_clock<F: Fn() -> String + Send + Sync + 'static>(mut self, clock: F) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn state(&self) -> &QueueState {
        &self.state
    }

    pub fn config(&self) -> &QueueConfig {
        &self.config
    }

    pub fn vocab(&self) -> &SymptomVocabulary {
        &self.vocab
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        self.state.records()
    }

    pub fn record(&self, post_id: &str) -> Option<&AnnotationRecord> {
        self.state.record(post_id)
    }

    fn append<P: Serialize>(&mut self, kind: EventKind, payload: &P) -> Result<(), AnnotateError> {
        let event = Event {
            seq: self.state.last_seq + 1,
            ts: (self.clock)(),
            kind,
            payload: serde_json::to_value(payload)?,
        };
        if let (Some(log), Some(dir)) = (self.log.as_mut(), self.dir.as_ref()) {
            let mut line = serde_json::to_vec(&event)?;
            line.push(b'\n');
            let path = dir.join(EVENTS_FILE);
            log.write_all(&line).map_err(io_err(&path))?;
            log.flush().map_err(io_err(&path))?;
        }
        self.state.apply(&event, &self.config)?;
        self.since_snapshot += 1;
        if self.config.snapshot_every > 0 && self.since_snapshot >= self.config.snapshot_every {
            self.snapshot()?;
        }
        Ok(())
    }

    /// Writes the snapshot atomically (temp file, then rename).
    pub fn snapshot(&mut self) -> Result<(), AnnotateError> {
        self.since_snapshot = 0;
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let path = dir.join(SNAPSHOT_FILE);
        fs::write(&tmp, serde_json::to_vec(&self.state)?).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    /// Queues posts for `round`, each with its suggestion if one was made.
    /// Rejects the whole batch if any id is already queued or repeated.
    /// Only one round may be open at a time.
    pub fn enqueue_batch(
        &mut self,
        items: Vec<(Post, Option<SuggestedAnnotation>)>,
        round: u32,
    ) -> Result<usize, AnnotateError> {
        if items.is_empty() {
            return Ok(0);
        }
        if self.state.closed_rounds.contains_key(&round) || self.state.closed_rounds.keys().any(|&r| r > round) {
            return Err(AnnotateError::RoundClosed(round));
        }
        if let Some(&open) = self.state.open_rounds().iter().find(|&&r| r != round) {
            return Err(AnnotateError::RoundOpen(open));
        }
        let mut seen = BTreeSet::new();
        let dupes: Vec<String> = items
            .iter()
            .map(|(p, _)| &p.id)
            .filter(|id| self.state.index.contains_key(*id) || !seen.insert(*id))
            .cloned()
            .collect();
        if !dupes.is_empty() {
            return Err(AnnotateError::AlreadyQueued(dupes));
        }
        let n = items.len();
        for (post, suggestion) in items {
            self.append(EventKind::Suggested, &SuggestedPayload { post, round, suggestion })?;
        }
        Ok(n)
    }

    fn validate(&self, post_id: &str, annotator: &str, labels: &DecisionInput) -> Result<&AnnotationRecord, AnnotateError> {
        let record = self
            .record(post_id)
            .ok_or_else(|| AnnotateError::UnknownPost(post_id.into()))?;
        let invalid = |message: &str| AnnotateError::InvalidDecision {
            post_id: post_id.into(),
            message: message.into(),
        };
        if annotator.trim().is_empty() {
            return Err(invalid("annotator id is empty"));
        }
        if labels.symptoms.iter().any(|&s| s >= self.vocab.len()) {
            return Err(invalid("symptom outside vocabulary"));
        }
        if labels.symptoms.is_empty() && labels.flags.is_empty() {
            return Err(invalid("no symptoms and no flag explaining their absence"));
        }
        if self.state.closed_rounds.contains_key(&record.round) {
            return Err(AnnotateError::RoundClosed(record.round));
        }
        Ok(record)
    }

    /// Appends a human decision. The configured adjudicator's decision on
    /// a conflicting record settles it instead.
    pub fn record_decision(
        &mut self,
        post_id: &str,
        annotator: &str,
        labels: DecisionInput,
    ) -> Result<&AnnotationRecord, AnnotateError> {
        let record = self.validate(post_id, annotator, &labels)?;
        if record.status == RecordStatus::Conflict && annotator == self.config.adjudicator {
            return self.adjudicate(post_id, annotator, labels);
        }
        if record.decision_by(annotator).is_some() {
            return Err(AnnotateError::DuplicateDecision {
                post_id: post_id.into(),
                annotator: annotator.into(),
            });
        }
        let payload = DecidedPayload {
            post_id: post_id.into(),
            annotator: annotator.into(),
            labels,
        };
        self.append(EventKind::Decided, &payload)?;
        Ok(self.record(post_id).expect("just decided"))
    }

    /// Settles a record by fiat, whatever its status.
    pub fn adjudicate(
        &mut self,
        post_id: &str,
        annotator: &str,
        labels: DecisionInput,
    ) -> Result<&AnnotationRecord, AnnotateError> {
        self.validate(post_id, annotator, &labels)?;
        let payload = DecidedPayload {
            post_id: post_id.into(),
            annotator: annotator.into(),
            labels,
        };
        self.append(EventKind::Adjudicated, &payload)?;
        Ok(self.record(post_id).expect("just adjudicated"))
    }

    /// Oldest pending record this annotator has not decided yet.
    pub fn next_for(&self, annotator: &str) -> Option<&AnnotationRecord> {
        self.records()
            .iter()
            .find(|r| r.status == RecordStatus::Pending && r.decision_by(annotator).is_none())
    }

    /// Annotators (excluding the adjudicator) with at least one decision.
    pub fn annotators(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self
            .records()
            .iter()
            .flat_map(|r| r.decisions.iter().map(|d| &d.annotator))
            .filter(|a| **a != self.config.adjudicator)
            .collect();
        set.into_iter().cloned().collect()
    }

    /// Agreement over the records every listed annotator decided. `None`
    /// with fewer than two annotators or no fully covered record.
    pub fn agreement<'a, I>(&self, records: I) -> Result<Option<AgreementReport>, AnnotateError>
    where
        I: IntoIterator<Item = &'a AnnotationRecord>,
    {
        let records: Vec<&AnnotationRecord> = records.into_iter().collect();
        let annotators: Vec<String> = {
            let set: BTreeSet<&String> = records
                .iter()
                .flat_map(|r| r.decisions.iter().map(|d| &d.annotator))
                .filter(|a| **a != self.config.adjudicator)
                .collect();
            set.into_iter().cloned().collect()
        };
        if annotators.len() < 2 {
            return Ok(None);
        }
        let covered: Vec<&AnnotationRecord> = records
            .into_iter()
            .filter(|r| annotators.iter().all(|a| r.decision_by(a).is_some()))
            .collect();
        if covered.is_empty() {
            return Ok(None);
        }
        agreement_report(covered, &annotators, self.vocab.labels()).map(Some)
    }

    pub fn stats(&self) -> QueueStats {
        let records = self.records();
        let count = |s: RecordStatus| records.iter().filter(|r| r.status == s).count();
        let decided = count(RecordStatus::Decided);
        let corrected = records.iter().filter(|r| r.corrected()).count();
        let agreement = self.agreement(records).ok().flatten();
        QueueStats {
            total: records.len(),
            pending: count(RecordStatus::Pending),
            decided,
            conflict: count(RecordStatus::Conflict),
            corrections: self.state.corrections,
            correction_rate: if decided == 0 { 0.0 } else { corrected as f64 / decided as f64 },
            kappa_drug: agreement.as_ref().map(|a| a.drug.kappa),
            kappa_symptoms: agreement.as_ref().and_then(|a| a.symptoms.macro_kappa),
            round: self.state.current_round(),
            closed_rounds: self.state.closed_rounds.keys().cloned().collect(),
            annotators: self.annotators(),
        }
    }

    pub fn round_report(&self, round: u32) -> Result<RoundReport, AnnotateError> {
        if let Some(r) = self.state.closed_rounds.get(&round) {
            return Ok(r.clone());
        }
        let records: Vec<&AnnotationRecord> = self.records().iter().filter(|r| r.round == round).collect();
        if records.is_empty() {
            return Err(AnnotateError::EmptyRound(round));
        }
        let status = |s: SuggestionStatus| {
            records
                .iter()
                .filter(|r| r.suggestion.as_ref().map(|x| x.status) == Some(s))
                .count()
        };
        let decided = records.iter().filter(|r| r.status == RecordStatus::Decided).count();
        let corrected = records.iter().filter(|r| r.corrected()).count();
        let earlier_gold: usize = self
            .state
            .closed_rounds
            .values()
            .filter(|r| r.round < round)
            .map(|r| r.decided)
            .sum();
        Ok(RoundReport {
            round,
            closed: false,
            items: records.len(),
            suggested: records.iter().filter(|r| r.suggestion.is_some()).count(),
            suggestion_ok: status(SuggestionStatus::Ok),
            parse_failed: status(SuggestionStatus::ParseFailed),
            transport_failed: status(SuggestionStatus::TransportFailed),
            decided,
            corrected,
            correction_rate: if decided == 0 { 0.0 } else { corrected as f64 / decided as f64 },
            agreement: self.agreement(records.iter().cloned())?,
            gold_total: earlier_gold + decided,
        })
    }

    /// Closes a fully decided round, recording its report and the
    /// few-shot examples for the next one.
    pub fn close_round(&mut self, round: u32, few_shot: Vec<FewShotExample>) -> Result<RoundReport, AnnotateError> {
        if self.state.closed_rounds.contains_key(&round) {
            return Err(AnnotateError::RoundClosed(round));
        }
        let mut report = self.round_report(round)?;
        if report.decided < report.items {
            return Err(AnnotateError::RoundIncomplete {
                round,
                undecided: report.items - report.decided,
            });
        }
        report.closed = true;
        self.append(
            EventKind::RoundClosed,
            &RoundClosedPayload {
                round,
                report: report.clone(),
                few_shot,
            },
        )?;
        self.snapshot()?;
        Ok(report)
    }

    /// Gold labels of decided records in queue order, optionally for one
    /// round only.
    pub fn export_gold(&self, round: Option<u32>) -> Vec<LabeledPost> {
        self.records()
            .iter()
            .filter(|r| round.is_none_or(|n| r.round == n))
            .filter_map(AnnotationRecord::to_labeled)
            .collect()
    }

    pub fn write_gold(&self, path: &Path, round: Option<u32>) -> Result<usize, AnnotateError> {
        let gold = self.export_gold(round);
        write_labeled(path, &gold, &self.vocab).map_err(|e| AnnotateError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?;
        Ok(gold.len())
    }

    /// All events in a store directory's log.
    pub fn read_events(dir: &Path) -> Result<Vec<Event>, AnnotateError> {
        read_log(&dir.join(EVENTS_FILE), false)
    }
}

/// Parses a log. A torn final line is dropped, and also cut from the
/// file when `repair` is set; a bad line anywhere else is an error.
fn read_log(path: &Path, repair: bool) -> Result<Vec<Event>, AnnotateError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(io_err(path))?;
    let mut events = Vec::new();
    let mut good_bytes = 0u64;
    let mut lines = BufReader::new(file).split(b'\n').enumerate().peekable();
    while let Some((i, line)) = lines.next() {
        let line = line.map_err(io_err(path))?;
        let is_last = lines.peek().is_none();
        if line.iter().all(u8::is_ascii_whitespace) {
            good_bytes += line.len() as u64 + 1;
            continue;
        }
        match serde_json::from_slice::<Event>(&line) {
            Ok(e) => {
                events.push(e);
                good_bytes += line.len() as u64 + 1;
            }
            Err(e) if is_last => {
                log::warn!("{}: dropping torn final line {}: {e}", path.display(), i + 1);
                if repair {
                    let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
                    f.set_len(good_bytes).map_err(io_err(path))?;
                }
            }
            Err(e) => return Err(corrupt(&path.display().to_string(), format!("line {}: {e}", i + 1))),
        }
    }
    Ok(events)
}
