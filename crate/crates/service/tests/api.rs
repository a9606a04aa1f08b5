use std::collections::BTreeSet;
use std::path::Path;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use dosewatch_core::annotate::{
    agreement_report, AnnotateError, AnnotationRecord, DecisionInput, QueueConfig, QueueState, QueueStore,
    RecordStatus, SuggestedAnnotation, SuggestionStatus,
};
use dosewatch_core::metrics::interpret_kappa;
use dosewatch_core::{DrugClass, Flag, Post, SlangLexicon, SymptomSet, SymptomVocabulary};
use dosewatch_service::{app, router, ApiConfig, AppState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

const TS: &str = "2026-01-01T00:00:00Z";

fn vocab() -> SymptomVocabulary {
    SymptomVocabulary::seed()
}

fn sym(labels: &[&str]) -> SymptomSet {
    let v = vocab();
    labels.iter().map(|l| v.index_of(l).unwrap()).collect()
}

fn suggestion(id: &str, drug: DrugClass, symptoms: &[&str]) -> SuggestedAnnotation {
    SuggestedAnnotation {
        post_id: id.into(),
        drug: Some(drug),
        symptoms: sym(symptoms),
        flags: BTreeSet::new(),
        rationale: "lexicon match".into(),
        raw_response: None,
        status: SuggestionStatus::Ok,
        error: None,
        template: "default".into(),
    }
}

fn posts(n: usize) -> Vec<(Post, Option<SuggestedAnnotation>)> {
    (0..n)
        .map(|i| {
            let id = format!("p{i}");
            let drug = DrugClass::ALL[i % 8];
            let s = suggestion(&id, drug, &["nausea"]);
            (Post::new(id, format!("post {i} took some molly and felt dizzy")), Some(s))
        })
        .collect()
}

fn store(cfg: QueueConfig, n: usize) -> QueueStore {
    let mut s = QueueStore::in_memory(cfg, vocab()).with_clock(|| TS.to_string());
    if n > 0 {
        s.enqueue_batch(posts(n), 1).unwrap();
    }
    s
}

fn state_of(s: QueueStore) -> AppState {
    AppState::new(s, SlangLexicon::seed())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    raw(app, req).await
}

async fn raw(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn decision(annotator: &str, drug: &str, symptoms: &[&str]) -> Value {
    json!({"annotator": annotator, "drug": drug, "symptoms": symptoms, "flags": []})
}

#[tokio::test]
async fn next_returns_the_single_pending_record_then_204() {
    let state = state_of(store(QueueConfig::default(), 1));
    let app = router(state);
    for prefix in ["/api/v1", "/api"] {
        let (code, item) = call(&app, "GET", &format!("{prefix}/queue/next?annotator=ann"), None).await;
        assert_eq!(code, StatusCode::OK);
        assert_eq!(item["post_id"], "p0");
        assert_eq!(item["suggestion"]["drug"], "Alcohol");
        assert_eq!(item["suggestion"]["symptoms"], json!(["nausea"]));
        assert_eq!(item["suggestion"]["usable"], true);
        assert_eq!(item["status"], "pending");
        assert_eq!(item["progress"], json!({"round": 1, "total": 1, "decided": 0, "conflict": 0, "closed": false}));
    }
    let (code, _) = call(&app, "POST", "/api/v1/items/p0/decision", Some(decision("ann", "Alcohol", &["nausea"]))).await;
    assert_eq!(code, StatusCode::OK);
    let (code, body) = call(&app, "GET", "/api/v1/queue/next?annotator=ann", None).await;
    assert_eq!(code, StatusCode::NO_CONTENT);
    assert_eq!(body, Value::Null);
}

#[tokio::test]
async fn next_requires_an_annotator() {
    let app = router(state_of(store(QueueConfig::default(), 1)));
    for uri in ["/api/v1/queue/next", "/api/v1/queue/next?annotator=", "/api/v1/queue/next?annotator=%20"] {
        let (code, body) = call(&app, "GET", uri, None).await;
        assert_eq!(code, StatusCode::BAD_REQUEST, "{uri}");
        assert_eq!(body["error"], "bad_request");
    }
}

#[tokio::test]
async fn item_view_carries_highlights() {
    let app = router(state_of(store(QueueConfig::default(), 1)));
    let (code, item) = call(&app, "GET", "/api/v1/items/p0", None).await;
    assert_eq!(code, StatusCode::OK);
    let tokens: Vec<String> = serde_json::from_value(item["tokens"].clone()).unwrap();
    assert_eq!(tokens, ["post", "took", "some", "molly", "and", "felt", "dizzy"]);
    assert_eq!(
        item["highlights"],
        json!([
            {"kind": "drug", "start": 3, "len": 1, "phrase": "molly", "value": "Ecstasy"},
            {"kind": "symptom", "start": 6, "len": 1, "phrase": "dizzy", "value": "dizziness"},
        ])
    );
    let (code, body) = call(&app, "GET", "/api/v1/items/nope", None).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "unknown_post");
}

#[tokio::test]
async fn decision_status_codes() {
    let app = router(state_of(store(QueueConfig::default(), 2)));
    let url = "/api/v1/items/p0/decision";

    let (code, body) = call(&app, "POST", url, Some(decision("a", "Vodka", &["nausea"]))).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "invalid_labels");
    let (code, _) = call(&app, "POST", url, Some(decision("a", "Alcohol", &["itchy elbows"]))).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY);
    let (code, _) = call(&app, "POST", url, Some(json!({"annotator": "a", "drug": "Alcohol", "symptoms": [], "flags": ["sleepy"]}))).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY);
    let (code, _) = call(&app, "POST", url, Some(decision("a", "Alcohol", &[]))).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY, "no symptoms and no flags");
    let (code, _) = call(&app, "POST", url, Some(json!({"annotator": "a"}))).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY, "missing drug");
    let (code, _) = call(&app, "POST", url, Some(decision("", "Alcohol", &["nausea"]))).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY);
    let req = Request::post(url).body(Body::from("{not json")).unwrap();
    let (code, body) = raw(&app, req).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "bad_request");

    let (code, body) = call(&app, "POST", url, Some(decision("a", "alcohol", &["nausea"]))).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(
        body,
        json!({"post_id": "p0", "status": "decided", "decisions": 1, "corrections": 0, "correction_rate": 0.0})
    );

    let (code, body) = call(&app, "POST", url, Some(decision("a", "Alcohol", &["nausea"]))).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert_eq!(body["error"], "duplicate_decision");

    let (code, _) = call(&app, "POST", "/api/v1/items/zzz/decision", Some(decision("a", "Alcohol", &["nausea"]))).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    let (code, _) = call(&app, "POST", "/api/v1/items/zzz/decision", Some(decision("a", "Vodka", &[]))).await;
    assert_eq!(code, StatusCode::NOT_FOUND, "unknown id wins over bad labels");
}

#[tokio::test]
async fn flag_only_decision_is_accepted() {
    let state = state_of(store(QueueConfig::default(), 1));
    let app = router(state.clone());
    let body = json!({"annotator": "a", "drug": "Heroin", "symptoms": [], "flags": ["polydrug_uncertainty"]});
    let (code, _) = call(&app, "POST", "/api/v1/items/p0/decision", Some(body)).await;
    assert_eq!(code, StatusCode::OK);
    let store = state.store();
    let d = store.record("p0").unwrap().decision_by("a").unwrap();
    assert_eq!(d.labels.flags, BTreeSet::from([Flag::PolydrugUncertainty]));
}

/// Independent oracle: replays the event log and picks, for each
/// annotator, the first pending record without their decision.
fn oracle_next(events: &[dosewatch_core::annotate::Event], cfg: &QueueConfig, annotator: &str) -> Option<String> {
    let state = QueueState::replay(events, cfg).unwrap();
    state
        .records()
        .iter()
        .filter(|r| r.status == RecordStatus::Pending)
        .find(|r| !r.decisions.iter().any(|d| d.annotator == annotator))
        .map(|r| r.post.id.clone())
}

#[tokio::test]
async fn two_annotators_are_tracked_independently() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = QueueConfig::three_annotators();
    let mut s = QueueStore::open(dir.path(), cfg.clone(), vocab()).unwrap().with_clock(|| TS.into());
    s.enqueue_batch(posts(6), 1).unwrap();
    let app = router(state_of(s));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut served = 0;
    for _ in 0..16 {
        let who = if rng.random_bool(0.5) { "ann" } else { "bob" };
        let (code, item) = call(&app, "GET", &format!("/api/v1/queue/next?annotator={who}"), None).await;
        let events = QueueStore::read_events(dir.path()).unwrap();
        let expected = oracle_next(&events, &cfg, who);
        match expected {
            Some(id) => {
                assert_eq!(code, StatusCode::OK);
                assert_eq!(item["post_id"], id.as_str());
                let (c, _) =
                    call(&app, "POST", &format!("/api/v1/items/{id}/decision"), Some(decision(who, "Heroin", &["coma"]))).await;
                assert_eq!(c, StatusCode::OK);
                served += 1;
            }
            None => assert_eq!(code, StatusCode::NO_CONTENT),
        }
    }
    let events = QueueStore::read_events(dir.path()).unwrap();
    let state = QueueState::replay(&events, &cfg).unwrap();
    let by = |a: &str| state.records().iter().filter(|r| r.decision_by(a).is_some()).count();
    assert_eq!(by("ann") + by("bob"), served);
    assert!(by("ann") > 0 && by("bob") > 0);
    // Nobody else has decided, so with three required decisions every
    // record is still pending and each annotator walked the queue alone.
    assert!(state.records().iter().all(|r| r.status == RecordStatus::Pending));
    let ids: Vec<&str> = state.records().iter().map(|r| r.post.id.as_str()).collect();
    for a in ["ann", "bob"] {
        let mine: Vec<&str> = state
            .records()
            .iter()
            .filter(|r| r.decision_by(a).is_some())
            .map(|r| r.post.id.as_str())
            .collect();
        assert_eq!(mine, ids[..mine.len()].to_vec(), "{a} got a prefix of the queue");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_decisions_lose_no_events() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = QueueStore::open(dir.path(), QueueConfig::default(), vocab()).unwrap();
    s.enqueue_batch(posts(40), 1).unwrap();
    let before = s.state().last_seq;
    let app = router(state_of(s));
    let mut handles = Vec::new();
    for i in 0..40 {
        // "a" posts every decision twice; only one copy may land.
        for who in ["a", "a", "b"] {
            let app = app.clone();
            handles.push(tokio::spawn(async move {
                let drug = DrugClass::ALL[i % 8].name();
                call(&app, "POST", &format!("/api/v1/items/p{i}/decision"), Some(decision(who, drug, &["nausea"]))).await.0
            }));
        }
    }
    let (mut accepted, mut rejected) = (0, 0);
    for h in handles {
        match h.await.unwrap() {
            StatusCode::OK => accepted += 1,
            StatusCode::CONFLICT => rejected += 1,
            other => panic!("unexpected {other}"),
        }
    }
    let events = QueueStore::read_events(dir.path()).unwrap();
    assert_eq!((accepted, rejected), (80, 40));
    assert_eq!(events.len() as u64 - before, accepted);
    let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, (1..=events.len() as u64).collect::<Vec<_>>());
}

#[derive(Debug, Clone)]
enum Op {
    Decide { id: String, annotator: String, drug: String, symptoms: Vec<String>, flags: Vec<String> },
    Close(u32),
}

fn random_op(rng: &mut ChaCha8Rng, labels: &[String], n_items: usize) -> Op {
    if rng.random_bool(0.05) {
        return Op::Close(rng.random_range(1..=2));
    }
    let annotators = ["a", "b", "c", "adjudicator"];
    let drugs = ["Heroin", "Fentanyl", "Cocaine", "Vodka"];
    let id = if rng.random_bool(0.05) { "ghost".to_string() } else { format!("p{}", rng.random_range(0..n_items)) };
    let k = rng.random_range(0..3);
    let mut symptoms: Vec<String> = (0..k).map(|_| labels[rng.random_range(0..labels.len())].clone()).collect();
    if rng.random_bool(0.03) {
        symptoms.push("itchy elbows".into());
    }
    let flags = if rng.random_bool(0.2) { vec!["withdrawal_suspected".to_string()] } else { vec![] };
    Op::Decide {
        id,
        annotator: annotators[rng.random_range(0..annotators.len())].into(),
        drug: drugs[rng.random_range(0..drugs.len())].into(),
        symptoms,
        flags,
    }
}

/// The status the API should answer for a library outcome, written out
/// here rather than borrowed from the service.
fn expected_code(r: &Result<(), AnnotateError>) -> StatusCode {
    match r {
        Ok(()) => StatusCode::OK,
        Err(AnnotateError::UnknownPost(_) | AnnotateError::EmptyRound(_)) => StatusCode::NOT_FOUND,
        Err(AnnotateError::InvalidDecision { .. }) => StatusCode::UNPROCESSABLE_ENTITY,
        Err(
            AnnotateError::DuplicateDecision { .. }
            | AnnotateError::RoundClosed(_)
            | AnnotateError::RoundIncomplete { .. }
            | AnnotateError::RoundOpen(_),
        ) => StatusCode::CONFLICT,
        Err(e) => panic!("unexpected library error {e}"),
    }
}

fn apply_library(store: &mut QueueStore, op: &Op) -> Result<(), AnnotateError> {
    match op {
        Op::Decide { id, annotator, drug, symptoms, flags } => {
            if store.record(id).is_none() {
                return Err(AnnotateError::UnknownPost(id.clone()));
            }
            let drug: DrugClass = match drug.parse() {
                Ok(d) => d,
                Err(_) => return Err(AnnotateError::InvalidDecision { post_id: id.clone(), message: "drug".into() }),
            };
            let mut set = SymptomSet::new();
            for s in symptoms {
                match store.vocab().index_of(s) {
                    Some(i) => {
                        set.insert(i);
                    }
                    None => return Err(AnnotateError::InvalidDecision { post_id: id.clone(), message: "symptom".into() }),
                }
            }
            let flags = flags.iter().map(|f| f.parse::<Flag>().unwrap()).collect();
            store.record_decision(id, annotator, DecisionInput { drug, symptoms: set, flags }).map(|_| ())
        }
        Op::Close(round) => {
            let records: Vec<AnnotationRecord> = store.records().iter().filter(|r| r.round == *round).cloned().collect();
            let refs: Vec<&AnnotationRecord> = records.iter().collect();
            let few_shot = dosewatch_core::annotate::select_few_shot(&refs, store);
            store.close_round(*round, few_shot).map(|_| ())
        }
    }
}

async fn apply_api(app: &Router, op: &Op) -> StatusCode {
    match op {
        Op::Decide { id, annotator, drug, symptoms, flags } => {
            let body = json!({"annotator": annotator, "drug": drug, "symptoms": symptoms, "flags": flags});
            call(app, "POST", &format!("/api/v1/items/{id}/decision"), Some(body)).await.0
        }
        Op::Close(round) => call(app, "POST", &format!("/api/v1/rounds/{round}/close"), None).await.0,
    }
}

#[tokio::test]
async fn api_and_library_agree_on_random_sequences() {
    let labels = vocab().labels().to_vec();
    for seed in 0..12u64 {
        let lib_dir = tempfile::tempdir().unwrap();
        let api_dir = tempfile::tempdir().unwrap();
        let cfg = if seed % 2 == 0 { QueueConfig::three_annotators() } else { QueueConfig::default() };
        let open = |p: &Path| {
            let mut s = QueueStore::open(p, cfg.clone(), vocab()).unwrap().with_clock(|| TS.into());
            s.enqueue_batch(posts(6), 1).unwrap();
            s
        };
        let mut lib = open(lib_dir.path());
        let state = state_of(open(api_dir.path()));
        let app = router(state.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for step in 0..120 {
            let op = random_op(&mut rng, &labels, 6);
            let expected = expected_code(&apply_library(&mut lib, &op));
            let got = apply_api(&app, &op).await;
            assert_eq!(got, expected, "seed {seed} step {step}: {op:?}");
            assert_eq!(state.store().state(), lib.state(), "seed {seed} step {step}");
        }
        let a = std::fs::read_to_string(lib_dir.path().join("events.jsonl")).unwrap();
        let b = std::fs::read_to_string(api_dir.path().join("events.jsonl")).unwrap();
        assert_eq!(a, b, "seed {seed}: identical event logs");
        let (_, stats) = call(&app, "GET", "/api/v1/stats", None).await;
        assert_eq!(stats["decided"], lib.stats().decided);
        assert_eq!(stats["corrections"], lib.stats().corrections);
    }
}

#[tokio::test]
async fn stats_on_an_empty_queue() {
    let app = router(state_of(store(QueueConfig::default(), 0)));
    let (code, s) = call(&app, "GET", "/api/v1/stats", None).await;
    assert_eq!(code, StatusCode::OK);
    for key in ["total", "pending", "decided", "conflict", "corrections"] {
        assert_eq!(s[key], 0, "{key}");
    }
    assert_eq!(s["correction_rate"], 0.0);
    for key in ["kappa_drug", "kappa_symptoms", "kappa_drug_band", "kappa_symptoms_band", "round"] {
        assert!(s[key].is_null(), "{key}");
    }
    assert_eq!(s["rounds"], json!([]));
}

/// Labels per post for three annotators.
type Fixture = Vec<[(DrugClass, &'static [&'static str]); 3]>;

async fn fill(app: &Router, fixture: &Fixture) {
    for (i, row) in fixture.iter().enumerate() {
        for (who, (drug, symptoms)) in ["a", "b", "c"].iter().zip(row) {
            let (code, _) =
                call(app, "POST", &format!("/api/v1/items/p{i}/decision"), Some(decision(who, drug.name(), symptoms))).await;
            assert_eq!(code, StatusCode::OK);
        }
    }
}

#[tokio::test]
async fn stats_on_a_fully_agreed_queue() {
    use DrugClass::*;
    let fixture: Fixture = vec![
        [(Heroin, &["coma"]), (Heroin, &["coma"]), (Heroin, &["coma"])],
        [(Cocaine, &["tachycardia"]), (Cocaine, &["tachycardia"]), (Cocaine, &["tachycardia"])],
        [(Lsd, &["hallucinations", "coma"]), (Lsd, &["hallucinations", "coma"]), (Lsd, &["hallucinations", "coma"])],
        [(Heroin, &["tachycardia"]), (Heroin, &["tachycardia"]), (Heroin, &["tachycardia"])],
    ];
    let app = router(state_of(store(QueueConfig::three_annotators(), fixture.len())));
    fill(&app, &fixture).await;
    let (_, s) = call(&app, "GET", "/api/v1/stats", None).await;
    assert_eq!(s["decided"], 4);
    assert_eq!(s["pending"], 0);
    assert_eq!(s["kappa_drug"], 1.0);
    assert_eq!(s["kappa_symptoms"], 1.0);
    assert_eq!(s["kappa_drug_band"], "Perfect agreement");
    assert_eq!(s["annotators"], json!(["a", "b", "c"]));
}

#[tokio::test]
async fn stats_match_the_offline_agreement_report() {
    use DrugClass::*;
    let fixture: Fixture = vec![
        [(Heroin, &["coma"]), (Heroin, &["coma", "nausea"]), (Fentanyl, &["coma"])],
        [(Cocaine, &["tachycardia"]), (Cocaine, &["sweating"]), (Cocaine, &["tachycardia"])],
        [(Lsd, &["hallucinations"]), (Ketamine, &["dissociation"]), (Lsd, &["hallucinations", "paranoia"])],
        [(Alcohol, &["nausea"]), (Alcohol, &["nausea", "dizziness"]), (Alcohol, &["nausea"])],
        [(Heroin, &["respiratory depression"]), (Heroin, &["respiratory depression"]), (Fentanyl, &["coma"])],
    ];
    let state = state_of(store(QueueConfig::three_annotators(), fixture.len()));
    let app = router(state.clone());
    fill(&app, &fixture).await;
    let (_, s) = call(&app, "GET", "/api/v1/stats", None).await;
    let store = state.store();
    let annotators: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
    let offline = agreement_report(store.records(), &annotators, store.vocab().labels()).unwrap();
    assert_eq!(s["kappa_drug"].as_f64().unwrap(), offline.drug.kappa);
    assert_eq!(s["kappa_symptoms"].as_f64(), offline.symptoms.macro_kappa);
    assert_eq!(s["kappa_drug_band"], interpret_kappa(offline.drug.kappa).label());
    assert!(offline.drug.kappa < 1.0);
    assert_eq!(s["conflict"], 3);
    assert_eq!(s["decided"], 2);
}

#[tokio::test]
async fn round_close_endpoint() {
    let app = router(state_of(store(QueueConfig::default(), 2)));
    let (code, body) = call(&app, "POST", "/api/v1/rounds/1/close", None).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert_eq!(body["error"], "round_incomplete");
    let (code, _) = call(&app, "POST", "/api/v1/rounds/9/close", None).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    for i in 0..2 {
        call(&app, "POST", &format!("/api/v1/items/p{i}/decision"), Some(decision("a", "Heroin", &["coma"]))).await;
    }
    let (code, report) = call(&app, "POST", "/api/v1/rounds/1/close", None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(report["round"], 1);
    assert_eq!(report["items"], 2);
    assert_eq!(report["gold_total"], 2);
    let (code, body) = call(&app, "POST", "/api/v1/rounds/1/close", None).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert_eq!(body["error"], "round_closed");
    let (_, s) = call(&app, "GET", "/api/v1/stats", None).await;
    assert_eq!(s["closed_rounds"], json!([1]));
    assert_eq!(s["rounds"][0]["closed"], true);
}

#[tokio::test]
async fn vocab_lists_every_allowed_label() {
    let app = router(state_of(store(QueueConfig::default(), 0)));
    let (code, v) = call(&app, "GET", "/api/v1/vocab", None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(v["drugs"].as_array().unwrap().len(), 8);
    assert_eq!(v["drugs"][6], "LSD");
    assert_eq!(v["symptoms"].as_array().unwrap().len(), vocab().len());
    assert_eq!(v["flags"], json!(["polydrug_uncertainty", "withdrawal_suspected"]));
}

/// What the review UI does: pick the highest band whose lower bound the
/// value reaches.
fn ui_badge(bands: &Value, kappa: f64) -> String {
    bands
        .as_array()
        .unwrap()
        .iter()
        .rfind(|b| kappa >= b["min"].as_f64().unwrap())
        .unwrap()["label"]
        .as_str()
        .unwrap()
        .to_string()
}

#[tokio::test]
async fn ui_contract_badges() {
    let app = router(state_of(store(QueueConfig::default(), 0)));
    let (_, v) = call(&app, "GET", "/api/v1/vocab", None).await;
    assert_eq!(ui_badge(&v["bands"], 0.83), "Substantial agreement");
    assert_eq!(ui_badge(&v["bands"], 0.79), "Moderate agreement");
    assert_eq!(ui_badge(&v["bands"], 1.0), "Perfect agreement");
    assert_eq!(ui_badge(&v["bands"], -0.2), "Poor agreement");
    for k in [0.83, 0.79, 1.0, 0.41, 0.0] {
        assert_eq!(ui_badge(&v["bands"], k), interpret_kappa(k).label());
    }
}

#[tokio::test]
async fn ui_contract_accept_and_correct() {
    let state = state_of(store(QueueConfig::default(), 0));
    {
        let mut s = state.store();
        let mut batch = Vec::new();
        for (id, drug) in [("x1", DrugClass::Heroin), ("x2", DrugClass::Heroin)] {
            batch.push((Post::new(id, "nodding off on dope"), Some(suggestion(id, drug, &["drowsiness"]))));
        }
        s.enqueue_batch(batch, 1).unwrap();
    }
    let app = router(state.clone());

    // Accept: the form is posted back exactly as pre-filled.
    let (_, item) = call(&app, "GET", "/api/v1/queue/next?annotator=ui", None).await;
    let sug = &item["suggestion"];
    let body = json!({"annotator": "ui", "drug": sug["drug"], "symptoms": sug["symptoms"], "flags": sug["flags"]});
    let (code, resp) = call(&app, "POST", &format!("/api/v1/items/{}/decision", item["post_id"].as_str().unwrap()), Some(body)).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(resp["corrections"], 0);
    {
        let s = state.store();
        let r = s.record("x1").unwrap();
        let d = &r.decision_by("ui").unwrap().labels;
        let sg = r.suggestion.as_ref().unwrap();
        assert_eq!((Some(d.drug), &d.symptoms, &d.flags), (sg.drug, &sg.symptoms, &sg.flags));
    }

    // Correct Heroin -> Fentanyl and tick the polydrug flag.
    let (_, item) = call(&app, "GET", "/api/v1/queue/next?annotator=ui", None).await;
    assert_eq!(item["post_id"], "x2");
    let body = json!({"annotator": "ui", "drug": "Fentanyl", "symptoms": item["suggestion"]["symptoms"], "flags": ["polydrug_uncertainty"]});
    let (code, resp) = call(&app, "POST", "/api/v1/items/x2/decision", Some(body)).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(resp["corrections"], 1);
    assert_eq!(resp["correction_rate"], 0.5);
    let (_, item) = call(&app, "GET", "/api/v1/items/x2", None).await;
    assert_eq!(item["status"], "decided");
    let s = state.store();
    let d = &s.record("x2").unwrap().decision_by("ui").unwrap().labels;
    assert_eq!(d.drug, DrugClass::Fentanyl);
    assert!(d.flags.contains(&Flag::PolydrugUncertainty));
}

#[tokio::test]
async fn static_assets_and_cors() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>review</html>").unwrap();
    std::fs::write(ui.join("app.js"), "console.log(1)").unwrap();
    let cfg = ApiConfig {
        store: dir.path().join("queue"),
        static_dir: Some(ui),
        cors_origins: vec!["http://localhost:5173".into()],
        ..ApiConfig::default()
    };
    cfg.validate().unwrap();
    let app = app(state_of(store(QueueConfig::default(), 1)), &cfg);

    let (code, body) = raw(&app, Request::get("/").body(Body::empty()).unwrap()).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(body, "<html>review</html>");
    let (code, body) = raw(&app, Request::get("/app.js").body(Body::empty()).unwrap()).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(body, "console.log(1)");
    let (code, body) = raw(&app, Request::get("/review/some/route").body(Body::empty()).unwrap()).await;
    assert_eq!(code, StatusCode::OK, "client-side routes fall back to index.html");
    assert_eq!(body, "<html>review</html>");

    let req = Request::get("/api/v1/stats").header("origin", "http://localhost:5173").body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://localhost:5173");
    let req = Request::get("/api/v1/stats").header("origin", "http://evil.example").body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert!(resp.headers().get("access-control-allow-origin").is_none());
}

#[tokio::test]
async fn decisions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = QueueStore::open(dir.path(), QueueConfig::default(), vocab()).unwrap();
    s.enqueue_batch(posts(3), 1).unwrap();
    let app = router(state_of(s));
    call(&app, "POST", "/api/v1/items/p1/decision", Some(decision("a", "Cocaine", &["tachycardia"]))).await;
    drop(app);
    let reopened = QueueStore::open(dir.path(), QueueConfig::default(), vocab()).unwrap();
    let app = router(state_of(reopened));
    let (_, item) = call(&app, "GET", "/api/v1/items/p1", None).await;
    assert_eq!(item["status"], "decided");
    assert_eq!(item["decided_by"], json!(["a"]));
}
