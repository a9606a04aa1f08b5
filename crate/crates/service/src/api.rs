//! Route handlers. Each one parses the request, makes exactly one call
//! into the queue store and renders the result.

use std::collections::BTreeSet;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dosewatch_core::annotate::{select_few_shot, AnnotateError, AnnotationRecord, DecisionInput, RoundReport};
use dosewatch_core::{DrugClass, Flag, SymptomSet};
use serde::Deserialize;
use serde_json::json;

use crate::view::{DecisionBody, DecisionResponse, ItemView, StatsView, VocabView};
use crate::AppState;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_labels", message)
    }
}

impl From<AnnotateError> for ApiError {
    fn from(e: AnnotateError) -> Self {
        use AnnotateError as E;
        let (status, code) = match &e {
            E::UnknownPost(_) => (StatusCode::NOT_FOUND, "unknown_post"),
            E::EmptyRound(_) => (StatusCode::NOT_FOUND, "empty_round"),
            E::InvalidDecision { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_labels"),
            E::DuplicateDecision { .. } => (StatusCode::CONFLICT, "duplicate_decision"),
            E::RoundClosed(_) => (StatusCode::CONFLICT, "round_closed"),
            E::RoundOpen(_) => (StatusCode::CONFLICT, "round_open"),
            E::RoundIncomplete { .. } => (StatusCode::CONFLICT, "round_incomplete"),
            E::AlreadyQueued(_) => (StatusCode::CONFLICT, "already_queued"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{e}");
        }
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn api_routes() -> Router<AppState> {
    Router::new()
        .route("/queue/next", get(next_item))
        .route("/items/{id}", get(item))
        .route("/items/{id}/decision", post(decide))
        .route("/rounds/{round}/close", post(close_round))
        .route("/stats", get(stats))
        .route("/vocab", get(vocab))
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

async fn next_item(State(state): State<AppState>, Query(q): Query<NextQuery>) -> ApiResult<Response> {
    let annotator = q
        .annotator
        .filter(|a| !a.trim().is_empty())
        .ok_or_else(|| ApiError::bad_request("missing annotator query parameter"))?;
    let store = state.store();
    Ok(match store.next_for(&annotator) {
        Some(r) => Json(ItemView::build(r, &store, state.lexicon())).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn item(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ItemView>> {
    let store = state.store();
    let record = store.record(&id).ok_or_else(|| AnnotateError::UnknownPost(id.clone()))?;
    Ok(Json(ItemView::build(record, &store, state.lexicon())))
}

/// Body syntax errors are 400; well-formed JSON with the wrong shape or
/// labels outside the vocabularies is 422.
fn parse_decision(bytes: &[u8], vocab: &dosewatch_core::SymptomVocabulary) -> ApiResult<(String, DecisionInput)> {
    let body: DecisionBody = serde_json::from_slice(bytes).map_err(|e| {
        if e.is_data() {
            ApiError::invalid(e.to_string())
        } else {
            ApiError::bad_request(e.to_string())
        }
    })?;
    if body.annotator.trim().is_empty() {
        return Err(ApiError::invalid("annotator must not be empty"));
    }
    let drug = body.drug.parse::<DrugClass>().map_err(|e| ApiError::invalid(e.to_string()))?;
    let mut symptoms = SymptomSet::new();
    for label in &body.symptoms {
        let i = vocab
            .index_of(label)
            .ok_or_else(|| ApiError::invalid(format!("unknown symptom {label:?}")))?;
        symptoms.insert(i);
    }
    let flags = body
        .flags
        .iter()
        .map(|f| f.parse::<Flag>().map_err(ApiError::invalid))
        .collect::<ApiResult<BTreeSet<Flag>>>()?;
    Ok((body.annotator, DecisionInput { drug, symptoms, flags }))
}

async fn decide(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<DecisionResponse>> {
    let mut store = state.store();
    if store.record(&id).is_none() {
        return Err(AnnotateError::UnknownPost(id).into());
    }
    let (annotator, labels) = parse_decision(&body, store.vocab())?;
    let record = store.record_decision(&id, &annotator, labels)?;
    let (status, decisions) = (record.status, record.decisions.len());
    let stats = store.stats();
    Ok(Json(DecisionResponse {
        post_id: id,
        status,
        decisions,
        corrections: stats.corrections,
        correction_rate: stats.correction_rate,
    }))
}

async fn close_round(State(state): State<AppState>, Path(round): Path<u32>) -> ApiResult<Json<RoundReport>> {
    let mut store = state.store();
    let records: Vec<AnnotationRecord> = store.records().iter().filter(|r| r.round == round).cloned().collect();
    let refs: Vec<&AnnotationRecord> = records.iter().collect();
    let few_shot = select_few_shot(&refs, &store);
    Ok(Json(store.close_round(round, few_shot)?))
}

async fn stats(State(state): State<AppState>) -> Json<StatsView> {
    Json(StatsView::build(&state.store()))
}

async fn vocab(State(state): State<AppState>) -> Json<VocabView> {
    Json(VocabView::build(&state.store()))
}
