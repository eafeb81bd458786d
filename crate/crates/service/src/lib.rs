//! JSON-over-HTTP front end for classification and the rule curation loop.
//! Every response body is built from `vf_core` function outputs.

mod state;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use vf_core::annotate::{
    annotate_corpus, diff_after_retune, evidence_spans, partial_report, verdicts_from, JudgmentRecord,
    SymptomDiff, ValidationReport,
};
use vf_core::dictionary::{compile_term_table, DictionaryError, TermTable};

pub use state::{bundle_version, AppState, Curation, JudgmentLog, LoadedModel};

pub type SharedState = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    if body.is_empty() {
        return Err(ApiError::unprocessable("empty request body"));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable(format!("invalid request: {e}")))
}

fn symptom_param(q: &HashMap<String, String>) -> ApiResult<&str> {
    q.get("symptom")
        .map(String::as_str)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ApiError::unprocessable("missing query parameter \"symptom\""))
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/classify", post(classify))
        .route("/curation/next", get(curation_next))
        .route("/curation/judgment", post(curation_judgment))
        .route("/validation/metrics", get(validation_metrics))
        .route("/rules/reload", post(rules_reload))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: SharedState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_version: Option<String>,
    pub corpus_size: usize,
}

async fn health(State(st): State<SharedState>) -> Json<Health> {
    let corpus_size = st.curation.read().await.corpus.len();
    Json(Health {
        status: "ok".into(),
        model_version: st.model.as_ref().map(|m| m.version.clone()),
        corpus_size,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabel {
    pub label: String,
    pub domain: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub predictions: Vec<ScoredLabel>,
    pub threshold: f64,
}

async fn classify(State(st): State<SharedState>, body: Bytes) -> ApiResult<Json<ClassifyResponse>> {
    let model = st
        .model
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"))?;
    let req: ClassifyRequest = parse_body(&body)?;
    if req.text.trim().is_empty() {
        return Err(ApiError::unprocessable("text is empty"));
    }
    let predictions = model
        .bundle
        .classify(&req.text)
        .into_iter()
        .map(|p| ScoredLabel {
            label: p.label,
            domain: p.domain,
            score: p.score,
        })
        .collect();
    Ok(Json(ClassifyResponse {
        predictions,
        threshold: model.bundle.config.threshold,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// A queued review item. The enrichment flag is withheld until judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub symptom: String,
    pub verbatim_id: String,
    pub text: String,
    pub machine_labels: Vec<String>,
    /// Character offsets in `text` matched by the symptom's include cells.
    pub evidence_spans: Vec<Span>,
    /// Zero-based position in the sample.
    pub position: usize,
    pub sample_size: usize,
    pub remaining: usize,
}

async fn curation_next(
    State(st): State<SharedState>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let symptom = symptom_param(&q)?;
    let cur = st.curation.read().await;
    let sample = cur
        .sample(symptom)
        .ok_or_else(|| ApiError::not_found(format!("no validation sample for {symptom:?}")))?;
    let verdicts = verdicts_from(st.log.lock().map_err(ApiError::internal)?.records());
    let judged = |id: &str| verdicts.contains_key(&(id.to_string(), symptom.to_string()));
    let open: Vec<usize> = (0..sample.items.len()).filter(|&i| !judged(&sample.items[i].verbatim_id)).collect();
    let Some(&position) = open.first() else {
        return Ok(StatusCode::NO_CONTENT.into_response());
    };
    let item = &sample.items[position];
    let text = cur
        .corpus
        .verbatim(&item.verbatim_id)
        .map(|v| v.combined.clone())
        .ok_or_else(|| ApiError::internal(format!("sampled verbatim {:?} is not in the corpus", item.verbatim_id)))?;
    let spans = match cur.rule(symptom) {
        Some(rule) => evidence_spans(rule, &text).map_err(ApiError::internal)?,
        None => Vec::new(),
    };
    let body = ReviewItem {
        symptom: symptom.to_string(),
        verbatim_id: item.verbatim_id.clone(),
        text,
        machine_labels: item.machine_labels.clone(),
        evidence_spans: spans.into_iter().map(|(start, end)| Span { start, end }).collect(),
        position,
        sample_size: sample.items.len(),
        remaining: open.len(),
    };
    Ok(Json(body).into_response())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentAck {
    pub recorded: JudgmentRecord,
    /// Revealed once judged; absent when the item is not in a sample.
    pub is_enriched_negative: Option<bool>,
}

async fn curation_judgment(State(st): State<SharedState>, body: Bytes) -> ApiResult<Response> {
    let record: JudgmentRecord = parse_body(&body)?;
    let cur = st.curation.read().await;
    if cur.corpus.verbatim(&record.verbatim_id).is_none() {
        return Err(ApiError::unprocessable(format!("unknown verbatim {:?}", record.verbatim_id)));
    }
    if !cur.knows_symptom(&record.symptom) {
        return Err(ApiError::unprocessable(format!("unknown symptom {:?}", record.symptom)));
    }
    if record.curator_id.trim().is_empty() {
        return Err(ApiError::unprocessable("curator_id is empty"));
    }
    let is_enriched_negative = cur.sample(&record.symptom).and_then(|s| {
        s.items
            .iter()
            .find(|it| it.verbatim_id == record.verbatim_id)
            .map(|it| it.is_enriched_negative)
    });
    st.log
        .lock()
        .map_err(ApiError::internal)?
        .append(record.clone())
        .map_err(ApiError::internal)?;
    let ack = JudgmentAck {
        recorded: record,
        is_enriched_negative,
    };
    Ok((StatusCode::CREATED, Json(ack)).into_response())
}

async fn validation_metrics(
    State(st): State<SharedState>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<ValidationReport>> {
    let symptom = symptom_param(&q)?;
    let cur = st.curation.read().await;
    let sample = cur
        .sample(symptom)
        .ok_or_else(|| ApiError::not_found(format!("no validation sample for {symptom:?}")))?;
    let verdicts = verdicts_from(st.log.lock().map_err(ApiError::internal)?.records());
    let report = partial_report(&sample, &verdicts).map_err(ApiError::internal)?;
    if report.judged == 0 {
        return Err(ApiError::not_found(format!("no judged items for {symptom:?}")));
    }
    Ok(Json(report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReloadRequest {
    pub term_table_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReloadResponse {
    pub compiled_symptoms: usize,
    pub diff: BTreeMap<String, SymptomDiff>,
}

async fn rules_reload(State(st): State<SharedState>, body: Bytes) -> ApiResult<Json<ReloadResponse>> {
    let req: ReloadRequest = parse_body(&body)?;
    let table = TermTable::from_path(&req.term_table_path)
        .map_err(|e| ApiError::unprocessable(format!("{}: {e}", req.term_table_path.display())))?;
    let rules = compile_term_table(&table).map_err(|e| match e {
        DictionaryError::Compile {
            symptom,
            serial,
            cell,
            message,
        } => ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({
                "error": format!("cannot compile cell {cell:?}: {message}"),
                "symptom": symptom,
                "serial": serial,
                "cell": cell,
            }),
        },
        other => ApiError::unprocessable(other.to_string()),
    })?;
    // curation reads wait until the corpus is re-annotated
    let mut cur = st.curation.write().await;
    let annotated = annotate_corpus(&rules, &cur.index).map_err(ApiError::internal)?;
    let diff = diff_after_retune(&cur.annotated, &annotated).map_err(ApiError::internal)?;
    let compiled_symptoms = rules.len();
    cur.rules = rules;
    cur.annotated = annotated;
    Ok(Json(ReloadResponse { compiled_symptoms, diff }))
}
