//! Read-only query service over one snapshot.
//!
//! Routes:
//!
//! | method | path              | answer                                   |
//! |--------|-------------------|------------------------------------------|
//! | GET    | `/health`         | snapshot hash and versions               |
//! | GET    | `/schema`         | entity kinds, relations and signatures   |
//! | GET    | `/entity`         | `?kind=Task&surface=...` lookup          |
//! | GET    | `/paper/{id}`     | all elements and facts of one paper      |
//! | GET    | `/stats`          | counts per kind and relation             |
//! | POST   | `/ask`            | `{"question": ...}` → answer and trace   |
//!
//! Errors are JSON bodies `{"error": {"stage": ..., "message": ...}}`. The
//! snapshot is read once at startup and never written.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use akg_core::graph::{GraphStats, GraphStore, SNAPSHOT_VERSION};
use akg_core::llm::Gateway;
use akg_core::qa::{AnswerMode, AnswerTrace, QaEngine, QaError};
use akg_core::schema::{schema_document, EntityKind, SchemaDocument};

use crate::config::Config;
use crate::pipeline::{sha256_hex, StageError};
use crate::views::{lookup_entity, paper_detail, EntityLookup, PaperDetail};

pub struct ServiceState {
    pub graph: GraphStore,
    pub snapshot_path: PathBuf,
    pub snapshot_sha256: String,
    pub gateway: Gateway,
    pub max_question_chars: usize,
    pub ask_per_minute: usize,
    pub context_cap: usize,
    pub max_reasks: u32,
    recent_asks: Mutex<VecDeque<Instant>>,
}

impl ServiceState {
    /// Load the snapshot; failure here aborts startup.
    pub fn load(snapshot: &Path, gateway: Gateway, config: &Config) -> Result<Self, StageError> {
        let bytes = std::fs::read(snapshot)
            .map_err(|e| StageError::new("serve", format!("cannot read {}: {e}", snapshot.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| StageError::new("serve", format!("{} is not UTF-8", snapshot.display())))?;
        let graph = GraphStore::from_snapshot_str(text).map_err(|e| StageError::new("serve", e))?;
        Ok(ServiceState {
            graph,
            snapshot_path: snapshot.to_path_buf(),
            snapshot_sha256: sha256_hex(&bytes),
            gateway,
            max_question_chars: config.service.max_question_chars,
            ask_per_minute: config.service.ask_per_minute,
            context_cap: config.context_cap,
            max_reasks: config.max_reasks,
            recent_asks: Mutex::new(VecDeque::new()),
        })
    }

    pub fn engine(&self) -> QaEngine<'_> {
        let mut engine = QaEngine::new(&self.gateway, &self.graph);
        engine.context_cap = self.context_cap;
        engine.max_reasks = self.max_reasks;
        engine
    }

    /// Sliding one-minute window shared by all clients.
    fn admit(&self, now: Instant) -> bool {
        let mut recent = self.recent_asks.lock().unwrap_or_else(|e| e.into_inner());
        while recent
            .front()
            .is_some_and(|t| now.duration_since(*t) >= Duration::from_secs(60))
        {
            recent.pop_front();
        }
        if recent.len() >= self.ask_per_minute {
            return false;
        }
        recent.push_back(now);
        true
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub stage: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, stage: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            stage: stage.into(),
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"stage": self.stage, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<QaError> for ApiError {
    fn from(e: QaError) -> Self {
        let status = match &e {
            QaError::EmptyQuestion => StatusCode::BAD_REQUEST,
            QaError::Completion { .. } | QaError::Embedding(_) => StatusCode::BAD_GATEWAY,
            QaError::UnparseableIntent { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            QaError::NoMatches { .. } | QaError::Graph { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.stage().to_string(), e.to_string())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub snapshot_sha256: String,
    pub snapshot_version: u32,
    pub pipeline_version: String,
    pub corpus_hash: String,
}

#[derive(Debug, Serialize)]
pub struct SchemaSummary {
    pub entity_kind_count: usize,
    pub signature_count: usize,
    #[serde(flatten)]
    pub document: SchemaDocument,
}

#[derive(Debug, Deserialize)]
pub struct EntityQuery {
    pub kind: String,
    pub surface: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AskRequest {
    pub question: String,
}

#[derive(Debug, Serialize)]
pub struct AskResponse {
    pub answer: String,
    pub mode: AnswerMode,
    pub unguided: bool,
    pub truncated: bool,
    pub communities: usize,
    pub completions: usize,
    pub trace: AnswerTrace,
}

impl From<AnswerTrace> for AskResponse {
    fn from(trace: AnswerTrace) -> Self {
        AskResponse {
            answer: trace.global_answer.clone(),
            mode: trace.mode,
            unguided: trace.unguided,
            truncated: trace.truncated,
            communities: trace.communities.len(),
            completions: trace.completions(),
            trace,
        }
    }
}

async fn health(State(state): State<Arc<ServiceState>>) -> Json<Health> {
    let meta = state.graph.metadata();
    Json(Health {
        status: "ok".into(),
        snapshot_sha256: state.snapshot_sha256.clone(),
        snapshot_version: SNAPSHOT_VERSION,
        pipeline_version: meta.pipeline_version.clone(),
        corpus_hash: meta.corpus_hash.clone(),
    })
}

async fn schema() -> Json<SchemaSummary> {
    let document = schema_document();
    Json(SchemaSummary {
        entity_kind_count: document.entity_kinds.len(),
        signature_count: document.signatures.len(),
        document,
    })
}

async fn entity(
    State(state): State<Arc<ServiceState>>,
    query: Result<Query<EntityQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<Vec<EntityLookup>>, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "request", e.body_text()))?;
    let kind: EntityKind = query
        .kind
        .parse()
        .map_err(|e: akg_core::schema::SchemaError| ApiError::new(StatusCode::BAD_REQUEST, "request", e.to_string()))?;
    let found = lookup_entity(&state.graph, kind, &query.surface);
    if found.is_empty() {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "lookup",
            format!("no {kind} entity `{}`", query.surface),
        ));
    }
    Ok(Json(found))
}

async fn paper(
    State(state): State<Arc<ServiceState>>,
    UrlPath(corpus_id): UrlPath<String>,
) -> Result<Json<PaperDetail>, ApiError> {
    paper_detail(&state.graph, &corpus_id)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "lookup", format!("no paper `{corpus_id}`")))
}

async fn stats(State(state): State<Arc<ServiceState>>) -> Json<GraphStats> {
    Json(state.graph.stats())
}

async fn ask(
    State(state): State<Arc<ServiceState>>,
    body: Result<Json<AskRequest>, JsonRejection>,
) -> Result<Json<AskResponse>, ApiError> {
    let Json(request) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "request", e.body_text()))?;
    let length = request.question.chars().count();
    if length > state.max_question_chars {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "request",
            format!(
                "question has {length} characters; the limit is {}",
                state.max_question_chars
            ),
        ));
    }
    if request.question.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "request", "question is empty"));
    }
    if !state.admit(Instant::now()) {
        return Err(ApiError::new(
            StatusCode::TOO_MANY_REQUESTS,
            "request",
            format!("at most {} questions per minute", state.ask_per_minute),
        ));
    }
    let worker = state.clone();
    let trace = tokio::task::spawn_blocking(move || worker.engine().ask(&request.question))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "ask", e.to_string()))??;
    Ok(Json(trace.into()))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "request", "no such route")
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/schema", get(schema))
        .route("/entity", get(entity))
        .route("/paper/{corpus_id}", get(paper))
        .route("/stats", get(stats))
        .route("/ask", post(ask))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(64 * 1024))
        .with_state(state)
}

/// Bind and serve until the process is stopped. The caller builds every
/// blocking HTTP client before this starts the async runtime.
pub fn serve_blocking(state: ServiceState, bind: &str) -> Result<(), StageError> {
    let addr: SocketAddr = bind
        .parse()
        .map_err(|e| StageError::new("serve", format!("bad bind address `{bind}`: {e}")))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| StageError::new("serve", e))?;
    let app = router(Arc::new(state));
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| StageError::new("serve", format!("cannot bind {addr}: {e}")))?;
        eprintln!("serving on http://{}", listener.local_addr().map_err(|e| StageError::new("serve", e))?);
        axum::serve(listener, app)
            .await
            .map_err(|e| StageError::new("serve", e))
    })
}
