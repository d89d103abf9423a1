//! Adjudication service.
//!
//! Serves stored runs, cases and gold standards exactly as they are on disk,
//! and accepts action classifications and Likert ratings. Every accepted
//! write re-evaluates the run through the same store calls the CLI uses, so
//! the returned metrics equal what `consilium eval` would write.
//!
//! Writes need an `x-adjudicator` header and are serialized per run.

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use consilium_core::eval::{ClassificationsDocument, EvalError, RatingsDocument};
use consilium_core::store::{
    radar_from_store, report_table, ClassificationSubmission, Corpus, RatingsSubmission, RunIndexEntry, RunStore,
    StoreError, CLASSIFICATIONS_FILE, METRICS_FILE, RATINGS_FILE, RUN_FILE, TRANSCRIPT_FILE,
};

pub const ADJUDICATOR_HEADER: &str = "x-adjudicator";

#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub runs_dir: PathBuf,
    pub corpus_dir: PathBuf,
    pub read_only: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    Store(#[from] StoreError),
    #[error("service is read-only")]
    ReadOnly,
    #[error("missing `{ADJUDICATOR_HEADER}` header")]
    MissingAdjudicator,
    #[error("invalid request body: {0}")]
    InvalidBody(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    kind: &'static str,
}

impl ApiError {
    fn status_and_kind(&self) -> (StatusCode, &'static str) {
        match self {
            ApiError::Store(StoreError::NotFound(_) | StoreError::UnknownCase(_) | StoreError::InvalidRunId(_)) => {
                (StatusCode::NOT_FOUND, "not_found")
            }
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ApiError::Store(StoreError::AlreadyExists(_)) => (StatusCode::CONFLICT, "conflict"),
            ApiError::Store(StoreError::Eval(e)) => (StatusCode::UNPROCESSABLE_ENTITY, eval_kind(e)),
            ApiError::Store(StoreError::Document(_) | StoreError::Io { .. }) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "corrupt_store")
            }
            ApiError::ReadOnly => (StatusCode::CONFLICT, "read_only"),
            ApiError::MissingAdjudicator => (StatusCode::BAD_REQUEST, "missing_adjudicator"),
            ApiError::InvalidBody(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_body"),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

fn eval_kind(e: &EvalError) -> &'static str {
    match e {
        EvalError::IncompleteClassification { .. } => "incomplete_classification",
        EvalError::InvalidLabel { .. } => "invalid_label",
        EvalError::UnknownGoldAction(_) => "unknown_gold_action",
        EvalError::ScoreOutOfRange { .. } => "score_out_of_range",
        EvalError::ConsensusNotNeeded(_) => "consensus_not_needed",
        EvalError::MissingAdjudicator(_) => "missing_adjudicator",
        _ => "invalid_adjudication",
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = self.status_and_kind();
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        (status, Json(ErrorBody { error: self.to_string(), kind })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Inner {
    store: RunStore,
    corpus: Corpus,
    read_only: bool,
    run_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(config: &ApiConfig) -> Result<Self, StoreError> {
        Ok(AppState(Arc::new(Inner {
            store: RunStore::open(&config.runs_dir)?,
            corpus: Corpus::open(&config.corpus_dir)?,
            read_only: config.read_only,
            run_locks: Mutex::new(HashMap::new()),
        })))
    }

    fn run_lock(&self, run_id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.0.run_locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(run_id.to_string()).or_default().clone()
    }

    /// Runs blocking store work off the async workers.
    async fn blocking<T, F>(&self, f: F) -> ApiResult<T>
    where
        T: Send + 'static,
        F: FnOnce(&Inner) -> ApiResult<T> + Send + 'static,
    {
        let inner = self.0.clone();
        tokio::task::spawn_blocking(move || f(&inner)).await.map_err(|e| ApiError::Internal(e.to_string()))?
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/runs", get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/transcript", get(get_transcript))
        .route("/runs/{id}/classifications", get(get_classifications).post(post_classifications))
        .route("/runs/{id}/ratings", get(get_ratings).post(post_ratings))
        .route("/runs/{id}/ratings/summary", get(get_rating_summary))
        .route("/runs/{id}/metrics", get(get_metrics))
        .route("/cases", get(list_cases))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/gold", get(get_gold))
        .route("/cases/{id}/lexicon", get(get_lexicon))
        .route("/report/radar", get(get_radar))
        .route("/report/table", get(get_table))
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(config: ApiConfig, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::new(&config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(
        "serving {} on http://{}{}",
        config.runs_dir.display(),
        listener.local_addr()?,
        if config.read_only { " (read-only)" } else { "" }
    );
    axum::serve(listener, router(state)).await
}

struct Raw {
    content_type: &'static str,
    body: String,
}

impl Raw {
    fn json(body: String) -> Self {
        Raw { content_type: "application/json", body }
    }
}

impl IntoResponse for Raw {
    fn into_response(self) -> Response {
        let mut response = self.body.into_response();
        response.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static(self.content_type));
        response
    }
}

fn to_json<T: Serialize>(value: &T) -> ApiResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| ApiError::Internal(e.to_string()))
}

fn adjudicator(headers: &HeaderMap) -> ApiResult<String> {
    headers
        .get(ADJUDICATOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .ok_or(ApiError::MissingAdjudicator)
}

fn writable(state: &AppState) -> ApiResult<()> {
    if state.0.read_only {
        Err(ApiError::ReadOnly)
    } else {
        Ok(())
    }
}

async fn list_runs(State(state): State<AppState>) -> ApiResult<Json<Vec<RunIndexEntry>>> {
    state.blocking(|inner| Ok(Json(inner.store.list_runs()?))).await
}

async fn stored(state: &AppState, run_id: String, name: &'static str) -> ApiResult<Option<String>> {
    state.blocking(move |inner| Ok(inner.store.read_raw(&run_id, name)?)).await
}

async fn get_run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Raw> {
    let text = stored(&state, id.clone(), RUN_FILE).await?;
    text.map(Raw::json).ok_or_else(|| ApiError::NotFound(format!("run `{id}`")))
}

async fn get_transcript(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Raw> {
    let text = stored(&state, id.clone(), TRANSCRIPT_FILE).await?;
    text.map(|body| Raw { content_type: "application/x-ndjson", body })
        .ok_or_else(|| ApiError::NotFound(format!("transcript of run `{id}`")))
}

async fn get_classifications(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Raw> {
    match stored(&state, id.clone(), CLASSIFICATIONS_FILE).await? {
        Some(text) => Ok(Raw::json(text)),
        None => Ok(Raw::json(to_json(&ClassificationsDocument::new(&id))?)),
    }
}

async fn get_ratings(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Raw> {
    match stored(&state, id.clone(), RATINGS_FILE).await? {
        Some(text) => Ok(Raw::json(text)),
        None => Ok(Raw::json(to_json(&RatingsDocument::new(&id))?)),
    }
}

async fn get_rating_summary(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Raw> {
    state.blocking(move |inner| Ok(Raw::json(to_json(&inner.store.ratings_outcome(&id)?)?))).await
}

/// Stored metrics if the classification is complete, otherwise a provisional
/// report computed on the fly.
async fn get_metrics(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Raw> {
    if let Some(text) = stored(&state, id.clone(), METRICS_FILE).await? {
        return Ok(Raw::json(text));
    }
    state
        .blocking(move |inner| {
            let report = inner.store.score_run(&id, &inner.corpus, true)?;
            Ok(Raw::json(to_json(&report)?))
        })
        .await
}

async fn post_classifications(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Raw> {
    writable(&state)?;
    let adjudicator = adjudicator(&headers)?;
    let submission: ClassificationSubmission =
        serde_json::from_slice(&body).map_err(|e| ApiError::InvalidBody(e.to_string()))?;
    let lock = state.run_lock(&id);
    let _guard = lock.lock().await;
    state
        .blocking(move |inner| {
            let report = inner.store.submit_classifications(&id, &inner.corpus, submission, &adjudicator, true)?;
            Ok(Raw::json(to_json(&report)?))
        })
        .await
}

async fn post_ratings(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Raw> {
    writable(&state)?;
    let adjudicator = adjudicator(&headers)?;
    let submission: RatingsSubmission =
        serde_json::from_slice(&body).map_err(|e| ApiError::InvalidBody(e.to_string()))?;
    let lock = state.run_lock(&id);
    let _guard = lock.lock().await;
    state
        .blocking(move |inner| {
            let outcome = inner.store.submit_ratings(&id, submission, &adjudicator)?;
            Ok(Raw::json(to_json(&outcome)?))
        })
        .await
}

async fn list_cases(State(state): State<AppState>) -> ApiResult<Json<Vec<String>>> {
    state.blocking(|inner| Ok(Json(inner.corpus.case_ids()?))).await
}

async fn case_file(
    state: AppState,
    id: String,
    pick: fn(&Corpus, &str) -> Result<PathBuf, StoreError>,
) -> ApiResult<Raw> {
    state
        .blocking(move |inner| {
            let path = pick(&inner.corpus, &id)?;
            match std::fs::read_to_string(&path) {
                Ok(text) => Ok(Raw::json(text)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    Err(ApiError::NotFound(path.display().to_string()))
                }
                Err(source) => Err(StoreError::Io { path, source }.into()),
            }
        })
        .await
}

async fn get_case(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Raw> {
    case_file(state, id, Corpus::case_path).await
}

async fn get_gold(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Raw> {
    case_file(state, id, Corpus::gold_path).await
}

async fn get_lexicon(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Raw> {
    case_file(state, id, Corpus::lexicon_path).await
}

async fn get_radar(State(state): State<AppState>) -> ApiResult<Raw> {
    state.blocking(|inner| Ok(Raw::json(to_json(&radar_from_store(&inner.store)?)?))).await
}

async fn get_table(State(state): State<AppState>) -> ApiResult<Raw> {
    state.blocking(|inner| Ok(Raw::json(to_json(&report_table(&inner.store)?)?))).await
}
