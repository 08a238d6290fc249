//! HTTP API over a run store.
//!
//! | method | path                     | body / query            |
//! |--------|--------------------------|-------------------------|
//! | POST   | /runs                    | run request             |
//! | GET    | /runs                    |                         |
//! | GET    | /runs/{id}               |                         |
//! | GET    | /runs/{id}/report        |                         |
//! | GET    | /runs/{id}/objects       | `top`, `baseline`       |
//! | GET    | /runs/{id}/gender        |                         |
//! | POST   | /comparisons             | `{"run_ids": [...]}`    |
//! | GET    | /comparisons/{id}        |                         |
//! | GET    | /prompt-sets             |                         |
//! | GET    | /healthz                 |                         |
//!
//! Evaluations run in the background on a bounded pool; clients poll
//! `GET /runs/{id}` for progress.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use biaslens_core::metrics::{object_deltas, ObjectDelta};
use biaslens_core::{execute_run, prepare_run, Resources, RunManifest, RunRequest, RunState, RunStore, StoreError};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

use crate::error::{ApiError, ErrorCode};

/// Evaluations allowed to execute at the same time.
pub const DEFAULT_WORKERS: usize = 4;

#[derive(Clone)]
pub struct AppState {
    store: RunStore,
    resources: Arc<Resources>,
    workers: Arc<Semaphore>,
}

impl AppState {
    pub fn new(store: RunStore, resources: Resources, workers: usize) -> Self {
        AppState {
            store,
            resources: Arc::new(resources),
            workers: Arc::new(Semaphore::new(workers.max(1))),
        }
    }
}

pub fn router(state: AppState, webui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/runs", post(create_run).get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/report", get(get_report))
        .route("/runs/{id}/objects", get(get_objects))
        .route("/runs/{id}/gender", get(get_gender))
        .route("/comparisons", post(create_comparison))
        .route("/comparisons/{id}", get(get_comparison))
        .route("/prompt-sets", get(prompt_sets))
        .route("/healthz", get(healthz))
        .with_state(state);
    match webui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("invalid request body: {e}")))
}

#[derive(Serialize)]
struct Created {
    run_id: String,
}

async fn create_run(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: RunRequest = parse_body(&body)?;
    let (store, resources) = (state.store.clone(), state.resources.clone());
    let job = tokio::task::spawn_blocking(move || prepare_run(&store, req, &resources))
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))??;
    let run_id = job.run_id().to_string();
    let handle = tokio::runtime::Handle::current();
    tokio::spawn(async move {
        let Ok(_permit) = state.workers.clone().acquire_owned().await else {
            return;
        };
        let id = job.run_id().to_string();
        let result = tokio::task::spawn_blocking(move || {
            handle.block_on(execute_run(&state.store, job, &state.resources.lexicons))
        })
        .await;
        match result {
            Ok(Ok(report)) => tracing::info!(run_id = %id, n = report.n_records, "run complete"),
            Ok(Err(e)) => tracing::warn!(run_id = %id, error = %e, "run failed"),
            Err(e) => tracing::error!(run_id = %id, error = %e, "run task panicked"),
        }
    });
    Ok((StatusCode::CREATED, Json(Created { run_id })).into_response())
}

async fn list_runs(State(state): State<AppState>) -> Result<Json<Vec<RunManifest>>, ApiError> {
    Ok(Json(state.store.list()?))
}

async fn get_run(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<RunManifest>, ApiError> {
    Ok(Json(state.store.manifest(&id)?))
}

/// Maps a missing report to the reason the run has none.
fn report_error(store: &RunStore, id: &str, err: StoreError) -> ApiError {
    if let StoreError::NotComplete {
        state: RunState::Failed,
        ..
    } = &err
    {
        if let Some(failure) = store.manifest(id).ok().and_then(|m| m.failure) {
            let code = ErrorCode::parse(&failure.code).unwrap_or(ErrorCode::Internal);
            if matches!(code, ErrorCode::AdapterFailed | ErrorCode::EmptyRun) {
                return ApiError::new(code, failure.message);
            }
        }
    }
    err.into()
}

async fn get_report(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = state.store.report_bytes(&id).map_err(|e| report_error(&state.store, &id, e))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectsQuery {
    top: Option<usize>,
    baseline: Option<String>,
}

#[derive(Serialize)]
struct ObjectsResponse {
    run_id: String,
    baseline: Option<String>,
    objects: Vec<ObjectDelta>,
}

async fn get_objects(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<ObjectsQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<ObjectsResponse>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::validation(e.body_text()))?;
    let report = state.store.report(&id).map_err(|e| report_error(&state.store, &id, e))?;
    let top = q.top.unwrap_or(report.k);
    if top == 0 {
        return Err(ApiError::validation("top must be positive"));
    }
    let table = state.store.counts(&id)?;
    let baseline = match &q.baseline {
        Some(b) => Some(state.store.counts(b)?),
        None => None,
    };
    Ok(Json(ObjectsResponse {
        run_id: id,
        baseline: q.baseline,
        objects: object_deltas(&table, baseline.as_ref(), top),
    }))
}

#[derive(Serialize)]
struct GenderResponse {
    run_id: String,
    male: f64,
    female: f64,
    unspecified: f64,
}

async fn get_gender(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<GenderResponse>, ApiError> {
    let report = state.store.report(&id).map_err(|e| report_error(&state.store, &id, e))?;
    Ok(Json(GenderResponse {
        run_id: id,
        male: report.gender.male,
        female: report.gender.female,
        unspecified: report.gender.unspecified,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ComparisonRequest {
    run_ids: Vec<String>,
    #[serde(default)]
    group_id: Option<String>,
}

async fn create_comparison(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: ComparisonRequest = parse_body(&body)?;
    let group = state.store.compare(&req.run_ids, req.group_id)?;
    Ok((StatusCode::CREATED, Json(group)).into_response())
}

async fn get_comparison(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(state.store.comparison(&id)?).into_response())
}

async fn prompt_sets(State(state): State<AppState>) -> Response {
    Json(state.resources.catalog()).into_response()
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}
