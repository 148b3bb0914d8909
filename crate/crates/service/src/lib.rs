//! HTTP JSON service for the curation workflow.
//!
//! All writes go through one lock around the event-sourced store, so the
//! log has a single appender; readers see the state after the last
//! completed append.

mod error;
mod jobs;

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use robosource_core::api::{
    ConsensusRequest, DecisionRequest, Health, IngestRequest, IngestResponse, JobRequest, JobState, JobStatus,
    ListQuery, SummaryQuery,
};
use robosource_core::curation::{CurationStore, LabelInput};
use robosource_core::report::AnalysisSummary;
use robosource_core::{ExerciseKind, ExerciseRecord, GenerationJob, Keywords};
use tokio::sync::mpsc;

pub use error::ApiError;
pub use jobs::GenerationSetup;
use jobs::{JobQueue, JobTable};

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: RwLock<CurationStore>,
    jobs: JobTable,
    queue: Option<JobQueue>,
}

impl AppState {
    /// A service without generation; `POST /api/jobs` answers 503.
    pub fn new(store: CurationStore) -> Self {
        AppState { inner: Arc::new(Inner { store: RwLock::new(store), jobs: Mutex::default(), queue: None }) }
    }

    /// A service that also runs posted generation jobs. Must be called
    /// inside a tokio runtime, which hosts the worker task.
    pub fn with_generation(store: CurationStore, setup: GenerationSetup) -> Self {
        let (tx, rx) = mpsc::unbounded_channel();
        let setup = Arc::new(setup);
        let state = AppState {
            inner: Arc::new(Inner {
                store: RwLock::new(store),
                jobs: Mutex::default(),
                queue: Some(JobQueue { setup: Arc::clone(&setup), tx }),
            }),
        };
        tokio::spawn(jobs::worker(state.clone(), setup, rx));
        state
    }

    pub fn store(&self) -> &RwLock<CurationStore> {
        &self.inner.store
    }

    pub fn job_statuses(&self) -> Vec<JobStatus> {
        self.inner.jobs.lock().values().cloned().collect()
    }

    fn set_job_state(&self, key: &str, state: JobState) {
        if let Some(status) = self.inner.jobs.lock().get_mut(key) {
            status.state = state;
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/exercises", get(list_exercises).post(ingest))
        .route("/api/exercises/{id}", get(get_exercise))
        .route("/api/exercises/{id}/labels", post(add_label))
        .route("/api/exercises/{id}/consensus", post(resolve_consensus))
        .route("/api/exercises/{id}/decision", post(decide))
        .route("/api/jobs", get(list_jobs).post(enqueue_jobs))
        .route("/api/reports/summary", get(summary))
        .with_state(state)
}

/// Serves until the listener fails or the task is cancelled.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::unprocessable(e.body_text()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(|e| ApiError::unprocessable(e.body_text()))
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health { status: "ok".into(), records: state.store().read().state().len() })
}

async fn list_exercises(
    State(state): State<AppState>,
    q: Result<Query<ListQuery>, QueryRejection>,
) -> Result<Json<Vec<ExerciseRecord>>, ApiError> {
    let q = query(q)?;
    let store = state.store().read();
    Ok(Json(store.state().list(q.status, q.kind, q.limit).into_iter().cloned().collect()))
}

async fn get_exercise(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<ExerciseRecord>, ApiError> {
    Ok(Json(state.store().read().get(&id)?.clone()))
}

async fn ingest(
    State(state): State<AppState>,
    payload: Result<Json<IngestRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<IngestResponse>), ApiError> {
    let req = body(payload)?;
    let id = state.store().write().ingest(req.exercise, req.filter_report)?;
    Ok((StatusCode::CREATED, Json(IngestResponse { id })))
}

async fn add_label(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<LabelInput>, JsonRejection>,
) -> Result<Json<ExerciseRecord>, ApiError> {
    let input = body(payload)?;
    Ok(Json(state.store().write().add_label(&id, input)?.clone()))
}

async fn resolve_consensus(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<ConsensusRequest>, JsonRejection>,
) -> Result<Json<ExerciseRecord>, ApiError> {
    let req = body(payload)?;
    Ok(Json(state.store().write().resolve_consensus(&id, req.dimension, req.value, req.reviewers)?.clone()))
}

async fn decide(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<DecisionRequest>, JsonRejection>,
) -> Result<Json<ExerciseRecord>, ApiError> {
    let req = body(payload)?;
    Ok(Json(state.store().write().decide(&id, req.action, &req.reviewer, req.edits)?.clone()))
}

async fn summary(
    State(state): State<AppState>,
    q: Result<Query<SummaryQuery>, QueryRejection>,
) -> Result<Json<AnalysisSummary>, ApiError> {
    let q = query(q)?;
    if q.kind != ExerciseKind::Programming {
        return Err(ApiError::unprocessable("the summary covers programming exercises only"));
    }
    Ok(Json(state.store().read().state().summarize(q.kind)))
}

async fn list_jobs(State(state): State<AppState>) -> Json<Vec<JobStatus>> {
    Json(state.job_statuses())
}

async fn enqueue_jobs(
    State(state): State<AppState>,
    payload: Result<Json<JobRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<Vec<JobStatus>>), ApiError> {
    let req = body(payload)?;
    let queue = state.inner.queue.as_ref().ok_or_else(|| {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "generation_unavailable", "no completion backend configured")
    })?;
    let setup = &queue.setup;
    let priming = setup
        .primings
        .get(&req.priming_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_priming", req.priming_id.clone()))?;
    if req.count == 0 {
        return Err(ApiError::unprocessable("count must be positive"));
    }
    let keywords =
        Keywords::new(req.theme.as_deref(), &req.concept_set).map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let jobs: Vec<GenerationJob> = (0..req.count)
        .map(|rep| {
            GenerationJob::new(
                priming.id.clone(),
                priming.kind,
                keywords.clone(),
                req.temperature,
                setup.max_tokens,
                rep,
                setup.model_name.clone(),
            )
        })
        .collect::<Result<_, _>>()
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;

    let mut table = state.inner.jobs.lock();
    let mut out = Vec::with_capacity(jobs.len());
    for job in jobs {
        // Known jobs are not run again unless they failed.
        let rerun = table.get(&job.job_key).is_none_or(|s| matches!(s.state, JobState::Failed { .. }));
        if rerun {
            let _ = queue.tx.send(job.clone());
            table.insert(job.job_key.clone(), JobStatus { job: job.clone(), state: JobState::Queued });
        }
        out.push(table[&job.job_key].clone());
    }
    Ok((StatusCode::ACCEPTED, Json(out)))
}
