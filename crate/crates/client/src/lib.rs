//! Typed client for the curation service HTTP API.

use reqwest::{Method, RequestBuilder, StatusCode};
use robosource_core::api::{
    ConsensusRequest, DecisionRequest, ErrorBody, Health, IngestRequest, IngestResponse, JobRequest, JobStatus,
    ListQuery,
};
use robosource_core::curation::{DecisionAction, EditInput, LabelInput, StatusFilter};
use robosource_core::report::AnalysisSummary;
use robosource_core::{ExerciseKind, ExerciseRecord, FilterReport, GeneratedExercise, LabelDimension, Resolution};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{status}: {error}: {detail}")]
    Api { status: StatusCode, error: String, detail: String },
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    /// The machine-readable error code, for API errors.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { error, .. } => Some(error),
            ClientError::Transport(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base_url` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base_url: impl Into<String>) -> Self {
        Client { base: base_url.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    fn request(&self, method: Method, path: &str) -> RequestBuilder {
        self.http.request(method, format!("{}{path}", self.base))
    }

    async fn send<T: DeserializeOwned>(&self, builder: RequestBuilder) -> Result<T, ClientError> {
        let response = builder.send().await?;
        let status = response.status();
        if status.is_success() {
            return Ok(response.json().await?);
        }
        let text = response.text().await?;
        let body: ErrorBody = serde_json::from_str(&text)
            .unwrap_or_else(|_| ErrorBody { error: "unexpected_response".into(), detail: text });
        Err(ClientError::Api { status, error: body.error, detail: body.detail })
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        self.send(self.request(Method::POST, path).json(body)).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.send(self.request(Method::GET, "/api/health")).await
    }

    pub async fn list(
        &self,
        status: Option<StatusFilter>,
        kind: Option<ExerciseKind>,
        limit: Option<usize>,
    ) -> Result<Vec<ExerciseRecord>, ClientError> {
        let q = ListQuery { status, kind, limit };
        self.send(self.request(Method::GET, "/api/exercises").query(&q)).await
    }

    pub async fn get(&self, id: &str) -> Result<ExerciseRecord, ClientError> {
        self.send(self.request(Method::GET, &format!("/api/exercises/{id}"))).await
    }

    pub async fn ingest(&self, exercise: GeneratedExercise, filter_report: FilterReport) -> Result<String, ClientError> {
        let response: IngestResponse =
            self.post("/api/exercises", &IngestRequest { exercise, filter_report }).await?;
        Ok(response.id)
    }

    pub async fn add_label(&self, id: &str, label: &LabelInput) -> Result<ExerciseRecord, ClientError> {
        self.post(&format!("/api/exercises/{id}/labels"), label).await
    }

    pub async fn resolve_consensus(
        &self,
        id: &str,
        dimension: LabelDimension,
        value: Resolution,
        reviewers: Vec<String>,
    ) -> Result<ExerciseRecord, ClientError> {
        let body = ConsensusRequest { dimension, value, reviewers };
        self.post(&format!("/api/exercises/{id}/consensus"), &body).await
    }

    pub async fn decide(
        &self,
        id: &str,
        action: DecisionAction,
        reviewer: &str,
        edits: Vec<EditInput>,
    ) -> Result<ExerciseRecord, ClientError> {
        let body = DecisionRequest { action, reviewer: reviewer.to_string(), edits };
        self.post(&format!("/api/exercises/{id}/decision"), &body).await
    }

    pub async fn enqueue_jobs(&self, request: &JobRequest) -> Result<Vec<JobStatus>, ClientError> {
        self.post("/api/jobs", request).await
    }

    pub async fn jobs(&self) -> Result<Vec<JobStatus>, ClientError> {
        self.send(self.request(Method::GET, "/api/jobs")).await
    }

    pub async fn summary(&self) -> Result<AnalysisSummary, ClientError> {
        self.send(self.request(Method::GET, "/api/reports/summary").query(&[("kind", "programming")])).await
    }
}
