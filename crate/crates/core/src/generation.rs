//! Completion backends and batch execution of generation jobs.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::GenerationError;
use crate::model::{FinishReason, GenerationJob, PrimingExercise, RawCompletion};
use crate::prompt::{build_prompt, PromptText, STOP_SEQUENCE};

#[async_trait]
pub trait CompletionBackend: Send + Sync {
    async fn complete(&self, job: &GenerationJob, prompt: &PromptText) -> Result<RawCompletion, GenerationError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReplayEntry {
    job_key: String,
    text: String,
    finish_reason: FinishReason,
}

/// Serves completions recorded in a JSONL fixture file.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    entries: HashMap<String, RawCompletion>,
}

impl ReplayBackend {
    pub fn new(completions: impl IntoIterator<Item = RawCompletion>) -> Self {
        ReplayBackend { entries: completions.into_iter().map(|c| (c.job_key.clone(), c)).collect() }
    }

    pub fn from_jsonl(path: &Path) -> Result<Self, GenerationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GenerationError::Config(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let entry: ReplayEntry = serde_json::from_str(line)
                .map_err(|e| GenerationError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
            entries.push(RawCompletion { job_key: entry.job_key, text: entry.text, finish_reason: entry.finish_reason });
        }
        Ok(ReplayBackend::new(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[async_trait]
impl CompletionBackend for ReplayBackend {
    async fn complete(&self, job: &GenerationJob, _prompt: &PromptText) -> Result<RawCompletion, GenerationError> {
        self.entries.get(&job.job_key).cloned().ok_or_else(|| GenerationError::FixtureMissing(job.job_key.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_secs(1) }
    }
}

/// Completion endpoint client. Transport errors, 429 and 5xx responses are
/// retried with exponential backoff; a `Retry-After` header on 429 takes
/// precedence over the backoff delay.
pub struct LiveBackend {
    client: reqwest::Client,
    endpoint_url: String,
    api_key: String,
    retry: RetryPolicy,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    stop: &'a [String],
    n: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
    finish_reason: Option<String>,
}

impl LiveBackend {
    pub fn new(endpoint_url: impl Into<String>, api_key: impl Into<String>, timeout: Duration, retry: RetryPolicy) -> Self {
        let client = reqwest::Client::builder().timeout(timeout).build().expect("http client");
        LiveBackend { client, endpoint_url: endpoint_url.into(), api_key: api_key.into(), retry }
    }
}

enum Attempt {
    Done(RawCompletion),
    Retry { rate_limited: bool, wait: Option<Duration>, reason: String },
    Fatal(String),
}

impl LiveBackend {
    async fn attempt(&self, job: &GenerationJob, body: &CompletionRequest<'_>) -> Attempt {
        let response = match self.client.post(&self.endpoint_url).bearer_auth(&self.api_key).json(body).send().await {
            Ok(r) => r,
            Err(e) => return Attempt::Retry { rate_limited: false, wait: None, reason: e.to_string() },
        };
        let status = response.status();
        if status.as_u16() == 429 {
            let wait = response
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Attempt::Retry { rate_limited: true, wait, reason: "HTTP 429".into() };
        }
        if status.is_server_error() {
            return Attempt::Retry { rate_limited: false, wait: None, reason: format!("HTTP {status}") };
        }
        if !status.is_success() {
            return Attempt::Fatal(format!("HTTP {status}"));
        }
        match response.json::<CompletionResponse>().await {
            Ok(parsed) => match parsed.choices.into_iter().next() {
                Some(choice) => Attempt::Done(RawCompletion {
                    job_key: job.job_key.clone(),
                    text: choice.text,
                    finish_reason: FinishReason::from_api(choice.finish_reason.as_deref()),
                }),
                None => Attempt::Fatal("response has no choices".into()),
            },
            Err(e) => Attempt::Fatal(format!("malformed response: {e}")),
        }
    }
}

#[async_trait]
impl CompletionBackend for LiveBackend {
    async fn complete(&self, job: &GenerationJob, prompt: &PromptText) -> Result<RawCompletion, GenerationError> {
        let body = CompletionRequest {
            model: &job.model_name,
            prompt: &prompt.text,
            temperature: job.temperature,
            max_tokens: job.max_tokens,
            stop: &prompt.stop_sequences,
            n: 1,
        };
        let mut last = String::new();
        let mut rate_limited = false;
        for attempt in 0..self.retry.attempts {
            match self.attempt(job, &body).await {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fatal(reason) => return Err(GenerationError::BackendUnavailable(reason)),
                Attempt::Retry { rate_limited: rl, wait, reason } => {
                    tracing::warn!(job = %job.job_key, attempt, %reason, "completion attempt failed");
                    rate_limited = rl;
                    last = reason;
                    if attempt + 1 < self.retry.attempts {
                        let backoff = self.retry.base_delay * 2u32.pow(attempt);
                        tokio::time::sleep(wait.unwrap_or(backoff)).await;
                    }
                }
            }
        }
        if rate_limited {
            Err(GenerationError::RateLimited { attempts: self.retry.attempts })
        } else {
            Err(GenerationError::BackendUnavailable(last))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Replay,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionBackendConfig {
    pub backend: BackendKind,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub api_key_env_var: Option<String>,
    #[serde(default)]
    pub fixtures_path: Option<PathBuf>,
    #[serde(default = "default_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default = "default_parallel")]
    pub max_parallel_jobs: usize,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_parallel() -> usize {
    4
}

impl CompletionBackendConfig {
    pub fn replay(fixtures_path: impl Into<PathBuf>) -> Self {
        CompletionBackendConfig {
            backend: BackendKind::Replay,
            endpoint_url: None,
            api_key_env_var: None,
            fixtures_path: Some(fixtures_path.into()),
            request_timeout_ms: default_timeout_ms(),
            max_parallel_jobs: default_parallel(),
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.max_parallel_jobs == 0 {
            return Err(GenerationError::Config("max_parallel_jobs must be positive".into()));
        }
        match self.backend {
            BackendKind::Live if self.endpoint_url.is_none() || self.api_key_env_var.is_none() => Err(
                GenerationError::Config("live backend needs endpoint_url and api_key_env_var".into()),
            ),
            BackendKind::Replay if self.fixtures_path.is_none() => {
                Err(GenerationError::Config("replay backend needs fixtures_path".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn CompletionBackend>, GenerationError> {
        self.validate()?;
        match self.backend {
            BackendKind::Replay => {
                Ok(Arc::new(ReplayBackend::from_jsonl(self.fixtures_path.as_deref().expect("validated"))?))
            }
            BackendKind::Live => {
                let var = self.api_key_env_var.as_deref().expect("validated");
                let key = std::env::var(var)
                    .map_err(|_| GenerationError::Config(format!("environment variable {var} is not set")))?;
                Ok(Arc::new(LiveBackend::new(
                    self.endpoint_url.clone().expect("validated"),
                    key,
                    Duration::from_millis(self.request_timeout_ms),
                    RetryPolicy::default(),
                )))
            }
        }
    }
}

/// Receives completions as jobs finish. Each append is atomic.
pub trait CompletionSink: Send + Sync {
    fn append(&self, completion: &RawCompletion) -> std::io::Result<()>;
}

pub struct JsonlSink {
    writer: Mutex<BufWriter<File>>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(JsonlSink { writer: Mutex::new(BufWriter::new(File::create(path)?)) })
    }
}

impl CompletionSink for JsonlSink {
    fn append(&self, completion: &RawCompletion) -> std::io::Result<()> {
        let mut line = serde_json::to_string(completion)?;
        line.push('\n');
        let mut w = self.writer.lock();
        w.write_all(line.as_bytes())?;
        w.flush()
    }
}

#[derive(Debug, Default)]
pub struct VecSink {
    pub items: Mutex<Vec<RawCompletion>>,
}

impl CompletionSink for VecSink {
    fn append(&self, completion: &RawCompletion) -> std::io::Result<()> {
        self.items.lock().push(completion.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub succeeded: usize,
    /// Error message per failed job key.
    pub failed: BTreeMap<String, String>,
}

/// Cuts `text` at the first stop sequence, which is dropped.
pub fn truncate_at_stop(text: &str, stop_sequences: &[String]) -> String {
    let cut = stop_sequences.iter().filter_map(|s| text.find(s.as_str())).min().unwrap_or(text.len());
    text[..cut].to_string()
}

/// Renders prompts for jobs and runs them against a backend.
pub struct Generator {
    primings: BTreeMap<String, PrimingExercise>,
    backend: Arc<dyn CompletionBackend>,
    max_parallel_jobs: usize,
}

impl Generator {
    pub fn new(
        primings: BTreeMap<String, PrimingExercise>,
        backend: Arc<dyn CompletionBackend>,
        max_parallel_jobs: usize,
    ) -> Self {
        Generator { primings, backend, max_parallel_jobs: max_parallel_jobs.max(1) }
    }

    pub fn prompt_for(&self, job: &GenerationJob) -> Result<PromptText, GenerationError> {
        let priming =
            self.primings.get(&job.priming_id).ok_or_else(|| GenerationError::UnknownPriming(job.priming_id.clone()))?;
        Ok(build_prompt(priming, &job.target_keywords)?)
    }

    pub async fn generate(&self, job: &GenerationJob) -> Result<RawCompletion, GenerationError> {
        let prompt = self.prompt_for(job)?;
        let mut completion = self.backend.complete(job, &prompt).await?;
        let truncated = truncate_at_stop(&completion.text, &[STOP_SEQUENCE.to_string()]);
        if truncated.len() != completion.text.len() {
            completion.text = truncated;
            completion.finish_reason = FinishReason::Stop;
        }
        Ok(completion)
    }

    /// Runs every job once, up to `max_parallel_jobs` at a time, appending
    /// successes to `sink` in completion order.
    pub async fn generate_batch(&self, jobs: &[GenerationJob], sink: &dyn CompletionSink) -> BatchSummary {
        let results: Vec<(String, Result<(), String>)> = stream::iter(jobs)
            .map(|job| async move {
                let outcome = match self.generate(job).await {
                    Ok(c) => sink.append(&c).map_err(|e| format!("sink: {e}")),
                    Err(e) => Err(e.to_string()),
                };
                (job.job_key.clone(), outcome)
            })
            .buffer_unordered(self.max_parallel_jobs)
            .collect()
            .await;

        let mut summary = BatchSummary::default();
        for (key, outcome) in results {
            match outcome {
                Ok(()) => summary.succeeded += 1,
                Err(e) => {
                    summary.failed.insert(key, e);
                }
            }
        }
        summary
    }
}
