//! Background generation: jobs posted to the API are generated, parsed,
//! filtered and ingested by a single worker task.

use std::collections::BTreeMap;
use std::sync::Arc;

use robosource_core::api::{JobState, JobStatus};
use robosource_core::generation::Generator;
use robosource_core::parser::parse_completion;
use robosource_core::pipeline::FilterPipeline;
use robosource_core::{GenerationJob, PrimingExercise};
use tokio::sync::mpsc;

use crate::AppState;

/// Everything the worker needs to turn a job into a curated record.
pub struct GenerationSetup {
    pub primings: BTreeMap<String, PrimingExercise>,
    pub generator: Generator,
    pub pipeline: FilterPipeline,
    pub max_tokens: u32,
    pub model_name: String,
}

pub(crate) struct JobQueue {
    pub setup: Arc<GenerationSetup>,
    pub tx: mpsc::UnboundedSender<GenerationJob>,
}

pub(crate) type JobTable = parking_lot::Mutex<BTreeMap<String, JobStatus>>;

pub(crate) async fn worker(state: AppState, setup: Arc<GenerationSetup>, mut rx: mpsc::UnboundedReceiver<GenerationJob>) {
    while let Some(job) = rx.recv().await {
        state.set_job_state(&job.job_key, JobState::Running);
        let outcome = process(&state, &setup, &job).await;
        let next = match outcome {
            Ok(exercise_id) => JobState::Completed { exercise_id },
            Err(error) => {
                tracing::warn!(job = %job.job_key, %error, "generation job failed");
                JobState::Failed { error }
            }
        };
        state.set_job_state(&job.job_key, next);
    }
}

async fn process(state: &AppState, setup: &Arc<GenerationSetup>, job: &GenerationJob) -> Result<String, String> {
    let completion = setup.generator.generate(job).await.map_err(|e| e.to_string())?;
    let exercise = parse_completion(&completion, job);
    let filter_setup = Arc::clone(setup);
    let (exercise, report) = {
        let concepts = job.target_keywords.concepts().to_vec();
        tokio::task::spawn_blocking(move || {
            let report = filter_setup.pipeline.filter(&exercise, &concepts);
            (exercise, report)
        })
        .await
        .map_err(|e| e.to_string())?
    };
    let report = report.map_err(|e| e.to_string())?;
    state.store().write().ingest(exercise, report).map_err(|e| e.to_string())
}
