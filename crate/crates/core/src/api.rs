//! Request and response bodies of the curation HTTP API, shared by the
//! service and its client.

use serde::{Deserialize, Serialize};

use crate::curation::{DecisionAction, EditInput, StatusFilter};
use crate::model::{ExerciseKind, FilterReport, GeneratedExercise, GenerationJob, LabelDimension, Resolution};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<StatusFilter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExerciseKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRequest {
    pub exercise: GeneratedExercise,
    pub filter_report: FilterReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusRequest {
    pub dimension: LabelDimension,
    pub value: Resolution,
    pub reviewers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub action: DecisionAction,
    pub reviewer: String,
    #[serde(default)]
    pub edits: Vec<EditInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRequest {
    pub priming_id: String,
    #[serde(default)]
    pub theme: Option<String>,
    #[serde(default)]
    pub concept_set: Vec<String>,
    pub temperature: f64,
    /// Number of repetitions to generate.
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Completed { exercise_id: String },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job: GenerationJob,
    #[serde(flatten)]
    pub state: JobState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryQuery {
    #[serde(default = "programming")]
    pub kind: ExerciseKind,
}

fn programming() -> ExerciseKind {
    ExerciseKind::Programming
}

/// Body of every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub records: usize,
}
