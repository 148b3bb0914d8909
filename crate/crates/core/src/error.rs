use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid keyword: {0}")]
    InvalidKeyword(String),
    #[error("unknown exercise kind {0:?}")]
    UnknownKind(String),
    #[error("temperature {0} outside [0, 2]")]
    InvalidTemperature(f64),
    #[error("max_tokens must be positive")]
    InvalidMaxTokens,
    #[error("grid axis {0} is empty")]
    EmptyGridAxis(&'static str),
    #[error("unknown priming {0:?}")]
    UnknownPriming(String),
    #[error("invalid priming: {0}")]
    InvalidPriming(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("programming priming {0} has no tests")]
    MissingTests(String),
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no replay fixture for job {0}")]
    FixtureMissing(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("unknown priming {0:?}")]
    UnknownPriming(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunnerError {
    #[error("runner failure: {0}")]
    RunnerFailure(String),
    #[error("runner protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("invalid runner request: {0}")]
    InvalidRequest(String),
    #[error("concept analysis was not requested")]
    MissingConceptAnalysis,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoveltyError {
    #[error("web search backend unavailable: {0}")]
    WebBackendUnavailable(String),
}

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("record {0} not found")]
    RecordNotFound(String),
    #[error("record {0} already decided")]
    AlreadyDecided(String),
    #[error("exercise {0} already ingested")]
    DuplicateExercise(String),
    #[error("dimension {0} is not awaiting consensus")]
    NotInConsensusState(String),
    #[error("consensus needs at least two reviewers, got {0}")]
    TooFewReviewers(usize),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("corrupt event log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
    #[error("event log i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
}
