//! Domain types shared by the generation, filtering and curation stages.
//!
//! Everything here is a plain value type. Validation lives in constructors
//! (for [`Keywords`]) and in [`validate`], which reports every violated
//! invariant of an [`ExerciseRecord`] instead of failing on the first one.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExerciseKind {
    Math,
    Programming,
}

impl ExerciseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExerciseKind::Math => "math",
            ExerciseKind::Programming => "programming",
        }
    }
}

impl fmt::Display for ExerciseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ExerciseKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "math" => Ok(ExerciseKind::Math),
            "programming" => Ok(ExerciseKind::Programming),
            other => Err(ModelError::UnknownKind(other.to_string())),
        }
    }
}

/// Theme and concept keywords. Tokens are lowercased on construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawKeywords")]
pub struct Keywords {
    #[serde(skip_serializing_if = "Option::is_none")]
    theme: Option<String>,
    concepts: Vec<String>,
}

#[derive(Deserialize)]
struct RawKeywords {
    #[serde(default)]
    theme: Option<String>,
    #[serde(default)]
    concepts: Vec<String>,
}

impl TryFrom<RawKeywords> for Keywords {
    type Error = ModelError;

    fn try_from(raw: RawKeywords) -> Result<Self, Self::Error> {
        Keywords::new(raw.theme, raw.concepts)
    }
}

fn normalize_token(token: &str) -> Result<String, ModelError> {
    let token = token.trim();
    if token.is_empty() {
        return Err(ModelError::InvalidKeyword("empty keyword".into()));
    }
    if token.contains('\n') || token.contains('\r') {
        return Err(ModelError::InvalidKeyword(format!("keyword {token:?} spans lines")));
    }
    Ok(token.to_lowercase())
}

impl Keywords {
    pub fn new<T, C, S>(theme: Option<T>, concepts: C) -> Result<Self, ModelError>
    where
        T: AsRef<str>,
        C: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let theme = theme.map(|t| normalize_token(t.as_ref())).transpose()?;
        let concepts = concepts
            .into_iter()
            .map(|c| normalize_token(c.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Keywords { theme, concepts })
    }

    pub fn theme(&self) -> Option<&str> {
        self.theme.as_deref()
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    /// Keyword lines in prompt order: theme first, then concepts.
    pub fn lines(&self) -> impl Iterator<Item = &str> {
        self.theme.as_deref().into_iter().chain(self.concepts.iter().map(String::as_str))
    }
}

/// The human-provided exemplar that primes generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimingExercise {
    pub id: String,
    pub kind: ExerciseKind,
    pub keywords: Keywords,
    pub statement: String,
    pub solution: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests: Option<String>,
}

impl PrimingExercise {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.statement.trim().is_empty() {
            out.push(format!("priming {}: empty statement", self.id));
        }
        if self.solution.trim().is_empty() {
            out.push(format!("priming {}: empty solution", self.id));
        }
        if self.kind == ExerciseKind::Math && self.tests.is_some() {
            out.push(format!("priming {}: math priming carries tests", self.id));
        }
        out
    }
}

pub const DEFAULT_MAX_TOKENS: u32 = 1024;
pub const DEFAULT_MODEL_NAME: &str = "code-davinci-002";

/// One point of the generation grid.
///
/// `job_key` is derived from every other field, so two jobs compare equal
/// exactly when their keys do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub job_key: String,
    pub priming_id: String,
    pub kind: ExerciseKind,
    pub target_keywords: Keywords,
    pub temperature: f64,
    pub max_tokens: u32,
    pub repetition_index: u32,
    pub model_name: String,
}

impl GenerationJob {
    pub fn new(
        priming_id: impl Into<String>,
        kind: ExerciseKind,
        target_keywords: Keywords,
        temperature: f64,
        max_tokens: u32,
        repetition_index: u32,
        model_name: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(ModelError::InvalidTemperature(temperature));
        }
        if max_tokens == 0 {
            return Err(ModelError::InvalidMaxTokens);
        }
        let mut job = GenerationJob {
            job_key: String::new(),
            priming_id: priming_id.into(),
            kind,
            target_keywords,
            temperature,
            max_tokens,
            repetition_index,
            model_name: model_name.into(),
        };
        job.job_key = job.compute_key();
        Ok(job)
    }

    /// Hash of the canonical encoding of all non-key fields.
    pub fn compute_key(&self) -> String {
        let canonical = serde_json::json!([
            self.priming_id,
            self.kind,
            self.target_keywords,
            self.temperature.to_bits(),
            self.max_tokens,
            self.repetition_index,
            self.model_name,
        ]);
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        format!("{}-{}", self.priming_id, &hex::encode(digest)[..16])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

impl FinishReason {
    pub fn from_api(s: Option<&str>) -> Self {
        match s {
            Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            _ => FinishReason::Other,
        }
    }
}

/// Verbatim model output for one job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCompletion {
    pub job_key: String,
    pub text: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedExercise {
    pub id: String,
    pub job_key: String,
    pub kind: ExerciseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unparsed_tail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Statement,
    Solution,
    Tests,
}

impl GeneratedExercise {
    pub fn section(&self, section: Section) -> Option<&str> {
        match section {
            Section::Statement => self.statement.as_deref(),
            Section::Solution => self.solution.as_deref(),
            Section::Tests => self.tests.as_deref(),
        }
    }

    pub fn set_section(&mut self, section: Section, text: String) {
        match section {
            Section::Statement => self.statement = Some(text),
            Section::Solution => self.solution = Some(text),
            Section::Tests => self.tests = Some(text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub evidence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric: Option<f64>,
    /// Not evaluated because a prerequisite check failed.
    #[serde(default, skip_serializing_if = "is_false")]
    pub skipped: bool,
    /// Recorded for reviewers but never affects the verdict.
    #[serde(default, skip_serializing_if = "is_false")]
    pub advisory: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl CheckResult {
    pub fn pass(name: impl Into<String>, evidence: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: true,
            evidence: evidence.into(),
            numeric: None,
            skipped: false,
            advisory: false,
        }
    }

    pub fn fail(name: impl Into<String>, evidence: impl Into<String>) -> Self {
        CheckResult { passed: false, ..CheckResult::pass(name, evidence) }
    }

    pub fn outcome(name: impl Into<String>, passed: bool, evidence: impl Into<String>) -> Self {
        CheckResult { passed, ..CheckResult::pass(name, evidence) }
    }

    pub fn skip(name: impl Into<String>, blocked_by: &str) -> Self {
        CheckResult {
            passed: false,
            skipped: true,
            ..CheckResult::pass(name, format!("skipped: requires {blocked_by}"))
        }
    }

    pub fn with_numeric(mut self, value: f64) -> Self {
        self.numeric = Some(value);
        self
    }

    pub fn advisory(mut self, advisory: bool) -> Self {
        self.advisory = advisory;
        self
    }

    /// Failed and counts towards the verdict.
    pub fn is_blocking_failure(&self) -> bool {
        !self.passed && !self.skipped && !self.advisory
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Kept,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub exercise_id: String,
    pub kind: ExerciseKind,
    pub checks: BTreeMap<String, CheckResult>,
    pub verdict: Verdict,
    pub reject_reasons: Vec<String>,
    pub canary: bool,
}

impl FilterReport {
    /// Builds a report from checks and explicit reject reasons. The verdict
    /// follows from the reasons.
    pub fn new(
        exercise_id: impl Into<String>,
        kind: ExerciseKind,
        checks: impl IntoIterator<Item = CheckResult>,
        reject_reasons: Vec<String>,
        canary: bool,
    ) -> Self {
        let verdict = if reject_reasons.is_empty() { Verdict::Kept } else { Verdict::Rejected };
        FilterReport {
            exercise_id: exercise_id.into(),
            kind,
            checks: checks.into_iter().map(|c| (c.name.clone(), c)).collect(),
            verdict,
            reject_reasons,
            canary: canary && verdict == Verdict::Rejected,
        }
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.get(name)
    }

    pub fn passed(&self, name: &str) -> bool {
        self.check(name).is_some_and(|c| c.passed)
    }

    /// Adds a further check, updating verdict and reasons. Adding a check
    /// never clears an existing canary flag.
    pub fn push_check(&mut self, check: CheckResult) {
        if check.is_blocking_failure() && !self.reject_reasons.contains(&check.name) {
            self.reject_reasons.push(check.name.clone());
            self.verdict = Verdict::Rejected;
        }
        self.checks.insert(check.name.clone(), check);
    }
}

/// Names of checks that establish a sample solution is wrong, as opposed to
/// structurally missing.
pub const CORRECTNESS_CHECKS: &[&str] = &["answer_consistency", "tests_pass"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelDimension {
    Sensible,
    Novel,
    AnswerMatches,
    ThemeMatch,
    ConceptsMatchAll,
    ConceptsMatchAny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelValue {
    Yes,
    No,
    Maybe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Yes,
    No,
}

impl From<Resolution> for LabelValue {
    fn from(r: Resolution) -> Self {
        match r {
            Resolution::Yes => LabelValue::Yes,
            Resolution::No => LabelValue::No,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewLabel {
    pub dimension: LabelDimension,
    pub value: LabelValue,
    pub reviewer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub timestamp: DateTime<Utc>,
    pub section: Section,
    pub text: String,
    pub reviewer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseRecord {
    pub exercise: GeneratedExercise,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_report: Option<FilterReport>,
    #[serde(default)]
    pub labels: Vec<ReviewLabel>,
    #[serde(default)]
    pub resolved_labels: BTreeMap<LabelDimension, Resolution>,
    pub decision: Decision,
    #[serde(default)]
    pub edits: Vec<Edit>,
}

impl ExerciseRecord {
    pub fn new(exercise: GeneratedExercise) -> Self {
        ExerciseRecord {
            exercise,
            filter_report: None,
            labels: Vec::new(),
            resolved_labels: BTreeMap::new(),
            decision: Decision::Pending,
            edits: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.exercise.id
    }

    pub fn is_kept(&self) -> bool {
        self.filter_report.as_ref().is_some_and(|r| r.verdict == Verdict::Kept)
    }

    pub fn is_canary(&self) -> bool {
        self.filter_report.as_ref().is_some_and(|r| r.canary)
    }

    /// Dimensions that carry a `maybe` label and await consensus.
    pub fn needs_consensus(&self, dimension: LabelDimension) -> bool {
        !self.resolved_labels.contains_key(&dimension)
            && self
                .labels
                .iter()
                .any(|l| l.dimension == dimension && l.value == LabelValue::Maybe)
    }

    /// The exercise with all curator edits applied in order.
    pub fn effective_exercise(&self) -> GeneratedExercise {
        let mut ex = self.exercise.clone();
        for edit in &self.edits {
            ex.set_section(edit.section, edit.text.clone());
        }
        ex
    }
}

/// Lists every violated invariant of a record. An empty list means the
/// record is well-formed.
pub fn validate(record: &ExerciseRecord) -> Vec<String> {
    let mut out = Vec::new();
    let ex = &record.exercise;
    if ex.kind == ExerciseKind::Math && ex.tests.is_some() {
        out.push(format!("exercise {}: math exercise carries tests", ex.id));
    }

    if let Some(report) = &record.filter_report {
        if report.exercise_id != ex.id {
            out.push(format!(
                "filter report is for {} but exercise is {}",
                report.exercise_id, ex.id
            ));
        }
        match report.verdict {
            Verdict::Rejected if report.reject_reasons.is_empty() => {
                out.push("verdict rejected without reject reasons".into())
            }
            Verdict::Kept if !report.reject_reasons.is_empty() => {
                out.push("verdict kept with reject reasons".into())
            }
            _ => {}
        }
        if report.canary {
            if report.verdict != Verdict::Rejected {
                out.push("canary set on a kept exercise".into());
            }
            if !report.reject_reasons.iter().any(|r| CORRECTNESS_CHECKS.contains(&r.as_str())) {
                out.push("canary set without a failing correctness check".into());
            }
        }
        for (name, check) in &report.checks {
            if name != &check.name {
                out.push(format!("check stored under {name} is named {}", check.name));
            }
            if !check.passed && check.evidence.trim().is_empty() {
                out.push(format!("failed check {name} has no evidence"));
            }
        }
    }

    for dim in record.resolved_labels.keys() {
        let first = record.labels.iter().find(|l| l.dimension == *dim);
        let resolved_by_consensus = record
            .labels
            .iter()
            .any(|l| l.dimension == *dim && l.value == LabelValue::Maybe);
        match first {
            None => out.push(format!("{dim:?} resolved without any label")),
            Some(l) if l.value == LabelValue::Maybe && !resolved_by_consensus => {
                out.push(format!("{dim:?} resolved from a maybe label without consensus"))
            }
            _ => {}
        }
    }

    if record.decision == Decision::Pending && !record.edits.is_empty() {
        out.push("edits recorded on an undecided record".into());
    }
    out
}
