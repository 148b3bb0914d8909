//! Event-sourced curation store.
//!
//! Every mutation is appended to a JSONL event log before it is applied to
//! the in-memory view, and the view is rebuilt from the log on startup, so
//! replaying the log always reproduces the live state. Events are never
//! rewritten.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

use crate::error::CurationError;
use crate::model::{
    Decision, Edit, ExerciseKind, ExerciseRecord, FilterReport, GeneratedExercise, LabelDimension, LabelValue,
    Resolution, ReviewLabel, Section,
};
use crate::report::{summarize, AnalysisSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ExerciseIngested,
    FilterReported,
    LabelAdded,
    LabelResolved,
    DecisionMade,
    EditApplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub kind: EventKind,
    pub payload: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IngestedPayload {
    exercise: GeneratedExercise,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FilterReportedPayload {
    exercise_id: String,
    report: FilterReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LabelAddedPayload {
    exercise_id: String,
    label: ReviewLabel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LabelResolvedPayload {
    exercise_id: String,
    dimension: LabelDimension,
    value: Resolution,
    reviewers: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DecisionPayload {
    exercise_id: String,
    decision: Decision,
    reviewer: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EditPayload {
    exercise_id: String,
    section: Section,
    text: String,
    reviewer: String,
}

fn decode<T: DeserializeOwned>(event: &Event) -> Result<T, String> {
    serde_json::from_value(event.payload.clone()).map_err(|e| format!("bad {:?} payload: {e}", event.kind))
}

/// Materialized view of the event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurationState {
    records: BTreeMap<String, ExerciseRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatusFilter {
    /// Kept by the filters and not yet decided.
    Pending,
    Accepted,
    /// Rejected by a curator, or by the filters and not yet decided.
    Rejected,
    Canary,
}

impl CurationState {
    pub fn get(&self, id: &str) -> Option<&ExerciseRecord> {
        self.records.get(id)
    }

    pub fn records(&self) -> impl Iterator<Item = &ExerciseRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn matches(record: &ExerciseRecord, status: StatusFilter) -> bool {
        match status {
            StatusFilter::Pending => record.decision == Decision::Pending && record.is_kept(),
            StatusFilter::Accepted => record.decision == Decision::Accepted,
            StatusFilter::Rejected => {
                record.decision == Decision::Rejected
                    || (record.decision == Decision::Pending && record.filter_report.is_some() && !record.is_kept())
            }
            StatusFilter::Canary => record.is_canary(),
        }
    }

    pub fn list(&self, status: Option<StatusFilter>, kind: Option<ExerciseKind>, limit: Option<usize>) -> Vec<&ExerciseRecord> {
        self.records
            .values()
            .filter(|r| status.is_none_or(|s| Self::matches(r, s)))
            .filter(|r| kind.is_none_or(|k| r.exercise.kind == k))
            .take(limit.unwrap_or(usize::MAX))
            .collect()
    }

    pub fn pending(&self) -> Vec<&ExerciseRecord> {
        self.list(Some(StatusFilter::Pending), None, None)
    }

    pub fn summarize(&self, kind: ExerciseKind) -> AnalysisSummary {
        summarize(
            self.records
                .values()
                .filter(|r| r.exercise.kind == kind)
                .filter_map(|r| r.filter_report.as_ref()),
        )
    }

    fn record_mut(&mut self, id: &str) -> Result<&mut ExerciseRecord, String> {
        self.records.get_mut(id).ok_or_else(|| format!("unknown record {id}"))
    }

    /// Applies one event. Fails if the event does not fit the current state.
    pub fn apply(&mut self, event: &Event) -> Result<(), String> {
        match event.kind {
            EventKind::ExerciseIngested => {
                let p: IngestedPayload = decode(event)?;
                if self.records.contains_key(&p.exercise.id) {
                    return Err(format!("duplicate record {}", p.exercise.id));
                }
                self.records.insert(p.exercise.id.clone(), ExerciseRecord::new(p.exercise));
            }
            EventKind::FilterReported => {
                let p: FilterReportedPayload = decode(event)?;
                self.record_mut(&p.exercise_id)?.filter_report = Some(p.report);
            }
            EventKind::LabelAdded => {
                let p: LabelAddedPayload = decode(event)?;
                let record = self.record_mut(&p.exercise_id)?;
                if record.decision != Decision::Pending {
                    return Err(format!("label on decided record {}", p.exercise_id));
                }
                let dim = p.label.dimension;
                let first = !record.labels.iter().any(|l| l.dimension == dim);
                if first && p.label.value != LabelValue::Maybe {
                    let value = if p.label.value == LabelValue::Yes { Resolution::Yes } else { Resolution::No };
                    record.resolved_labels.insert(dim, value);
                }
                record.labels.push(p.label);
            }
            EventKind::LabelResolved => {
                let p: LabelResolvedPayload = decode(event)?;
                let record = self.record_mut(&p.exercise_id)?;
                if !record.needs_consensus(p.dimension) {
                    return Err(format!("{:?} of {} not awaiting consensus", p.dimension, p.exercise_id));
                }
                record.resolved_labels.insert(p.dimension, p.value);
            }
            EventKind::EditApplied => {
                let p: EditPayload = decode(event)?;
                let record = self.record_mut(&p.exercise_id)?;
                if record.decision != Decision::Pending {
                    return Err(format!("edit on decided record {}", p.exercise_id));
                }
                record.edits.push(Edit {
                    timestamp: event.timestamp,
                    section: p.section,
                    text: p.text,
                    reviewer: p.reviewer,
                });
            }
            EventKind::DecisionMade => {
                let p: DecisionPayload = decode(event)?;
                let record = self.record_mut(&p.exercise_id)?;
                if record.decision != Decision::Pending || p.decision == Decision::Pending {
                    return Err(format!("invalid decision transition on {}", p.exercise_id));
                }
                record.decision = p.decision;
            }
        }
        Ok(())
    }
}

/// Replays `events` from an empty state.
pub fn rebuild(events: &[Event]) -> Result<CurationState, CurationError> {
    let mut state = CurationState::default();
    for (expected, event) in (1..).zip(events) {
        if event.seq != expected {
            return Err(CurationError::CorruptLog {
                seq: event.seq,
                reason: format!("expected seq {expected}"),
            });
        }
        state.apply(event).map_err(|reason| CurationError::CorruptLog { seq: event.seq, reason })?;
    }
    Ok(state)
}

/// Reads every event of a JSONL log. A missing file is an empty log.
pub fn read_log(path: &Path) -> Result<Vec<Event>, CurationError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut events: Vec<Event> = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let next_seq = events.last().map_or(1, |e| e.seq + 1);
        let event: Event = serde_json::from_str(&line).map_err(|e| CurationError::CorruptLog {
            seq: next_seq,
            reason: format!("undecodable line: {e}"),
        })?;
        if event.seq != next_seq {
            return Err(CurationError::CorruptLog { seq: event.seq, reason: format!("expected seq {next_seq}") });
        }
        events.push(event);
    }
    Ok(events)
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(Utc::now)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelInput {
    pub dimension: LabelDimension,
    pub value: LabelValue,
    pub reviewer: String,
    #[serde(default)]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionAction {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditInput {
    pub section: Section,
    pub text: String,
}

/// The event log plus its materialized view. Not internally synchronized:
/// callers serialize writers.
pub struct CurationStore {
    path: Option<PathBuf>,
    file: Option<File>,
    events: Vec<Event>,
    state: CurationState,
    clock: Clock,
}

impl CurationStore {
    /// A store without a backing file.
    pub fn in_memory(clock: Clock) -> Self {
        CurationStore { path: None, file: None, events: Vec::new(), state: CurationState::default(), clock }
    }

    /// Opens (or creates) the log at `path` and rebuilds the view from it.
    pub fn open(path: impl Into<PathBuf>, clock: Clock) -> Result<Self, CurationError> {
        let path = path.into();
        let events = read_log(&path)?;
        let state = rebuild(&events)?;
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(CurationStore { path: Some(path), file: Some(file), events, state, clock })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn state(&self) -> &CurationState {
        &self.state
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn get(&self, id: &str) -> Result<&ExerciseRecord, CurationError> {
        self.state.get(id).ok_or_else(|| CurationError::RecordNotFound(id.to_string()))
    }

    /// Writes all events in one append, then applies them.
    fn commit(&mut self, drafts: Vec<(EventKind, Value)>) -> Result<(), CurationError> {
        let timestamp = (self.clock)();
        let first_seq = self.events.last().map_or(1, |e| e.seq + 1);
        let events: Vec<Event> = drafts
            .into_iter()
            .enumerate()
            .map(|(i, (kind, payload))| Event { seq: first_seq + i as u64, timestamp, kind, payload })
            .collect();

        let mut staged = self.state.clone();
        for e in &events {
            staged.apply(e).map_err(CurationError::Invalid)?;
        }
        if let Some(file) = self.file.as_mut() {
            let mut buf = String::new();
            for e in &events {
                buf.push_str(&serde_json::to_string(e).expect("event serializes"));
                buf.push('\n');
            }
            file.write_all(buf.as_bytes())?;
            file.flush()?;
        }
        self.state = staged;
        self.events.extend(events);
        Ok(())
    }

    fn pending_record(&self, id: &str) -> Result<&ExerciseRecord, CurationError> {
        let record = self.get(id)?;
        if record.decision != Decision::Pending {
            return Err(CurationError::AlreadyDecided(id.to_string()));
        }
        Ok(record)
    }

    pub fn ingest(&mut self, exercise: GeneratedExercise, report: FilterReport) -> Result<String, CurationError> {
        if self.state.get(&exercise.id).is_some() {
            return Err(CurationError::DuplicateExercise(exercise.id));
        }
        if report.exercise_id != exercise.id {
            return Err(CurationError::Invalid(format!(
                "report for {} does not belong to {}",
                report.exercise_id, exercise.id
            )));
        }
        if exercise.kind == ExerciseKind::Math && exercise.tests.is_some() {
            return Err(CurationError::Invalid("math exercise carries tests".into()));
        }
        let id = exercise.id.clone();
        self.commit(vec![
            (EventKind::ExerciseIngested, serde_json::to_value(IngestedPayload { exercise }).expect("serializes")),
            (
                EventKind::FilterReported,
                serde_json::to_value(FilterReportedPayload { exercise_id: id.clone(), report }).expect("serializes"),
            ),
        ])?;
        Ok(id)
    }

    pub fn add_label(&mut self, id: &str, input: LabelInput) -> Result<&ExerciseRecord, CurationError> {
        self.pending_record(id)?;
        if input.reviewer.trim().is_empty() {
            return Err(CurationError::Invalid("reviewer is required".into()));
        }
        if input.value == LabelValue::Maybe && input.notes.as_deref().is_none_or(|n| n.trim().is_empty()) {
            tracing::warn!(record = id, dimension = ?input.dimension, "maybe label without notes");
        }
        let label = ReviewLabel {
            dimension: input.dimension,
            value: input.value,
            reviewer: input.reviewer,
            notes: input.notes,
            timestamp: (self.clock)(),
        };
        let payload = LabelAddedPayload { exercise_id: id.to_string(), label };
        self.commit(vec![(EventKind::LabelAdded, serde_json::to_value(payload).expect("serializes"))])?;
        self.get(id)
    }

    pub fn resolve_consensus(
        &mut self,
        id: &str,
        dimension: LabelDimension,
        value: Resolution,
        reviewers: Vec<String>,
    ) -> Result<&ExerciseRecord, CurationError> {
        let record = self.pending_record(id)?;
        if !record.needs_consensus(dimension) {
            return Err(CurationError::NotInConsensusState(format!("{dimension:?}")));
        }
        let distinct: BTreeSet<&str> =
            reviewers.iter().map(|r| r.trim()).filter(|r| !r.is_empty()).collect();
        if distinct.len() < 2 {
            return Err(CurationError::TooFewReviewers(distinct.len()));
        }
        let payload = LabelResolvedPayload { exercise_id: id.to_string(), dimension, value, reviewers };
        self.commit(vec![(EventKind::LabelResolved, serde_json::to_value(payload).expect("serializes"))])?;
        self.get(id)
    }

    pub fn decide(
        &mut self,
        id: &str,
        action: DecisionAction,
        reviewer: &str,
        edits: Vec<EditInput>,
    ) -> Result<&ExerciseRecord, CurationError> {
        let record = self.pending_record(id)?;
        if reviewer.trim().is_empty() {
            return Err(CurationError::Invalid("reviewer is required".into()));
        }
        if record.exercise.kind == ExerciseKind::Math && edits.iter().any(|e| e.section == Section::Tests) {
            return Err(CurationError::Invalid("math exercises have no tests section".into()));
        }
        let mut drafts: Vec<(EventKind, Value)> = edits
            .into_iter()
            .map(|e| {
                let payload = EditPayload {
                    exercise_id: id.to_string(),
                    section: e.section,
                    text: e.text,
                    reviewer: reviewer.to_string(),
                };
                (EventKind::EditApplied, serde_json::to_value(payload).expect("serializes"))
            })
            .collect();
        let decision = match action {
            DecisionAction::Accept => Decision::Accepted,
            DecisionAction::Reject => Decision::Rejected,
        };
        let payload = DecisionPayload { exercise_id: id.to_string(), decision, reviewer: reviewer.to_string() };
        drafts.push((EventKind::DecisionMade, serde_json::to_value(payload).expect("serializes")));
        self.commit(drafts)?;
        self.get(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CheckResult, Verdict};

    fn fixed_clock() -> Clock {
        let t = DateTime::parse_from_rfc3339("2024-03-01T12:00:00Z").unwrap().with_timezone(&Utc);
        Arc::new(move || t)
    }

    fn exercise(id: &str) -> GeneratedExercise {
        GeneratedExercise {
            id: id.into(),
            job_key: id.into(),
            kind: ExerciseKind::Math,
            statement: Some("3 packs of 6 and 2 packs of 3".into()),
            solution: Some("3 * 6 + 2 * 3 = 21".into()),
            tests: None,
            unparsed_tail: None,
        }
    }

    fn report(id: &str, kept: bool, canary: bool) -> FilterReport {
        let check = CheckResult::outcome("answer_consistency", kept, "expected 24, got 21");
        let reasons = if kept { vec![] } else { vec!["answer_consistency".to_string()] };
        FilterReport::new(id, ExerciseKind::Math, [check], reasons, canary)
    }

    fn label(dimension: LabelDimension, value: LabelValue) -> LabelInput {
        LabelInput { dimension, value, reviewer: "ana".into(), notes: None }
    }

    #[test]
    fn ingest_routes_by_verdict() {
        let mut store = CurationStore::in_memory(fixed_clock());
        store.ingest(exercise("a"), report("a", true, false)).unwrap();
        store.ingest(exercise("b"), report("b", false, true)).unwrap();
        let pending: Vec<_> = store.state().pending().iter().map(|r| r.id().to_string()).collect();
        assert_eq!(pending, ["a"]);
        let canary = store.state().list(Some(StatusFilter::Canary), None, None);
        assert_eq!(canary.len(), 1);
        assert_eq!(canary[0].id(), "b");
        assert_eq!(store.state().list(Some(StatusFilter::Rejected), None, None).len(), 1);
        assert!(matches!(
            store.ingest(exercise("a"), report("a", true, false)),
            Err(CurationError::DuplicateExercise(_))
        ));
        assert_eq!(store.events().len(), 4);
    }

    #[test]
    fn labels_and_consensus() {
        let mut store = CurationStore::in_memory(fixed_clock());
        store.ingest(exercise("a"), report("a", true, false)).unwrap();
        let r = store.add_label("a", label(LabelDimension::Novel, LabelValue::Yes)).unwrap();
        assert_eq!(r.resolved_labels[&LabelDimension::Novel], Resolution::Yes);

        let r = store.add_label("a", label(LabelDimension::Sensible, LabelValue::Maybe)).unwrap();
        assert!(r.needs_consensus(LabelDimension::Sensible));
        assert!(!r.resolved_labels.contains_key(&LabelDimension::Sensible));

        assert!(matches!(
            store.resolve_consensus("a", LabelDimension::Sensible, Resolution::Yes, vec!["ana".into()]),
            Err(CurationError::TooFewReviewers(1))
        ));
        assert!(matches!(
            store.resolve_consensus("a", LabelDimension::Sensible, Resolution::Yes, vec!["ana".into(), "ana".into()]),
            Err(CurationError::TooFewReviewers(1))
        ));
        assert!(matches!(
            store.resolve_consensus("a", LabelDimension::Novel, Resolution::Yes, vec!["ana".into(), "ben".into()]),
            Err(CurationError::NotInConsensusState(_))
        ));
        let r = store
            .resolve_consensus("a", LabelDimension::Sensible, Resolution::Yes, vec!["ana".into(), "ben".into()])
            .unwrap();
        assert_eq!(r.resolved_labels[&LabelDimension::Sensible], Resolution::Yes);
        assert!(crate::model::validate(r).is_empty());
    }

    #[test]
    fn decisions_are_final() {
        let mut store = CurationStore::in_memory(fixed_clock());
        store.ingest(exercise("a"), report("a", false, true)).unwrap();
        let edit = EditInput { section: Section::Solution, text: "3 * 6 + 2 * 3 = 24".into() };
        let r = store.decide("a", DecisionAction::Accept, "ana", vec![edit]).unwrap();
        assert_eq!(r.decision, Decision::Accepted);
        assert_eq!(r.edits.len(), 1);
        assert_eq!(r.effective_exercise().solution.as_deref(), Some("3 * 6 + 2 * 3 = 24"));
        assert!(matches!(
            store.decide("a", DecisionAction::Reject, "ben", vec![]),
            Err(CurationError::AlreadyDecided(_))
        ));
        assert!(matches!(
            store.add_label("a", label(LabelDimension::Novel, LabelValue::Yes)),
            Err(CurationError::AlreadyDecided(_))
        ));
        assert!(matches!(
            store.decide("zzz", DecisionAction::Reject, "ben", vec![]),
            Err(CurationError::RecordNotFound(_))
        ));
        let kinds: Vec<_> = store.events().iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            [EventKind::ExerciseIngested, EventKind::FilterReported, EventKind::EditApplied, EventKind::DecisionMade]
        );
    }

    #[test]
    fn log_round_trips_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let live = {
            let mut store = CurationStore::open(&path, fixed_clock()).unwrap();
            store.ingest(exercise("a"), report("a", true, false)).unwrap();
            store.add_label("a", label(LabelDimension::Sensible, LabelValue::No)).unwrap();
            store.decide("a", DecisionAction::Reject, "ana", vec![]).unwrap();
            store.state().clone()
        };
        let reopened = CurationStore::open(&path, fixed_clock()).unwrap();
        assert_eq!(reopened.state(), &live);
        assert_eq!(reopened.state().get("a").unwrap().decision, Decision::Rejected);
    }

    #[test]
    fn corrupt_logs_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        {
            let mut store = CurationStore::open(&path, fixed_clock()).unwrap();
            store.ingest(exercise("a"), report("a", true, false)).unwrap();
            store.ingest(exercise("b"), report("b", true, false)).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();

        let gap = [lines[0], lines[2]].join("\n");
        std::fs::write(&path, gap).unwrap();
        match CurationStore::open(&path, fixed_clock()) {
            Err(CurationError::CorruptLog { seq, .. }) => assert_eq!(seq, 3),
            other => panic!("expected corrupt log, got {:?}", other.err()),
        }

        std::fs::write(&path, format!("{}\nnot json\n", lines[0])).unwrap();
        match CurationStore::open(&path, fixed_clock()) {
            Err(CurationError::CorruptLog { seq, .. }) => assert_eq!(seq, 2),
            other => panic!("expected corrupt log, got {:?}", other.err()),
        }

        std::fs::write(&path, "").unwrap();
        assert!(CurationStore::open(&path, fixed_clock()).unwrap().state().is_empty());
    }

    #[test]
    fn verdict_reflected_in_record() {
        let mut store = CurationStore::in_memory(fixed_clock());
        store.ingest(exercise("a"), report("a", true, false)).unwrap();
        assert_eq!(store.get("a").unwrap().filter_report.as_ref().unwrap().verdict, Verdict::Kept);
    }
}
