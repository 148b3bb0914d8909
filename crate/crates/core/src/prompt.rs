//! Prompt rendering and the generation grid.
//!
//! A prompt is one priming exercise followed by the opening of a second
//! exercise that carries only keywords. The model continues right after the
//! second `--Problem statement--` marker and stops at the next `"""`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, PromptError};
use crate::model::{ExerciseKind, GenerationJob, Keywords, PrimingExercise};

pub const STOP_SEQUENCE: &str = "\"\"\"";

pub const KEYWORDS_MARKER: &str = "--Keywords--";
pub const STATEMENT_MARKER: &str = "--Problem statement--";
pub const SOLUTION_MARKER: &str = "--Sample solution--";
pub const TESTS_MARKER: &str = "--Tests--";
pub const ANSWER_MARKER: &str = "--Answer--";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub stop_sequences: Vec<String>,
}

fn push_line(out: &mut String, line: &str) {
    out.push_str(line);
    out.push('\n');
}

fn push_block(out: &mut String, label: &str, keywords: &Keywords) {
    push_line(out, &format!("{STOP_SEQUENCE}{label}"));
    push_line(out, KEYWORDS_MARKER);
    for kw in keywords.lines() {
        push_line(out, kw);
    }
    push_line(out, STATEMENT_MARKER);
}

/// Renders `priming` followed by an open exercise for `target`.
///
/// Content is embedded verbatim; nothing is escaped.
pub fn build_prompt(priming: &PrimingExercise, target: &Keywords) -> Result<PromptText, PromptError> {
    let mut text = String::new();
    push_block(&mut text, "Exercise 1", &priming.keywords);
    push_line(&mut text, &priming.statement);
    match priming.kind {
        ExerciseKind::Programming => {
            let tests = priming
                .tests
                .as_deref()
                .ok_or_else(|| PromptError::MissingTests(priming.id.clone()))?;
            push_line(&mut text, SOLUTION_MARKER);
            push_line(&mut text, &priming.solution);
            push_line(&mut text, TESTS_MARKER);
            push_line(&mut text, tests);
        }
        ExerciseKind::Math => {
            push_line(&mut text, ANSWER_MARKER);
            push_line(&mut text, &priming.solution);
        }
    }
    push_block(&mut text, "Exercise 2", target);
    Ok(PromptText { text, stop_sequences: vec![STOP_SEQUENCE.to_string()] })
}

/// Axes of the generation grid. Jobs are produced by nested loops in field
/// order, repetitions innermost.
#[derive(Debug, Clone)]
pub struct GridSpec<'a> {
    pub primings: &'a [PrimingExercise],
    /// `None` leaves the theme out of the keywords.
    pub themes: &'a [Option<String>],
    /// An empty set leaves the concepts out.
    pub concept_sets: &'a [Vec<String>],
    pub temperatures: &'a [f64],
    pub repetitions: u32,
    pub max_tokens: u32,
    pub model_name: &'a str,
}

pub fn combination_grid(spec: &GridSpec<'_>) -> Result<Vec<GenerationJob>, ModelError> {
    let axes: [(&'static str, bool); 5] = [
        ("primings", spec.primings.is_empty()),
        ("themes", spec.themes.is_empty()),
        ("concept_sets", spec.concept_sets.is_empty()),
        ("temperatures", spec.temperatures.is_empty()),
        ("repetitions", spec.repetitions == 0),
    ];
    if let Some((name, _)) = axes.iter().find(|(_, empty)| *empty) {
        return Err(ModelError::EmptyGridAxis(name));
    }

    let mut jobs = Vec::with_capacity(
        spec.primings.len()
            * spec.themes.len()
            * spec.concept_sets.len()
            * spec.temperatures.len()
            * spec.repetitions as usize,
    );
    for priming in spec.primings {
        for theme in spec.themes {
            for concepts in spec.concept_sets {
                let keywords = Keywords::new(theme.as_deref(), concepts)?;
                for &temperature in spec.temperatures {
                    for rep in 0..spec.repetitions {
                        jobs.push(GenerationJob::new(
                            priming.id.clone(),
                            priming.kind,
                            keywords.clone(),
                            temperature,
                            spec.max_tokens,
                            rep,
                            spec.model_name,
                        )?);
                    }
                }
            }
        }
    }
    Ok(jobs)
}

/// Loads every `*.json` priming in `dir`, keyed by id.
pub fn load_primings(dir: &Path) -> Result<BTreeMap<String, PrimingExercise>, ModelError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| ModelError::InvalidPriming(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| ModelError::InvalidPriming(e.to_string()))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let raw = std::fs::read_to_string(&path)
            .map_err(|e| ModelError::InvalidPriming(format!("{}: {e}", path.display())))?;
        let priming: PrimingExercise = serde_json::from_str(&raw)
            .map_err(|e| ModelError::InvalidPriming(format!("{}: {e}", path.display())))?;
        if let Some(v) = priming.violations().into_iter().next() {
            return Err(ModelError::InvalidPriming(v));
        }
        out.insert(priming.id.clone(), priming);
    }
    Ok(out)
}
