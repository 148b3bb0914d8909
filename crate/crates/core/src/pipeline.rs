//! Composition of the per-kind filters with the novelty check.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::code::{validate_code, CodeFilterConfig};
use crate::error::RunnerError;
use crate::math::{filter_math, MathFilterConfig};
use crate::model::{CheckResult, ExerciseKind, FilterReport, GeneratedExercise, PrimingExercise};
use crate::novelty::{check_novelty, Corpus, CorpusEntry, NoveltyConfig, NOVELTY};
use crate::runner::RunnerBackend;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub math: MathFilterConfig,
    pub code: CodeFilterConfig,
    /// `None` turns the novelty check off.
    pub novelty: Option<NoveltyConfig>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            math: MathFilterConfig::default(),
            code: CodeFilterConfig::default(),
            novelty: Some(NoveltyConfig::default()),
        }
    }
}

/// A novelty corpus made of the priming statements plus `extra` entries.
pub fn reference_corpus<'a>(
    primings: impl IntoIterator<Item = &'a PrimingExercise>,
    extra: &[CorpusEntry],
) -> Corpus {
    let primings = primings.into_iter().map(|p| (format!("priming:{}", p.id), p.statement.clone()));
    let extra = extra.iter().map(|e| (e.id.clone(), e.statement.clone()));
    Corpus::new(primings.chain(extra))
}

/// Reads `{"id", "statement"}` objects, one per line.
pub fn load_corpus_entries(path: &Path) -> std::io::Result<Vec<CorpusEntry>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}

pub struct FilterPipeline {
    config: FilterConfig,
    corpus: Corpus,
    runner: Option<Arc<dyn RunnerBackend>>,
}

impl FilterPipeline {
    /// `runner` may be omitted when only math exercises are filtered.
    pub fn new(config: FilterConfig, corpus: Corpus, runner: Option<Arc<dyn RunnerBackend>>) -> Self {
        FilterPipeline { config, corpus, runner }
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    /// Filters one exercise. `concepts` is the concept set it was generated for.
    pub fn filter(&self, exercise: &GeneratedExercise, concepts: &[String]) -> Result<FilterReport, RunnerError> {
        let mut report = match exercise.kind {
            ExerciseKind::Math => filter_math(exercise, concepts, &self.config.math),
            ExerciseKind::Programming => {
                let runner = self
                    .runner
                    .as_deref()
                    .ok_or_else(|| RunnerError::RunnerFailure("no runner configured".into()))?;
                validate_code(exercise, concepts, runner, &self.config.code)?
            }
        };
        if let Some(novelty) = self.config.novelty {
            let check = match exercise.statement.as_deref() {
                Some(statement) => check_novelty(statement, &self.corpus, novelty).to_check(),
                None => CheckResult::skip(NOVELTY, "statement").advisory(true),
            };
            report.push_check(check);
        }
        Ok(report)
    }
}
