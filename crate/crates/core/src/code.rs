//! Programming exercise filters: the solution must run, its tests must pass,
//! and the tests must cover enough of the solution.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::RunnerError;
use crate::math::concept_checks;
use crate::model::{CheckResult, ExerciseKind, FilterReport, GeneratedExercise};
use crate::runner::{run_checked, RunnerBackend, RunnerRequest, RunnerResponse, DEFAULT_TIMEOUT_MS};

pub const HAS_SOLUTION: &str = "has_solution";
pub const RUNNABLE: &str = "runnable";
pub const HAS_TESTS: &str = "has_tests";
pub const TESTS_PASS: &str = "tests_pass";
pub const COVERAGE: &str = "coverage";

pub const PROGRAMMING_CONCEPTS: &[&str] =
    &["function", "parameters", "dictionary", "arithmetics", "class", "list", "conditional"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodeFilterConfig {
    pub coverage_threshold: f64,
    pub require_runnable: bool,
    pub require_tests_pass: bool,
    pub require_coverage: bool,
    pub timeout_ms: u64,
    pub analyze_concepts: bool,
}

impl Default for CodeFilterConfig {
    fn default() -> Self {
        CodeFilterConfig {
            coverage_threshold: 1.0,
            require_runnable: true,
            require_tests_pass: true,
            require_coverage: true,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            analyze_concepts: true,
        }
    }
}

/// Runs the programming filters over one exercise.
///
/// Checks run in a fixed order and a check whose prerequisite failed is
/// recorded as skipped. `concepts` is the concept set the exercise targeted;
/// concept checks are advisory.
pub fn validate_code(
    exercise: &GeneratedExercise,
    concepts: &[String],
    runner: &dyn RunnerBackend,
    config: &CodeFilterConfig,
) -> Result<FilterReport, RunnerError> {
    debug_assert_eq!(exercise.kind, ExerciseKind::Programming);
    let mut checks = Vec::new();

    let has_solution = exercise.solution.is_some();
    let has_tests = exercise.tests.is_some();
    checks.push(if has_solution {
        CheckResult::pass(HAS_SOLUTION, "sample solution present")
    } else {
        CheckResult::fail(HAS_SOLUTION, "no --Sample solution-- section")
    });

    let response = match &exercise.solution {
        Some(solution) => Some(run_checked(
            runner,
            &RunnerRequest {
                request_id: exercise.id.clone(),
                solution_code: solution.clone(),
                test_code: exercise.tests.clone(),
                timeout_ms: config.timeout_ms,
                analyze_concepts: config.analyze_concepts,
            },
        )?),
        None => None,
    };

    let runnable = response.as_ref().map(|r| r.solution_runnable);
    checks.push(match &response {
        None => CheckResult::skip(RUNNABLE, HAS_SOLUTION),
        Some(r) if r.solution_runnable => CheckResult::pass(RUNNABLE, "solution executed without errors"),
        Some(r) => CheckResult::fail(RUNNABLE, describe_run_failure(r)),
    }
    .advisory(!config.require_runnable));

    checks.push(if has_tests {
        CheckResult::pass(HAS_TESTS, "tests present")
    } else {
        CheckResult::fail(HAS_TESTS, "no --Tests-- section")
    });

    let tests_blocker = if !has_solution {
        Some(HAS_SOLUTION)
    } else if !has_tests {
        Some(HAS_TESTS)
    } else if config.require_runnable && runnable == Some(false) {
        Some(RUNNABLE)
    } else {
        None
    };
    let tests_pass = match (tests_blocker, &response) {
        (Some(blocker), _) => CheckResult::skip(TESTS_PASS, blocker),
        (None, Some(r)) => tests_outcome(r),
        (None, None) => unreachable!("solution present implies a runner response"),
    }
    .advisory(!config.require_tests_pass);
    let tests_evaluated = !tests_pass.skipped;
    let tests_passed = tests_pass.passed;
    checks.push(tests_pass);

    checks.push(
        match &response {
            _ if !tests_evaluated => CheckResult::skip(COVERAGE, TESTS_PASS),
            _ if !tests_passed => CheckResult::skip(COVERAGE, TESTS_PASS),
            Some(r) => match r.coverage_fraction {
                Some(c) => CheckResult::outcome(
                    COVERAGE,
                    c >= config.coverage_threshold,
                    format!(
                        "statement coverage {:.1}% ({} of {} lines), threshold {:.1}%",
                        c * 100.0,
                        r.executed_lines.len(),
                        r.executable_lines.len(),
                        config.coverage_threshold * 100.0
                    ),
                )
                .with_numeric(c),
                None => CheckResult::fail(COVERAGE, "coverage not computable: no executable lines"),
            },
            None => CheckResult::skip(COVERAGE, HAS_SOLUTION),
        }
        .advisory(!config.require_coverage),
    );

    if let Some(r) = response.as_ref().filter(|_| config.analyze_concepts) {
        if let Ok((all, any)) = detect_programming_concepts(r, concepts) {
            checks.push(all.advisory(true));
            checks.push(any.advisory(true));
        }
    }

    let mut reasons: Vec<String> = Vec::new();
    for c in &checks {
        let reason = if c.is_blocking_failure() {
            Some(c.name.as_str())
        } else if c.skipped && !c.advisory {
            blocked_by(&checks, c)
        } else {
            None
        };
        if let Some(name) = reason {
            if !reasons.iter().any(|r| r == name) {
                reasons.push(name.to_string());
            }
        }
    }

    let canary = config.require_tests_pass
        && runnable == Some(true)
        && has_tests
        && tests_evaluated
        && !tests_passed;
    Ok(FilterReport::new(&exercise.id, ExerciseKind::Programming, checks, reasons, canary))
}

/// The failed check that caused `skipped` to be skipped.
fn blocked_by<'a>(checks: &'a [CheckResult], skipped: &CheckResult) -> Option<&'a str> {
    let name = skipped.evidence.strip_prefix("skipped: requires ")?;
    let prereq = checks.iter().find(|c| c.name == name)?;
    if prereq.skipped {
        blocked_by(checks, prereq)
    } else {
        Some(prereq.name.as_str())
    }
}

fn describe_run_failure(r: &RunnerResponse) -> String {
    if r.timed_out {
        "solution timed out".to_string()
    } else {
        format!("solution raised: {}", r.solution_error.as_deref().unwrap_or("unknown error"))
    }
}

fn tests_outcome(r: &RunnerResponse) -> CheckResult {
    if let Some(err) = &r.test_error {
        return CheckResult::fail(TESTS_PASS, format!("test run failed: {err}"));
    }
    if r.timed_out {
        return CheckResult::fail(TESTS_PASS, "tests timed out");
    }
    if r.tests_collected == 0 {
        return CheckResult::fail(TESTS_PASS, "no tests collected");
    }
    let evidence = format!("{} of {} tests passed", r.tests_passed, r.tests_collected);
    CheckResult::outcome(TESTS_PASS, r.tests_failed == 0, evidence)
}

/// Matches a concept set against the runner's syntax-tree analysis.
pub fn detect_programming_concepts(
    response: &RunnerResponse,
    concepts: &[String],
) -> Result<(CheckResult, CheckResult), RunnerError> {
    if response.concepts.is_empty() && !concepts.is_empty() {
        return Err(RunnerError::MissingConceptAnalysis);
    }
    let observed: BTreeSet<String> =
        response.concepts.iter().filter(|(_, present)| **present).map(|(c, _)| c.clone()).collect();
    Ok(concept_checks(concepts, &observed))
}
