//! Splits raw completions into exercise sections.
//!
//! The completion continues a prompt that ends in `--Problem statement--`,
//! so everything before the first recognized marker is the statement.
//! Markers must sit alone on a line (surrounding whitespace allowed) and
//! match exactly. A line starting with `"""Exercise` ends the exercise;
//! it and everything after it go to `unparsed_tail`.

use serde::{Deserialize, Serialize};

use crate::model::{ExerciseKind, GeneratedExercise, GenerationJob, RawCompletion, Section};
use crate::prompt::{ANSWER_MARKER, SOLUTION_MARKER, STOP_SEQUENCE, TESTS_MARKER};

fn markers(kind: ExerciseKind) -> &'static [(&'static str, Section)] {
    match kind {
        ExerciseKind::Programming => &[(SOLUTION_MARKER, Section::Solution), (TESTS_MARKER, Section::Tests)],
        ExerciseKind::Math => &[(ANSWER_MARKER, Section::Solution)],
    }
}

fn match_marker(line: &str, kind: ExerciseKind) -> Option<Section> {
    let trimmed = line.trim();
    markers(kind).iter().find(|(m, _)| *m == trimmed).map(|(_, s)| *s)
}

/// Drops leading and trailing whitespace-only lines; interior bytes are kept.
fn trim_blank_lines(lines: &[&str]) -> String {
    let start = lines.iter().position(|l| !l.trim().is_empty());
    let end = lines.iter().rposition(|l| !l.trim().is_empty());
    match (start, end) {
        (Some(s), Some(e)) => lines[s..=e].join("\n"),
        _ => String::new(),
    }
}

struct Chunk<'a> {
    marker: Option<(Section, &'a str)>,
    body: Vec<&'a str>,
}

pub fn parse_completion(raw: &RawCompletion, job: &GenerationJob) -> GeneratedExercise {
    parse_text(&raw.text, &raw.job_key, job.kind)
}

/// Parses completion text for an exercise of `kind`. Total over all inputs.
pub fn parse_text(text: &str, job_key: &str, kind: ExerciseKind) -> GeneratedExercise {
    let all_lines: Vec<&str> = text.split('\n').collect();
    let end = all_lines
        .iter()
        .position(|l| l.trim_start().starts_with(&format!("{STOP_SEQUENCE}Exercise")))
        .unwrap_or(all_lines.len());
    let (lines, rest) = all_lines.split_at(end);

    let mut chunks = vec![Chunk { marker: None, body: Vec::new() }];
    for line in lines {
        match match_marker(line, kind) {
            Some(section) => chunks.push(Chunk { marker: Some((section, line)), body: Vec::new() }),
            None => chunks.last_mut().expect("at least one chunk").body.push(line),
        }
    }

    let mut exercise = GeneratedExercise {
        id: job_key.to_string(),
        job_key: job_key.to_string(),
        kind,
        statement: None,
        solution: None,
        tests: None,
        unparsed_tail: None,
    };
    let mut tail: Vec<String> = Vec::new();

    for chunk in chunks {
        match chunk.marker {
            None => {
                let statement = trim_blank_lines(&chunk.body);
                if !statement.is_empty() {
                    exercise.statement = Some(statement);
                }
            }
            Some((section, line)) => {
                if exercise.section(section).is_some() {
                    let mut dup = vec![line];
                    dup.extend(chunk.body);
                    tail.push(dup.join("\n"));
                } else {
                    exercise.set_section(section, trim_blank_lines(&chunk.body));
                }
            }
        }
    }
    if !rest.is_empty() {
        tail.push(rest.join("\n"));
    }
    if !tail.is_empty() {
        exercise.unparsed_tail = Some(tail.join("\n"));
    }
    exercise
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionPresence {
    pub has_statement: bool,
    pub has_solution: bool,
    pub has_tests: bool,
}

pub fn section_presence(ex: &GeneratedExercise) -> SectionPresence {
    SectionPresence {
        has_statement: ex.statement.as_deref().is_some_and(|s| !s.trim().is_empty()),
        has_solution: ex.solution.is_some(),
        has_tests: ex.tests.is_some(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, kind: ExerciseKind) -> GeneratedExercise {
        parse_text(text, "job", kind)
    }

    #[test]
    fn empty_text_yields_nothing() {
        let ex = parse("", ExerciseKind::Programming);
        assert_eq!(ex.statement, None);
        assert_eq!(ex.solution, None);
        assert_eq!(ex.tests, None);
        assert_eq!(
            section_presence(&ex),
            SectionPresence { has_statement: false, has_solution: false, has_tests: false }
        );
    }

    #[test]
    fn tests_without_solution() {
        let ex = parse("Do a thing.\n--Tests--\nassert True\n", ExerciseKind::Programming);
        let p = section_presence(&ex);
        assert!(p.has_statement && !p.has_solution && p.has_tests);
        assert_eq!(ex.tests.as_deref(), Some("assert True"));
    }

    #[test]
    fn markers_tolerate_surrounding_whitespace_but_not_case() {
        let ex = parse("S\n  --Sample solution--  \nx = 1\n--tests--\ny", ExerciseKind::Programming);
        assert_eq!(ex.solution.as_deref(), Some("x = 1\n--tests--\ny"));
        assert_eq!(ex.tests, None);
    }

    #[test]
    fn blank_lines_are_trimmed_interior_kept() {
        let ex = parse("\n\nS\n--Sample solution--\n\n  a\n\n  b  \n\n--Tests--\nt", ExerciseKind::Programming);
        assert_eq!(ex.statement.as_deref(), Some("S"));
        assert_eq!(ex.solution.as_deref(), Some("  a\n\n  b  "));
    }

    #[test]
    fn duplicate_marker_goes_to_tail() {
        let text = "S\n--Sample solution--\nfirst\n--Sample solution--\nsecond\n--Tests--\nt";
        let ex = parse(text, ExerciseKind::Programming);
        assert_eq!(ex.solution.as_deref(), Some("first"));
        assert_eq!(ex.tests.as_deref(), Some("t"));
        assert_eq!(ex.unparsed_tail.as_deref(), Some("--Sample solution--\nsecond"));
    }

    #[test]
    fn sections_in_any_order() {
        let ex = parse("S\n--Tests--\nt\n--Sample solution--\ns", ExerciseKind::Programming);
        assert_eq!(ex.tests.as_deref(), Some("t"));
        assert_eq!(ex.solution.as_deref(), Some("s"));
    }

    #[test]
    fn next_exercise_header_ends_parsing() {
        let ex = parse("S\n--Answer--\n1 + 1 = 2\n\"\"\"Exercise 3\n--Answer--\nx", ExerciseKind::Math);
        assert_eq!(ex.solution.as_deref(), Some("1 + 1 = 2"));
        assert_eq!(ex.unparsed_tail.as_deref(), Some("\"\"\"Exercise 3\n--Answer--\nx"));
    }

    #[test]
    fn math_ignores_programming_markers() {
        let ex = parse("S\n--Tests--\nx\n--Answer--\n1 = 1", ExerciseKind::Math);
        assert_eq!(ex.tests, None);
        assert_eq!(ex.statement.as_deref(), Some("S\n--Tests--\nx"));
        assert_eq!(ex.solution.as_deref(), Some("1 = 1"));
    }

    #[test]
    fn empty_marker_section_is_present() {
        let ex = parse("S\n--Sample solution--\n\n--Tests--\nt", ExerciseKind::Programming);
        assert_eq!(ex.solution.as_deref(), Some(""));
        assert!(section_presence(&ex).has_solution);
    }

    fn section_text() -> impl Strategy<Value = String> {
        // Lines that are neither blank at the edges nor marker/header lines.
        proptest::collection::vec("[a-z(=][a-z0-9 ()=:'\\-]{0,12}", 1..5).prop_map(|l| l.join("\n"))
    }

    proptest! {
        #[test]
        fn reassembly_is_a_fixpoint(s in section_text(), sol in section_text(), t in section_text()) {
            let text = format!("{s}\n{SOLUTION_MARKER}\n{sol}\n{TESTS_MARKER}\n{t}");
            let ex = parse(&text, ExerciseKind::Programming);
            prop_assert_eq!(ex.statement.as_deref(), Some(s.as_str()));
            prop_assert_eq!(ex.solution.as_deref(), Some(sol.as_str()));
            prop_assert_eq!(ex.tests.as_deref(), Some(t.as_str()));
            let again = format!(
                "{}\n{SOLUTION_MARKER}\n{}\n{TESTS_MARKER}\n{}",
                ex.statement.as_deref().unwrap(),
                ex.solution.as_deref().unwrap(),
                ex.tests.as_deref().unwrap()
            );
            prop_assert_eq!(parse(&again, ExerciseKind::Programming), ex);
        }

        #[test]
        fn deleting_a_marker_only_clears_its_section(
            s in section_text(), sol in section_text(), t in section_text(), drop_tests in any::<bool>()
        ) {
            let full = format!("{s}\n{SOLUTION_MARKER}\n{sol}\n{TESTS_MARKER}\n{t}");
            let before = parse(&full, ExerciseKind::Programming);
            let removed = if drop_tests { TESTS_MARKER } else { SOLUTION_MARKER };
            let reduced: Vec<&str> = full.split('\n').filter(|l| *l != removed).collect();
            let after = parse(&reduced.join("\n"), ExerciseKind::Programming);
            let (pb, pa) = (section_presence(&before), section_presence(&after));
            if drop_tests {
                prop_assert!(!pa.has_tests);
                prop_assert_eq!(pa.has_solution, pb.has_solution);
                prop_assert_eq!(after.statement, before.statement);
            } else {
                prop_assert!(!pa.has_solution);
                prop_assert_eq!(pa.has_tests, pb.has_tests);
                prop_assert_eq!(after.tests, before.tests);
            }
            prop_assert_eq!(pa.has_statement, pb.has_statement);
        }
    }
}
