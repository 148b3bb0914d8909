//! Infix arithmetic checks for math exercises.
//!
//! Answers are lines of the form `<expression> = <number>`. The expression
//! language is the four operators, parentheses and unary minus over decimal
//! literals; a currency sign directly in front of a number is ignored.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CheckResult, ExerciseKind, FilterReport, GeneratedExercise};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number { value: f64, lexeme: String },
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Paren(Box<Expr>),
}

impl Expr {
    pub fn number(lexeme: &str) -> Expr {
        Expr::Number { value: lexeme.parse().expect("numeric lexeme"), lexeme: lexeme.to_string() }
    }

    /// Visits every node, parents before children.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Number { .. } => {}
            Expr::Neg(c) | Expr::Paren(c) => c.walk(f),
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.walk(f);
                r.walk(f);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number { lexeme, .. } => f.write_str(lexeme),
            Expr::Neg(c) => write!(f, "-{c}"),
            Expr::Add(l, r) => write!(f, "{l} + {r}"),
            Expr::Sub(l, r) => write!(f, "{l} - {r}"),
            Expr::Mul(l, r) => write!(f, "{l} * {r}"),
            Expr::Div(l, r) => write!(f, "{l} / {r}"),
            Expr::Paren(c) => write!(f, "({c})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {position}: expected {expected}")]
pub struct ParseError {
    pub position: usize,
    pub expected: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
}

const CURRENCY: &[char] = &['$', '€', '£'];

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.peek_char() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.peek_char()
    }

    fn bump(&mut self) {
        if let Some(c) = self.peek_char() {
            self.pos += c.len_utf8();
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some('-') => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some('/') => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some('(') => {
                self.bump();
                let inner = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(ParseError { position: self.pos, expected: "')'" });
                }
                self.bump();
                Ok(Expr::Paren(Box::new(inner)))
            }
            Some('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(c) if CURRENCY.contains(&c) => {
                self.bump();
                match self.peek_char() {
                    Some(d) if d.is_ascii_digit() => self.number(),
                    _ => Err(ParseError { position: self.pos, expected: "number after currency sign" }),
                }
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            _ => Err(ParseError { position: self.pos, expected: "number, '(' or '-'" }),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        match scan_number(self.src, self.pos) {
            Some(end) => {
                let lexeme = &self.src[self.pos..end];
                self.pos = end;
                Ok(Expr::number(lexeme))
            }
            None => Err(ParseError { position: self.pos, expected: "number" }),
        }
    }
}

/// End of the `[0-9]+(\.[0-9]+)?` match starting at `start`, if any.
fn scan_number(src: &str, start: usize) -> Option<usize> {
    let bytes = src.as_bytes();
    let mut i = start;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i == start {
        return None;
    }
    if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    Some(i)
}

pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    let expr = p.expr()?;
    if p.peek().is_some() {
        return Err(ParseError { position: p.pos, expected: "operator or end of input" });
    }
    Ok(expr)
}

const ZERO_DIVISOR: f64 = 1e-12;

pub fn eval(expr: &Expr) -> Result<f64, EvalError> {
    Ok(match expr {
        Expr::Number { value, .. } => *value,
        Expr::Neg(c) => -eval(c)?,
        Expr::Paren(c) => eval(c)?,
        Expr::Add(l, r) => eval(l)? + eval(r)?,
        Expr::Sub(l, r) => eval(l)? - eval(r)?,
        Expr::Mul(l, r) => eval(l)? * eval(r)?,
        Expr::Div(l, r) => {
            let divisor = eval(r)?;
            if divisor.abs() <= ZERO_DIVISOR {
                return Err(EvalError::DivisionByZero);
            }
            eval(l)? / divisor
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerLine {
    pub lhs: Expr,
    pub rhs_value: f64,
    pub rhs_lexeme: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnswerExtraction {
    pub lines: Vec<AnswerLine>,
    /// One entry per line that contained `=` but did not parse.
    pub skipped: Vec<String>,
}

/// Parses the right-hand side: optional sign and currency, one number, then
/// anything that is not a further number (unit words, punctuation).
fn parse_rhs(rhs: &str) -> Option<f64> {
    let s = rhs.trim();
    let (negative, s) = match s.strip_prefix('-') {
        Some(rest) => (true, rest.trim_start()),
        None => (false, s),
    };
    let s = s.strip_prefix(CURRENCY).unwrap_or(s);
    let end = scan_number(s, 0)?;
    let rest = &s[end..];
    if rest.starts_with(|c: char| c.is_alphanumeric())
        || rest.contains(|c: char| c.is_ascii_digit())
    {
        return None;
    }
    let value: f64 = s[..end].parse().ok()?;
    Some(if negative { -value } else { value })
}

pub fn extract_answer_lines(answer: &str) -> AnswerExtraction {
    let mut out = AnswerExtraction::default();
    for (idx, line) in answer.lines().enumerate() {
        let Some(split) = line.rfind('=') else { continue };
        let (lhs_text, rhs_text) = (&line[..split], &line[split + 1..]);
        let lhs = match parse_expression(lhs_text) {
            Ok(e) => e,
            Err(e) => {
                out.skipped.push(format!("line {}: `{}`: left side: {e}", idx + 1, line.trim()));
                continue;
            }
        };
        match parse_rhs(rhs_text) {
            Some(rhs_value) => out.lines.push(AnswerLine {
                lhs,
                rhs_value,
                rhs_lexeme: rhs_text.trim().to_string(),
                raw: line.to_string(),
            }),
            None => out
                .skipped
                .push(format!("line {}: `{}`: right side is not a single number", idx + 1, line.trim())),
        }
    }
    out
}

pub const ANSWER_CONSISTENCY: &str = "answer_consistency";
pub const NUMBER_COVERAGE: &str = "number_coverage";
pub const STRUCTURE: &str = "structure";
pub const CONCEPTS_ALL: &str = "concepts_all";
pub const CONCEPTS_ANY: &str = "concepts_any";

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

pub fn check_answer_consistency(answer: &str) -> CheckResult {
    let extraction = extract_answer_lines(answer);
    if extraction.lines.is_empty() {
        let mut evidence = "no parseable equation in answer".to_string();
        for s in &extraction.skipped {
            evidence.push_str("; ");
            evidence.push_str(s);
        }
        return CheckResult::fail(ANSWER_CONSISTENCY, evidence);
    }

    let mut max_discrepancy: f64 = 0.0;
    let mut problems = Vec::new();
    for line in &extraction.lines {
        match eval(&line.lhs) {
            Ok(value) => {
                let diff = (value - line.rhs_value).abs();
                max_discrepancy = max_discrepancy.max(diff);
                let tolerance = 1e-6 * line.rhs_value.abs().max(1.0);
                if diff > tolerance {
                    problems.push(format!(
                        "`{}`: expected {}, got {}",
                        line.raw.trim(),
                        fmt_num(value),
                        fmt_num(line.rhs_value)
                    ));
                }
            }
            Err(e) => {
                max_discrepancy = f64::INFINITY;
                problems.push(format!("`{}`: {e}", line.raw.trim()));
            }
        }
    }

    let check = if problems.is_empty() {
        CheckResult::pass(
            ANSWER_CONSISTENCY,
            format!("{} equation(s) add up", extraction.lines.len()),
        )
    } else {
        CheckResult::fail(ANSWER_CONSISTENCY, problems.join("; "))
    };
    check.with_numeric(max_discrepancy)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Numeric literals with their lexemes, skipping digits glued to words.
fn number_lexemes(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let end = scan_number(text, i).expect("digit start");
        let before = text[..i].chars().next_back();
        let after = text[end..].chars().next();
        if !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char) {
            out.push(&text[i..end]);
        }
        i = end;
    }
    out
}

/// Every standalone number in `text`, in order of appearance.
pub fn extract_numbers(text: &str) -> Vec<f64> {
    number_lexemes(text).into_iter().map(|l| l.parse().expect("numeric lexeme")).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageDirection {
    /// Every number of the statement appears in the answer.
    #[default]
    StatementInAnswer,
    /// Every number of the answer appears in the statement.
    AnswerInStatement,
}

fn distinct(values: Vec<f64>) -> Vec<f64> {
    let mut v = values;
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub fn check_number_coverage(statement: &str, answer: &str, direction: CoverageDirection) -> CheckResult {
    let (from, to, from_name, to_name) = match direction {
        CoverageDirection::StatementInAnswer => (statement, answer, "statement", "answer"),
        CoverageDirection::AnswerInStatement => (answer, statement, "answer", "statement"),
    };
    let required = distinct(extract_numbers(from));
    let available = extract_numbers(to);
    let missing: Vec<String> = required
        .iter()
        .filter(|n| !available.contains(n))
        .map(|n| fmt_num(*n))
        .collect();
    let covered = (required.len() - missing.len()) as f64;
    let fraction = if required.is_empty() { 1.0 } else { covered / required.len() as f64 };
    let check = if missing.is_empty() {
        CheckResult::pass(
            NUMBER_COVERAGE,
            format!("all {} {from_name} number(s) appear in the {to_name}", required.len()),
        )
    } else {
        CheckResult::fail(
            NUMBER_COVERAGE,
            format!("{from_name} number(s) missing from the {to_name}: {}", missing.join(", ")),
        )
    };
    check.with_numeric(fraction)
}

pub const MATH_CONCEPTS: &[&str] =
    &["sum", "subtraction", "multiplication", "division", "decimal", "conditional"];

fn contains_word(text: &str, word: &str) -> bool {
    text.split(|c: char| !is_word_char(c)).any(|w| w.eq_ignore_ascii_case(word))
}

/// Concepts observable in the answer equations and statement.
pub fn observed_math_concepts(answer: &str, statement: &str) -> BTreeSet<&'static str> {
    let mut found = BTreeSet::new();
    for line in extract_answer_lines(answer).lines {
        line.lhs.walk(&mut |node| match node {
            Expr::Add(..) => {
                found.insert("sum");
            }
            Expr::Sub(..) | Expr::Neg(..) => {
                found.insert("subtraction");
            }
            Expr::Mul(..) => {
                found.insert("multiplication");
            }
            Expr::Div(..) => {
                found.insert("division");
            }
            _ => {}
        });
    }
    if number_lexemes(answer).iter().chain(number_lexemes(statement).iter()).any(|l| l.contains('.')) {
        found.insert("decimal");
    }
    if contains_word(statement, "if") {
        found.insert("conditional");
    }
    found
}

/// Builds the (all, any) concept checks from the set of observed concepts.
pub(crate) fn concept_checks(concepts: &[String], observed: &BTreeSet<String>) -> (CheckResult, CheckResult) {
    let matched: Vec<&str> =
        concepts.iter().filter(|c| observed.contains(c.as_str())).map(String::as_str).collect();
    let missing: Vec<&str> =
        concepts.iter().filter(|c| !observed.contains(c.as_str())).map(String::as_str).collect();
    let evidence = format!("matched [{}]; missing [{}]", matched.join(", "), missing.join(", "));
    let all = missing.is_empty();
    let any = concepts.is_empty() || !matched.is_empty();
    let fraction = if concepts.is_empty() { 1.0 } else { matched.len() as f64 / concepts.len() as f64 };
    (
        CheckResult::outcome(CONCEPTS_ALL, all, evidence.clone()).with_numeric(fraction),
        CheckResult::outcome(CONCEPTS_ANY, any, evidence).with_numeric(fraction),
    )
}

pub fn detect_math_concepts(answer: &str, statement: &str, concepts: &[String]) -> (CheckResult, CheckResult) {
    let observed = observed_math_concepts(answer, statement).into_iter().map(str::to_string).collect();
    concept_checks(concepts, &observed)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptPolicy {
    /// Concept checks are recorded but never reject.
    #[default]
    Off,
    Any,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MathFilterConfig {
    pub answer_consistency: bool,
    /// `None` disables the number coverage filter.
    pub number_coverage: Option<CoverageDirection>,
    pub concept_policy: ConceptPolicy,
}

impl Default for MathFilterConfig {
    fn default() -> Self {
        MathFilterConfig {
            answer_consistency: true,
            number_coverage: Some(CoverageDirection::StatementInAnswer),
            concept_policy: ConceptPolicy::Off,
        }
    }
}

/// Runs the math filters over one exercise. `concepts` is the concept set
/// the exercise was generated for.
pub fn filter_math(exercise: &GeneratedExercise, concepts: &[String], config: &MathFilterConfig) -> FilterReport {
    debug_assert_eq!(exercise.kind, ExerciseKind::Math);
    let statement = exercise.statement.as_deref().filter(|s| !s.trim().is_empty());
    let answer = exercise.solution.as_deref().filter(|s| !s.trim().is_empty());

    let names = [ANSWER_CONSISTENCY, NUMBER_COVERAGE, CONCEPTS_ALL, CONCEPTS_ANY];
    let (statement, answer) = match (statement, answer) {
        (Some(s), Some(a)) => (s, a),
        (s, a) => {
            let mut missing = Vec::new();
            if s.is_none() {
                missing.push("statement");
            }
            if a.is_none() {
                missing.push("answer");
            }
            let structure = CheckResult::fail(STRUCTURE, format!("missing {}", missing.join(" and ")));
            let checks = std::iter::once(structure).chain(names.iter().map(|n| CheckResult::skip(*n, STRUCTURE)));
            return FilterReport::new(&exercise.id, ExerciseKind::Math, checks, vec![STRUCTURE.into()], false);
        }
    };

    let mut checks = vec![CheckResult::pass(STRUCTURE, "statement and answer present")];
    checks.push(check_answer_consistency(answer).advisory(!config.answer_consistency));
    let direction = config.number_coverage.unwrap_or_default();
    checks.push(check_number_coverage(statement, answer, direction).advisory(config.number_coverage.is_none()));
    let (all, any) = detect_math_concepts(answer, statement, concepts);
    checks.push(all.advisory(config.concept_policy != ConceptPolicy::All));
    checks.push(any.advisory(config.concept_policy != ConceptPolicy::Any));

    let reasons: Vec<String> =
        checks.iter().filter(|c| c.is_blocking_failure()).map(|c| c.name.clone()).collect();
    let canary = reasons == [ANSWER_CONSISTENCY];
    FilterReport::new(&exercise.id, ExerciseKind::Math, checks, reasons, canary)
}
