//! Programmatic analysis summary over programming filter reports.
//!
//! The rows chain: runnable is counted among exercises with a solution,
//! passing among exercises with tests, and coverage among passing suites
//! whose coverage could be computed.

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::code::{COVERAGE, HAS_SOLUTION, HAS_TESTS, RUNNABLE, TESTS_PASS};
use crate::model::{ExerciseKind, FilterReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    /// A count for every row except the mean coverage row, where it is the
    /// sum of coverage fractions.
    #[serde(serialize_with = "integral_as_int")]
    pub numerator: f64,
    pub denominator: u64,
    pub percentage: Option<f64>,
}

fn integral_as_int<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        s.serialize_i64(*v as i64)
    } else {
        s.serialize_f64(*v)
    }
}

/// `100 * numerator / denominator` rounded half-up to one decimal.
pub fn percentage(numerator: f64, denominator: u64) -> Option<f64> {
    if denominator == 0 {
        return None;
    }
    let tenths = if numerator.fract() == 0.0 && numerator >= 0.0 {
        let n = numerator as u128;
        let d = denominator as u128;
        ((2000 * n + d) / (2 * d)) as f64
    } else {
        (1000.0 * numerator / denominator as f64 + 0.5 + 1e-9).floor()
    };
    Some(tenths / 10.0)
}

impl Metric {
    fn new(name: &str, numerator: f64, denominator: u64) -> Self {
        Metric { name: name.to_string(), numerator, denominator, percentage: percentage(numerator, denominator) }
    }

    /// `"97.8% 133/136"`, or `"n/a 0/0"` without a denominator.
    pub fn display(&self) -> String {
        let pct = self.percentage.map_or_else(|| "n/a".to_string(), |p| format!("{p:.1}%"));
        let num = if self.numerator.fract() == 0.0 {
            format!("{}", self.numerator as i64)
        } else {
            format!("{:.3}", self.numerator)
        };
        format!("{pct} {num}/{}", self.denominator)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub total: u64,
    pub metrics: Vec<Metric>,
}

pub const HAS_SOLUTION_ROW: &str = "has_solution";
pub const RUNNABLE_ROW: &str = "runnable";
pub const HAS_TESTS_ROW: &str = "has_tests";
pub const TESTS_PASS_ROW: &str = "tests_pass";
pub const FULL_COVERAGE_ROW: &str = "full_coverage";
pub const MEAN_COVERAGE_ROW: &str = "mean_coverage_over_passing";

impl AnalysisSummary {
    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

impl fmt::Display for AnalysisSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28} {:>7}  {:>9}", "metric", "percent", "n / N")?;
        for m in &self.metrics {
            let pct = m.percentage.map_or_else(|| "n/a".to_string(), |p| format!("{p:.1}%"));
            let num = if m.numerator.fract() == 0.0 {
                format!("{}", m.numerator as i64)
            } else {
                format!("{:.3}", m.numerator)
            };
            writeln!(f, "{:<28} {:>7}  {:>9}", m.name, pct, format!("{num} / {}", m.denominator))?;
        }
        Ok(())
    }
}

/// Summarizes the programming reports among `reports`; others are ignored.
pub fn summarize<'a>(reports: impl IntoIterator<Item = &'a FilterReport>) -> AnalysisSummary {
    let mut total = 0u64;
    let (mut with_solution, mut runnable, mut with_tests, mut passing) = (0u64, 0u64, 0u64, 0u64);
    let mut coverages: Vec<f64> = Vec::new();

    for r in reports.into_iter().filter(|r| r.kind == ExerciseKind::Programming) {
        total += 1;
        let solution = r.passed(HAS_SOLUTION);
        let tests = r.passed(HAS_TESTS);
        with_solution += solution as u64;
        with_tests += tests as u64;
        runnable += (solution && r.passed(RUNNABLE)) as u64;
        let passed = tests && r.passed(TESTS_PASS);
        passing += passed as u64;
        if let Some(c) = r.check(COVERAGE).filter(|_| passed).and_then(|c| c.numeric) {
            coverages.push(c);
        }
    }
    // Summing in sorted order makes the result independent of input order.
    coverages.sort_by(f64::total_cmp);
    let computable = coverages.len() as u64;
    let full = coverages.iter().filter(|&&c| c >= 1.0).count() as u64;
    let coverage_sum: f64 = coverages.iter().sum();

    AnalysisSummary {
        total,
        metrics: vec![
            Metric::new(HAS_SOLUTION_ROW, with_solution as f64, total),
            Metric::new(RUNNABLE_ROW, runnable as f64, with_solution),
            Metric::new(HAS_TESTS_ROW, with_tests as f64, total),
            Metric::new(TESTS_PASS_ROW, passing as f64, with_tests),
            Metric::new(FULL_COVERAGE_ROW, full as f64, computable),
            Metric::new(MEAN_COVERAGE_ROW, coverage_sum, computable),
        ],
    }
}
