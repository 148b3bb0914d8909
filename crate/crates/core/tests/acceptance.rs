//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robosource_core::code::{validate_code, CodeFilterConfig};
use robosource_core::config::GridConfig;
use robosource_core::curation::{
    rebuild, CurationStore, DecisionAction, EditInput, LabelInput, StatusFilter,
};
use robosource_core::generation::{Generator, ReplayBackend, VecSink};
use robosource_core::math::{eval, filter_math, parse_expression, ConceptPolicy, MathFilterConfig};
use robosource_core::novelty::{check_novelty, containment_similarity, normalize, Corpus, NoveltyConfig};
use robosource_core::parser::{parse_completion, parse_text, section_presence};
use robosource_core::pipeline::{reference_corpus, FilterConfig, FilterPipeline};
use robosource_core::prompt::{build_prompt, load_primings};
use robosource_core::report::summarize;
use robosource_core::runner::{RunnerResponse, ScriptedMockRunner};
use robosource_core::{
    CurationError, Decision, ExerciseKind, FilterReport, FinishReason, GeneratedExercise, GenerationJob, Keywords,
    LabelDimension, LabelValue, RawCompletion, Resolution, Section, Verdict,
};

type Outcome = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn read(rel: &str) -> String {
    std::fs::read_to_string(fixtures().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn within(limit: Duration, start: Instant, what: &str) -> Outcome {
    let took = start.elapsed();
    ensure!(took < limit, "{what} took {took:?}, limit {limit:?}");
    Ok(())
}

fn keywords(theme: &str, concepts: &[&str]) -> Keywords {
    Keywords::new(Some(theme), concepts).expect("valid keywords")
}

// 1. Prompt golden files.
fn prompt_goldens() -> Outcome {
    let start = Instant::now();
    let primings = load_primings(&fixtures().join("primings")).map_err(|e| e.to_string())?;
    let cases = [
        ("speeding", keywords("music", &["class", "list", "conditional"]), "speeding__music_class_list_conditional.txt"),
        ("currency", keywords("music", &["class", "list", "conditional"]), "currency__music_class_list_conditional.txt"),
        (
            "donuts",
            keywords("fishing", &["subtraction", "division", "decimal"]),
            "donuts__fishing_subtraction_division_decimal.txt",
        ),
    ];
    for (id, kw, golden) in cases {
        let prompt = build_prompt(&primings[id], &kw).map_err(|e| e.to_string())?;
        let expected = read(&format!("prompts/{golden}"));
        ensure!(prompt.text == expected, "{id}: prompt differs from {golden}");
        ensure!(prompt.stop_sequences == ["\"\"\""], "{id}: stop sequences {:?}", prompt.stop_sequences);
    }
    within(Duration::from_secs(1), start, "prompt goldens")
}

// 2. Expression evaluation against an independent oracle.
#[derive(Debug, Clone)]
enum Tree {
    Num(String),
    Neg(Box<Tree>),
    Bin(char, Box<Tree>, Box<Tree>),
}

fn oracle(t: &Tree) -> Option<f64> {
    match t {
        Tree::Num(s) => Some(s.parse().unwrap()),
        Tree::Neg(c) => oracle(c).map(|v| -v),
        Tree::Bin(op, l, r) => {
            let (a, b) = (oracle(l)?, oracle(r)?);
            match op {
                '+' => Some(a + b),
                '-' => Some(a - b),
                '*' => Some(a * b),
                _ if b.abs() <= 1e-12 => None,
                _ => Some(a / b),
            }
        }
    }
}

fn prec(t: &Tree) -> u8 {
    match t {
        Tree::Bin('+' | '-', ..) => 1,
        Tree::Bin(..) => 2,
        _ => 3,
    }
}

fn render(t: &Tree) -> String {
    match t {
        Tree::Num(s) => s.clone(),
        Tree::Neg(c) if prec(c) == 3 => format!("-{}", render(c)),
        Tree::Neg(c) => format!("-({})", render(c)),
        Tree::Bin(op, l, r) => {
            let p = prec(t);
            let ls = if prec(l) < p { format!("({})", render(l)) } else { render(l) };
            let rs = if prec(r) <= p { format!("({})", render(r)) } else { render(r) };
            format!("{ls} {op} {rs}")
        }
    }
}

fn random_tree(rng: &mut ChaCha8Rng, depth: u32) -> Tree {
    if depth == 0 || rng.random_bool(0.25) {
        let whole: u32 = rng.random_range(0..1000);
        return Tree::Num(match rng.random_range(0..3) {
            0 => format!("{whole}.{}", rng.random_range(0..100)),
            _ => whole.to_string(),
        });
    }
    if rng.random_bool(0.1) {
        return Tree::Neg(Box::new(random_tree(rng, depth - 1)));
    }
    let op = ['+', '-', '*', '/'][rng.random_range(0..4)];
    Tree::Bin(op, Box::new(random_tree(rng, depth - 1)), Box::new(random_tree(rng, depth - 1)))
}

fn expression_oracle() -> Outcome {
    let start = Instant::now();
    for (text, expected) in [("(38 - 2) / 4", 9.0), ("3 * 6 + 2 * 3", 24.0), ("10 / 1", 10.0), ("12 * 2", 24.0)] {
        let got = eval(&parse_expression(text).map_err(|e| format!("{text}: {e:?}"))?)
            .map_err(|e| format!("{text}: {e:?}"))?;
        ensure!(got == expected, "{text} evaluated to {got}, expected {expected}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0;
    for _ in 0..1000 {
        let tree = random_tree(&mut rng, 5);
        let text = render(&tree);
        let parsed = parse_expression(&text).map_err(|e| format!("{text}: {e:?}"))?;
        match (oracle(&tree), eval(&parsed)) {
            (Some(want), Ok(got)) => {
                let tol = 1e-12 * want.abs().max(1.0);
                ensure!((want - got).abs() <= tol, "{text}: oracle {want}, got {got}");
                compared += 1;
            }
            (None, Err(_)) => {}
            (want, got) => return Err(format!("{text}: oracle {want:?}, got {got:?}")),
        }
    }
    ensure!(compared > 900, "only {compared} trees were comparable");
    within(Duration::from_secs(5), start, "expression oracle")
}

// 3. Math filter fixtures.
fn math_exercise(fixture: &str) -> GeneratedExercise {
    parse_text(&read(&format!("completions/{fixture}")), fixture, ExerciseKind::Math)
}

fn math_filter_fixtures() -> Outcome {
    let concepts: Vec<String> = ["subtraction", "division", "decimal"].map(String::from).to_vec();
    let any = MathFilterConfig { concept_policy: ConceptPolicy::Any, ..MathFilterConfig::default() };

    let fishing = filter_math(&math_exercise("fishing.txt"), &concepts, &any);
    ensure!(fishing.verdict == Verdict::Kept, "fishing rejected: {:?}", fishing.reject_reasons);
    ensure!(!fishing.canary, "fishing marked canary");

    let stickers = filter_math(&math_exercise("stickers_wrong_answer.txt"), &[], &MathFilterConfig::default());
    ensure!(stickers.verdict == Verdict::Rejected, "stickers kept");
    ensure!(stickers.canary, "stickers not canary");
    let evidence = &stickers.check("answer_consistency").ok_or("no answer_consistency check")?.evidence;
    ensure!(evidence.contains("24"), "evidence {evidence:?} lacks 24");

    let hiking = filter_math(&math_exercise("hiking_missing_answer.txt"), &[], &MathFilterConfig::default());
    ensure!(hiking.verdict == Verdict::Rejected, "missing answer kept");
    ensure!(hiking.reject_reasons == ["structure"], "reasons {:?}", hiking.reject_reasons);
    ensure!(!hiking.canary, "structural rejection marked canary");
    Ok(())
}

// 4. Parser fixtures and fuzz.
fn parser_fixtures() -> Outcome {
    let music = parse_text(&read("completions/music_library.txt"), "music", ExerciseKind::Programming);
    for (section, file) in [
        (Section::Statement, "statement"),
        (Section::Solution, "solution"),
        (Section::Tests, "tests"),
    ] {
        let expected = read(&format!("sections/music_library.{file}.txt"));
        ensure!(music.section(section) == Some(expected.as_str()), "{file} section differs");
    }
    ensure!(music.unparsed_tail.is_none(), "unexpected tail {:?}", music.unparsed_tail);

    let no_solution =
        parse_text(&read("completions/tests_without_solution.txt"), "goals", ExerciseKind::Programming);
    let presence = section_presence(&no_solution);
    ensure!(!presence.has_solution && presence.has_tests, "presence {presence:?}");

    let pieces = [
        "--Sample solution--", "--Tests--", "--Answer--", "--Problem statement--", "\"\"\"Exercise 3", "\"\"\"",
        "\n", "\n\n", " ", "def f(x):", "  return x", "é", "\r\n", "--", "=", "42", "\u{0}",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..10_000 {
        let mut text = String::new();
        for _ in 0..rng.random_range(0..24) {
            if rng.random_bool(0.7) {
                text.push_str(pieces[rng.random_range(0..pieces.len())]);
            } else {
                text.push(char::from_u32(rng.random_range(0x20..0x2FF)).unwrap_or('?'));
            }
        }
        let kind = if i % 2 == 0 { ExerciseKind::Math } else { ExerciseKind::Programming };
        let raw = RawCompletion { job_key: format!("fuzz-{i}"), text: text.clone(), finish_reason: FinishReason::Stop };
        let job = GenerationJob::new("fuzz", kind, Keywords::new(None::<&str>, [] as [&str; 0]).unwrap(), 0.0, 1, 0, "m")
            .map_err(|e| e.to_string())?;
        let parsed = catch_unwind(|| parse_completion(&raw, &job)).map_err(|_| format!("panic on {text:?}"))?;
        ensure!(parsed.id == raw.job_key && parsed.kind == kind, "identity lost on {text:?}");
        ensure!(kind == ExerciseKind::Programming || parsed.tests.is_none(), "math tests on {text:?}");
    }
    Ok(())
}

// 5. Grid arithmetic and end-to-end determinism.
fn reference_config() -> Result<GridConfig, String> {
    GridConfig::load(&fixtures().join("reference_grid.json")).map_err(|e| e.to_string())
}

fn run_pipeline(config: &GridConfig) -> Result<String, String> {
    let primings = config.selected_primings().map_err(|e| e.to_string())?;
    let jobs = config.jobs(&primings).map_err(|e| e.to_string())?;
    let backend = ReplayBackend::from_jsonl(&fixtures().join("replay/reference_grid.completions.jsonl"))
        .map_err(|e| e.to_string())?;
    let library: BTreeMap<_, _> = primings.iter().map(|p| (p.id.clone(), p.clone())).collect();
    let generator = Generator::new(library, Arc::new(backend), 4);
    let sink = VecSink::default();
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| e.to_string())?;
    let batch = runtime.block_on(generator.generate_batch(&jobs, &sink));
    ensure!(batch.failed.is_empty(), "generation failures: {:?}", batch.failed);

    let runner = ScriptedMockRunner::from_jsonl(&fixtures().join("replay/reference_grid.runner.jsonl"))
        .map_err(|e| e.to_string())?;
    let pipeline = FilterPipeline::new(FilterConfig::default(), reference_corpus(&primings, &[]), Some(Arc::new(runner)));
    let by_key: BTreeMap<_, _> = jobs.iter().map(|j| (j.job_key.clone(), j)).collect();
    let completions = sink.items.lock().clone();
    let mut reports: Vec<FilterReport> = Vec::new();
    for completion in &completions {
        let job = by_key[&completion.job_key];
        let exercise = parse_completion(completion, job);
        reports.push(pipeline.filter(&exercise, job.target_keywords.concepts()).map_err(|e| e.to_string())?);
    }
    serde_json::to_string_pretty(&summarize(&reports)).map_err(|e| e.to_string())
}

fn grid_arithmetic() -> Outcome {
    let config = reference_config()?;
    let primings = config.selected_primings().map_err(|e| e.to_string())?;
    let jobs = config.jobs(&primings).map_err(|e| e.to_string())?;
    let expected = primings.len() * config.themes.len() * config.concept_sets.len() * config.temperatures.len() * 2;
    ensure!(expected == 144 && jobs.len() == 144, "{} jobs", jobs.len());
    let keys: BTreeSet<_> = jobs.iter().map(|j| j.job_key.as_str()).collect();
    ensure!(keys.len() == 144, "{} distinct keys", keys.len());

    let first = run_pipeline(&config)?;
    let second = run_pipeline(&config)?;
    ensure!(first == second, "analysis JSON differs between runs");
    ensure!(first.contains("\"total\": 144"), "unexpected analysis {first}");
    Ok(())
}

// 6. Code filter with the scripted runner.
fn code_filter_fixtures() -> Outcome {
    let music = parse_text(&read("completions/music_library.txt"), "music", ExerciseKind::Programming);
    let mut response = RunnerResponse::ran("music", 1, 1).with_coverage(14, 14);
    response.concepts = ["class", "list", "conditional", "function", "parameters"]
        .iter()
        .map(|c| (c.to_string(), true))
        .collect();
    let concepts: Vec<String> = ["class", "list", "conditional"].map(String::from).to_vec();
    let report = validate_code(&music, &concepts, &ScriptedMockRunner::new([response]), &CodeFilterConfig::default())
        .map_err(|e| e.to_string())?;
    ensure!(report.verdict == Verdict::Kept, "music library rejected: {:?}", report.reject_reasons);

    let evens = parse_text(&read("completions/even_filter_bad_test.txt"), "evens", ExerciseKind::Programming);
    let runner = ScriptedMockRunner::new([RunnerResponse::ran("evens", 1, 0).with_coverage(2, 2)]);
    let report = validate_code(&evens, &[], &runner, &CodeFilterConfig::default()).map_err(|e| e.to_string())?;
    ensure!(report.verdict == Verdict::Rejected && report.canary, "failing tests: {report:?}");

    let corpus = load_code_corpus()?;
    ensure!(corpus.len() == 20, "{} corpus entries", corpus.len());
    let runner = ScriptedMockRunner::new(corpus.iter().filter_map(|(_, r)| r.clone()));
    let mut kept_counts = Vec::new();
    for step in 0..=20 {
        let config = CodeFilterConfig { coverage_threshold: step as f64 / 20.0, ..CodeFilterConfig::default() };
        let mut kept = 0;
        for (exercise, _) in &corpus {
            let report = validate_code(exercise, &[], &runner, &config).map_err(|e| e.to_string())?;
            kept += (report.verdict == Verdict::Kept) as usize;
        }
        kept_counts.push(kept);
    }
    ensure!(kept_counts.windows(2).all(|w| w[1] <= w[0]), "kept counts not monotone: {kept_counts:?}");
    ensure!(kept_counts[0] > kept_counts[20], "sweep never changes the outcome: {kept_counts:?}");
    Ok(())
}

#[derive(serde::Deserialize)]
struct CorpusCase {
    exercise: GeneratedExercise,
    response: Option<RunnerResponse>,
}

fn load_code_corpus() -> Result<Vec<(GeneratedExercise, Option<RunnerResponse>)>, String> {
    read("code_corpus.jsonl")
        .lines()
        .map(|l| serde_json::from_str::<CorpusCase>(l).map(|c| (c.exercise, c.response)).map_err(|e| e.to_string()))
        .collect()
}

// 7. Summary rows over a synthetic corpus.
fn report_reproduction() -> Outcome {
    let start = Instant::now();
    let mut runner = ScriptedMockRunner::default();
    let mut exercises = Vec::new();
    for i in 0..144u32 {
        let id = format!("ex{i}");
        let with_solution = i < 136;
        exercises.push(GeneratedExercise {
            id: id.clone(),
            job_key: id.clone(),
            kind: ExerciseKind::Programming,
            statement: Some(format!("Exercise number {i}.")),
            solution: with_solution.then(|| "def f():\n  return 1".to_string()),
            tests: (i >= 9).then(|| "class Test(unittest.TestCase):\n  pass".to_string()),
            unparsed_tail: None,
        });
        if with_solution {
            runner.insert(match i {
                0..3 => RunnerResponse::crashed(&id, "NameError"),
                3..9 => RunnerResponse::ran(&id, 0, 0),
                92 | 93 => RunnerResponse::ran(&id, 2, 2).with_coverage(10, 7),
                9..94 => RunnerResponse::ran(&id, 2, 2).with_coverage(10, 10),
                _ => RunnerResponse::ran(&id, 2, 1).with_coverage(10, 10),
            });
        }
    }
    let config = CodeFilterConfig::default();
    let reports: Vec<FilterReport> = exercises
        .iter()
        .map(|e| validate_code(e, &[], &runner, &config))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let summary = summarize(&reports);
    let row = |name: &str| summary.metric(name).map(|m| m.display()).unwrap_or_default();

    ensure!(row("runnable") == "97.8% 133/136", "runnable row {}", row("runnable"));
    ensure!(row("has_tests") == "93.8% 135/144", "has_tests row {}", row("has_tests"));
    ensure!(row("tests_pass") == "63.0% 85/135", "tests_pass row {}", row("tests_pass"));
    let full = summary.metric("full_coverage").ok_or("no full_coverage row")?;
    ensure!(full.numerator == 83.0 && full.denominator == 85, "full coverage {}", full.display());
    ensure!(row("has_solution") == "94.4% 136/144", "has_solution row {}", row("has_solution"));

    let mean = summary.metric("mean_coverage_over_passing").ok_or("no mean row")?;
    let oracle_mean: f64 = (83.0 * 1.0 + 2.0 * 0.7) / 85.0 * 100.0;
    let oracle_rounded = (oracle_mean * 10.0).round() / 10.0;
    ensure!(mean.percentage == Some(oracle_rounded), "mean coverage {:?} vs {oracle_rounded}", mean.percentage);
    within(Duration::from_secs(5), start, "report reproduction")
}

// 8. Novelty.
fn novelty() -> Outcome {
    let cfg = NoveltyConfig::default();
    let s = "A fishing boat with a crew of four catches fish and divides them evenly.";
    let same = check_novelty(s, &Corpus::new([("s", s)]), cfg);
    ensure!(same.similarity == 1.0 && !same.novel, "identity {same:?}");

    let other = "Write a class that stores the songs of a music library by artist name.";
    let disjoint = check_novelty(s, &Corpus::new([("o", other)]), cfg);
    ensure!(disjoint.similarity == 0.0 && disjoint.novel, "disjoint {disjoint:?}");

    let digits = check_novelty(
        "A crew of 4 catches 38 fish and keeps 2 of them for later today.",
        &Corpus::new([("d", "A crew of 7 catches 120 fish and keeps 15 of them for later today.")]),
        cfg,
    );
    ensure!(digits.similarity == 1.0 && !digits.novel, "digit variant {digits:?}");

    // Ten tokens give six 5-grams; sharing the first six tokens shares two.
    let cand = "one two three four five six seven eight nine ten";
    let reference = "one two three four five six alpha beta gamma delta";
    let sim = containment_similarity(&normalize(cand), &normalize(reference), 5);
    ensure!((sim - 2.0 / 6.0).abs() < 1e-9 && (sim - 0.333).abs() < 1e-3, "six shared tokens gave {sim}");

    // Sixty unrelated statements from random words; two are planted in the
    // reference corpus, one re-numbered and one with a prefix.
    let words = [
        "hiking", "trail", "river", "boat", "guitar", "song", "recipe", "oven", "goal", "team", "book", "page",
        "doctor", "visit", "friend", "letter", "puck", "rink", "apple", "basket", "count", "share", "store", "price",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let candidates: Vec<String> = (0..60)
        .map(|i| {
            let mut s: Vec<String> = (0..12).map(|_| words[rng.random_range(0..words.len())].to_string()).collect();
            s.insert(3, (i * 7).to_string());
            s.join(" ")
        })
        .collect();
    let reference = vec![
        ("r1", candidates[7].replace("49", "12")),
        ("r2", format!("Note: {}", candidates[41])),
        ("r3", "Completely unrelated text about tax returns and forms".to_string()),
    ];
    let corpus = Corpus::new(reference);
    let flagged: Vec<usize> = (0..60).filter(|&i| !check_novelty(&candidates[i], &corpus, cfg).novel).collect();
    ensure!(flagged == [7, 41], "not novel: {flagged:?}, expected [7, 41]");
    ensure!(60 - flagged.len() == 58, "{} of 60 novel", 60 - flagged.len());
    Ok(())
}

// 9. Curation event sourcing.
fn fixed_clock(seconds: i64) -> robosource_core::curation::Clock {
    let t: DateTime<Utc> = Utc.timestamp_opt(1_700_000_000 + seconds, 0).unwrap();
    Arc::new(move || t)
}

fn curation_report(id: &str, kept: bool, canary: bool) -> FilterReport {
    let check = robosource_core::CheckResult::outcome("answer_consistency", kept, "checked");
    let reasons = if kept { vec![] } else { vec!["answer_consistency".to_string()] };
    FilterReport::new(id, ExerciseKind::Math, [check], reasons, canary)
}

fn curation_exercise(id: &str) -> GeneratedExercise {
    GeneratedExercise {
        id: id.into(),
        job_key: id.into(),
        kind: ExerciseKind::Math,
        statement: Some("Sam has 3 bags of 4 apples.".into()),
        solution: Some("3 * 4 = 12".into()),
        tests: None,
        unparsed_tail: None,
    }
}

fn pending_invariant(store: &CurationStore) -> Outcome {
    let listed: BTreeSet<&str> = store.state().pending().iter().map(|r| r.id()).collect();
    let expected: BTreeSet<&str> = store
        .state()
        .records()
        .filter(|r| {
            r.decision == Decision::Pending
                && r.filter_report.as_ref().is_some_and(|f| f.reject_reasons.is_empty())
        })
        .map(|r| r.id())
        .collect();
    ensure!(listed == expected, "pending {listed:?} vs {expected:?}");
    Ok(())
}

const DIMENSIONS: [LabelDimension; 6] = [
    LabelDimension::Sensible,
    LabelDimension::Novel,
    LabelDimension::AnswerMatches,
    LabelDimension::ThemeMatch,
    LabelDimension::ConceptsMatchAll,
    LabelDimension::ConceptsMatchAny,
];

fn random_sequence(seed: u64, store: &mut CurationStore, successes: &mut [usize; 4]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reviewers = ["ana", "ben", "cho"];
    for _ in 0..rng.random_range(1..40) {
        let id = format!("r{}", rng.random_range(0..6));
        let before = store.events().to_vec();
        let op = rng.random_range(0..5);
        let result = match op {
            0 => store
                .ingest(curation_exercise(&id), curation_report(&id, rng.random_bool(0.6), rng.random_bool(0.5)))
                .map(|_| ()),
            1 => {
                let value = [LabelValue::Yes, LabelValue::No, LabelValue::Maybe, LabelValue::Maybe][rng.random_range(0..4)];
                let input = LabelInput {
                    dimension: DIMENSIONS[rng.random_range(0..6)],
                    value,
                    reviewer: reviewers[rng.random_range(0..3)].into(),
                    notes: (value == LabelValue::Maybe).then(|| "unsure".into()),
                };
                store.add_label(&id, input).map(|_| ())
            }
            2 => {
                let n = rng.random_range(1..4);
                let names = reviewers[..n].iter().map(|s| s.to_string()).collect();
                let value = if rng.random_bool(0.5) { Resolution::Yes } else { Resolution::No };
                let waiting: Vec<(String, LabelDimension)> = store
                    .state()
                    .records()
                    .flat_map(|r| DIMENSIONS.iter().filter(|d| r.needs_consensus(**d)).map(|d| (r.id().to_string(), *d)))
                    .collect();
                let (id, dimension) = if !waiting.is_empty() && rng.random_bool(0.8) {
                    waiting[rng.random_range(0..waiting.len())].clone()
                } else {
                    (id, DIMENSIONS[rng.random_range(0..6)])
                };
                store.resolve_consensus(&id, dimension, value, names).map(|_| ())
            }
            _ => {
                let action = if rng.random_bool(0.5) { DecisionAction::Accept } else { DecisionAction::Reject };
                let edits = (0..rng.random_range(0..3))
                    .map(|k| EditInput { section: Section::Solution, text: format!("3 * 4 = {}", 12 + k) })
                    .collect();
                store.decide(&id, action, reviewers[rng.random_range(0..3)], edits).map(|_| ())
            }
        };
        let after = store.events();
        ensure!(after.starts_with(&before), "seed {seed}: earlier events changed");
        if result.is_err() {
            ensure!(after.len() == before.len(), "seed {seed}: failed operation appended events");
        } else {
            successes[op.min(3)] += 1;
        }
        pending_invariant(store).map_err(|e| format!("seed {seed}: {e}"))?;
        for record in store.state().records() {
            let problems = robosource_core::validate(record);
            ensure!(problems.is_empty(), "seed {seed}: {problems:?}");
        }
    }
    let rebuilt = rebuild(store.events()).map_err(|e| format!("seed {seed}: {e}"))?;
    ensure!(&rebuilt == store.state(), "seed {seed}: rebuild differs from live state");
    Ok(())
}

fn curation() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut successes = [0usize; 4];
    for seed in 0..500u64 {
        if seed % 25 == 0 {
            let path = dir.path().join(format!("events-{seed}.jsonl"));
            let mut store = CurationStore::open(&path, fixed_clock(seed as i64)).map_err(|e| e.to_string())?;
            random_sequence(seed, &mut store, &mut successes)?;
            let reopened = CurationStore::open(&path, fixed_clock(0)).map_err(|e| e.to_string())?;
            ensure!(reopened.state() == store.state(), "seed {seed}: reopened log differs");
        } else {
            let mut store = CurationStore::in_memory(fixed_clock(seed as i64));
            random_sequence(seed, &mut store, &mut successes)?;
        }
    }

    ensure!(successes.iter().all(|&n| n >= 50), "too few successful operations: {successes:?}");

    let mut store = CurationStore::in_memory(fixed_clock(0));
    store.ingest(curation_exercise("a"), curation_report("a", true, false)).map_err(|e| e.to_string())?;
    let maybe = LabelInput {
        dimension: LabelDimension::Sensible,
        value: LabelValue::Maybe,
        reviewer: "ana".into(),
        notes: Some("needs a second look".into()),
    };
    store.add_label("a", maybe).map_err(|e| e.to_string())?;
    let record = store
        .resolve_consensus("a", LabelDimension::Sensible, Resolution::Yes, vec!["ana".into(), "ben".into()])
        .map_err(|e| e.to_string())?;
    ensure!(record.resolved_labels.get(&LabelDimension::Sensible) == Some(&Resolution::Yes), "consensus unresolved");

    store.decide("a", DecisionAction::Accept, "ana", vec![]).map_err(|e| e.to_string())?;
    let again = store.decide("a", DecisionAction::Reject, "ben", vec![]);
    ensure!(matches!(again, Err(CurationError::AlreadyDecided(_))), "double decide gave {:?}", again.err());
    ensure!(store.state().list(Some(StatusFilter::Accepted), None, None).len() == 1, "accepted view");
    Ok(())
}

type Criterion = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("prompt golden files", prompt_goldens),
        ("expression oracle", expression_oracle),
        ("math filter fixtures", math_filter_fixtures),
        ("parser fixtures and fuzz", parser_fixtures),
        ("grid arithmetic and deterministic pipeline", grid_arithmetic),
        ("code filter with scripted runner", code_filter_fixtures),
        ("report reproduction", report_reproduction),
        ("novelty", novelty),
        ("curation event sourcing", curation),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(()) => println!("criterion {}: PASS {name}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {reason}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
