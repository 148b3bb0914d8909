//! Regenerates the replay corpus and scripted runner responses for the
//! reference grid config.
//!
//! The outcome mix is fixed: of 144 exercises, 136 carry a solution (133
//! runnable), 135 carry tests, 85 suites pass and 83 of those reach full
//! coverage. Outcomes are assigned to jobs by a seeded shuffle.
//!
//! Usage: cargo run -p robosource-core --example synth_replay_corpus

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robosource_core::code::PROGRAMMING_CONCEPTS;
use robosource_core::config::GridConfig;
use robosource_core::model::{FinishReason, GenerationJob, RawCompletion};
use robosource_core::runner::RunnerResponse;

const SEED: u64 = 2022;

fn snake(theme: &str) -> String {
    theme.replace(' ', "_")
}

fn statement(job: &GenerationJob, class_based: bool) -> String {
    let theme = job.target_keywords.theme().unwrap_or("everyday life");
    let t = snake(theme);
    match (job.priming_id.as_str(), class_based) {
        ("speeding", false) => format!(
            "Write a function called rate_{t} that receives a dictionary mapping {theme} activities\n\
             to scores and returns the total score plus a bonus of 10 when the total exceeds 50."
        ),
        ("speeding", true) => format!(
            "Create a class called {T}Log with a list attribute entries.\n\
             Add a method record that stores an entry, and a method busy that\n\
             returns True if more than 3 {theme} entries were recorded, otherwise False.",
            T = capitalize(&t)
        ),
        (_, false) => format!(
            "Write a function called convert_{t} that receives a dictionary of {theme} prices in euros\n\
             and a rate, and returns a new dictionary with every price multiplied by the rate."
        ),
        (_, true) => format!(
            "Create a class called {T}Budget that keeps a list of {theme} expenses.\n\
             It should have a method add for new expenses and a method over_limit that\n\
             returns True if the sum of the expenses is above a limit given to the constructor.",
            T = capitalize(&t)
        ),
    }
}

fn capitalize(s: &str) -> String {
    s.split('_')
        .map(|w| {
            let mut c = w.chars();
            c.next().map(|f| f.to_uppercase().chain(c).collect::<String>()).unwrap_or_default()
        })
        .collect()
}

fn solution(job: &GenerationJob, class_based: bool) -> String {
    let t = snake(job.target_keywords.theme().unwrap_or("everyday life"));
    match (job.priming_id.as_str(), class_based) {
        ("speeding", false) => format!(
            "def rate_{t}(scores):\n  total = 0\n  for name in scores:\n    total = total + scores[name]\n  if total > 50:\n    return total + 10\n  return total"
        ),
        ("speeding", true) => format!(
            "class {T}Log:\n  def __init__(self):\n    self.entries = []\n  def record(self, entry):\n    self.entries.append(entry)\n  def busy(self):\n    return len(self.entries) > 3",
            T = capitalize(&t)
        ),
        (_, false) => format!(
            "def convert_{t}(prices, rate):\n  converted = {{}}\n  for item in prices:\n    converted[item] = prices[item] * rate\n  return converted"
        ),
        (_, true) => format!(
            "class {T}Budget:\n  def __init__(self, limit):\n    self.limit = limit\n    self.expenses = []\n  def add(self, amount):\n    self.expenses.append(amount)\n  def over_limit(self):\n    return sum(self.expenses) > self.limit",
            T = capitalize(&t)
        ),
    }
}

fn tests(job: &GenerationJob, class_based: bool) -> String {
    let t = snake(job.target_keywords.theme().unwrap_or("everyday life"));
    let body = match (job.priming_id.as_str(), class_based) {
        ("speeding", false) => format!("    self.assertEquals(rate_{t}({{'a': 30, 'b': 25}}), 65)"),
        ("speeding", true) => {
            format!("    log = {T}Log()\n    log.record('x')\n    self.assertEquals(log.busy(), False)", T = capitalize(&t))
        }
        (_, false) => format!("    self.assertEquals(convert_{t}({{'a': 2}}, 3), {{'a': 6}})"),
        (_, true) => format!(
            "    b = {T}Budget(5)\n    b.add(4)\n    b.add(3)\n    self.assertEquals(b.over_limit(), True)",
            T = capitalize(&t)
        ),
    };
    format!("class Test(unittest.TestCase):\n  def test_{t}(self):\n{body}")
}

fn concepts(class_based: bool, concat_only: bool) -> BTreeMap<String, bool> {
    let used: &[&str] = if class_based {
        &["class", "function", "list", "parameters", "arithmetics", "conditional"]
    } else {
        &["function", "parameters", "dictionary", "arithmetics", "conditional"]
    };
    PROGRAMMING_CONCEPTS
        .iter()
        .map(|c| (c.to_string(), used.contains(c) && !(concat_only && *c == "arithmetics")))
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = GridConfig::load(&dir.join("reference_grid.json"))?;
    let jobs = config.jobs(&config.selected_primings()?)?;

    let mut outcomes: Vec<usize> = (0..jobs.len()).collect();
    outcomes.shuffle(&mut ChaCha8Rng::seed_from_u64(SEED));

    let mut completions = BufWriter::new(File::create(dir.join("replay/reference_grid.completions.jsonl"))?);
    let mut runner = BufWriter::new(File::create(dir.join("replay/reference_grid.runner.jsonl"))?);
    for (job, &o) in jobs.iter().zip(&outcomes) {
        let class_based = job.target_keywords.concepts().iter().any(|c| c == "class");
        let has_solution = o < 136;
        let has_tests = o >= 9;

        let mut text = statement(job, class_based);
        text.push('\n');
        if has_solution {
            text.push_str("--Sample solution--\n");
            text.push_str(&solution(job, class_based));
            text.push('\n');
        }
        if has_tests {
            text.push_str("--Tests--\n");
            text.push_str(&tests(job, class_based));
            text.push('\n');
        }
        let completion = RawCompletion { job_key: job.job_key.clone(), text, finish_reason: FinishReason::Stop };
        writeln!(completions, "{}", serde_json::to_string(&completion)?)?;

        if !has_solution {
            continue;
        }
        let collected = if has_tests { 1 + (o % 3) as u32 } else { 0 };
        let mut response = match o {
            0..3 => RunnerResponse::crashed(&job.job_key, "SyntaxError: invalid syntax"),
            3..9 => RunnerResponse::ran(&job.job_key, 0, 0).with_coverage(8, 6),
            92 | 93 => RunnerResponse::ran(&job.job_key, collected, collected).with_coverage(10, 7),
            9..94 => RunnerResponse::ran(&job.job_key, collected, collected).with_coverage(10, 10),
            _ => RunnerResponse::ran(&job.job_key, collected, collected - 1).with_coverage(10, 8),
        };
        if response.solution_runnable {
            response.concepts = concepts(class_based, o % 7 == 0);
        }
        writeln!(runner, "{}", serde_json::to_string(&response)?)?;
    }
    completions.flush()?;
    runner.flush()?;
    println!("wrote {} completions", jobs.len());
    Ok(())
}
