//! Near-duplicate detection against a reference corpus using word n-gram
//! containment. Numbers are normalized to a placeholder so that a
//! re-numbered copy of a known exercise still matches.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::NoveltyError;
use crate::model::CheckResult;

pub const NUM_TOKEN: &str = "<num>";
pub const DEFAULT_NGRAM: usize = 5;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const NOVELTY: &str = "novelty";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyResult {
    pub novel: bool,
    pub best_match_id: Option<String>,
    pub similarity: f64,
    pub backend: String,
}

impl NoveltyResult {
    pub fn to_check(&self) -> CheckResult {
        let evidence = match &self.best_match_id {
            Some(id) => format!("closest match {id} at similarity {:.3} ({})", self.similarity, self.backend),
            None => format!("no similar exercise found ({})", self.backend),
        };
        CheckResult::outcome(NOVELTY, self.novel, evidence).with_numeric(self.similarity)
    }
}

/// Lowercases, strips punctuation, splits on whitespace and replaces each
/// run of digits with [`NUM_TOKEN`].
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let mut token = String::new();
            let mut in_digits = false;
            for c in raw.chars().filter(|c| c.is_alphanumeric()) {
                if c.is_ascii_digit() {
                    if !in_digits {
                        token.push_str(NUM_TOKEN);
                    }
                    in_digits = true;
                } else {
                    token.extend(c.to_lowercase());
                    in_digits = false;
                }
            }
            (!token.is_empty()).then_some(token)
        })
        .collect()
}

fn ngrams(tokens: &[String], n: usize) -> HashSet<&[String]> {
    tokens.windows(n).collect()
}

/// Share of the candidate's distinct n-grams that occur in the reference.
/// Candidates shorter than `n` tokens score 1.0 on exact equality, else 0.0.
pub fn containment_similarity(candidate: &[String], reference: &[String], n: usize) -> f64 {
    assert!(n >= 1, "n-gram size must be positive");
    if candidate.len() < n {
        return if candidate == reference { 1.0 } else { 0.0 };
    }
    let cand = ngrams(candidate, n);
    let refs = ngrams(reference, n);
    let shared = cand.iter().filter(|g| refs.contains(*g)).count();
    shared as f64 / cand.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub statement: String,
}

/// An immutable, pre-tokenized reference corpus.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    entries: Vec<(String, Vec<String>)>,
}

impl Corpus {
    pub fn new<I, A, B>(entries: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        Corpus {
            entries: entries
                .into_iter()
                .map(|(id, statement)| (id.as_ref().to_string(), normalize(statement.as_ref())))
                .collect(),
        }
    }

    /// A new snapshot with one more entry.
    pub fn with_entry(&self, id: &str, statement: &str) -> Corpus {
        let mut entries = self.entries.clone();
        entries.push((id.to_string(), normalize(statement)));
        Corpus { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoveltyConfig {
    pub threshold: f64,
    pub ngram: usize,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        NoveltyConfig { threshold: DEFAULT_THRESHOLD, ngram: DEFAULT_NGRAM }
    }
}

pub fn check_novelty(statement: &str, corpus: &Corpus, config: NoveltyConfig) -> NoveltyResult {
    let candidate = normalize(statement);
    let mut best: Option<(&str, f64)> = None;
    for (id, tokens) in &corpus.entries {
        let sim = containment_similarity(&candidate, tokens, config.ngram);
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((id, sim));
        }
    }
    let (best_match_id, similarity) = match best {
        Some((id, sim)) if sim > 0.0 => (Some(id.to_string()), sim),
        _ => (None, 0.0),
    };
    NoveltyResult { novel: similarity < config.threshold, best_match_id, similarity, backend: "local".into() }
}

/// Web search configuration. The search endpoint is called with
/// `GET {endpoint}?q=<quoted longest sentence>` and a bearer key; it must
/// answer `{"total_hits": <int>}`. A statement is novel iff there are no hits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebSearchConfig {
    pub enabled: bool,
    pub endpoint_url: String,
    pub api_key_env_var: String,
}

/// The longest sentence of a statement, quoted for exact-phrase search.
pub fn web_query(statement: &str) -> String {
    let longest = statement
        .split(['.', '?', '!', '\n'])
        .map(str::trim)
        .max_by_key(|s| s.len())
        .unwrap_or("");
    format!("\"{longest}\"")
}

#[derive(Debug, Deserialize)]
struct SearchResponse {
    total_hits: u64,
}

pub async fn check_novelty_web(
    statement: &str,
    config: &WebSearchConfig,
    client: &reqwest::Client,
) -> Result<NoveltyResult, NoveltyError> {
    if !config.enabled {
        return Err(NoveltyError::WebBackendUnavailable("web search is disabled".into()));
    }
    let key = std::env::var(&config.api_key_env_var)
        .map_err(|_| NoveltyError::WebBackendUnavailable(format!("{} is not set", config.api_key_env_var)))?;
    let response = client
        .get(&config.endpoint_url)
        .query(&[("q", web_query(statement))])
        .bearer_auth(key)
        .send()
        .await
        .and_then(|r| r.error_for_status())
        .map_err(|e| NoveltyError::WebBackendUnavailable(e.to_string()))?;
    let body: SearchResponse =
        response.json().await.map_err(|e| NoveltyError::WebBackendUnavailable(e.to_string()))?;
    Ok(NoveltyResult {
        novel: body.total_hits == 0,
        best_match_id: None,
        similarity: if body.total_hits == 0 { 0.0 } else { 1.0 },
        backend: "web".into(),
    })
}
