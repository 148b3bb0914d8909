mod commands;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Generate, filter, curate and analyze LLM-authored practice exercises.
#[derive(Parser)]
#[command(name = "robosource", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the generation grid of a config file and record the completions.
    Generate(GenerateArgs),
    /// Parse and filter completions into filter reports.
    Filter(FilterArgs),
    /// Summarize programming filter reports.
    Analyze(AnalyzeArgs),
    /// Run the curation HTTP service.
    Serve(ServeArgs),
    /// Export accepted or canary exercises.
    Export(ExportArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Grid config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Replay completions from this JSONL file instead of the configured backend.
    #[arg(long, conflicts_with = "live")]
    pub replay: Option<PathBuf>,
    /// Use the live backend described in the config.
    #[arg(long)]
    pub live: bool,
    /// Output directory for jobs.jsonl and completions.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum RunnerKind {
    Mock,
    Subprocess,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum CoverageArg {
    StatementInAnswer,
    AnswerInStatement,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ConceptArg {
    Off,
    Any,
    All,
}

#[derive(Args)]
pub struct FilterArgs {
    /// Completions JSONL, as written by `generate`.
    pub completions: PathBuf,
    /// Jobs JSONL; supplies each exercise's kind and target concepts.
    #[arg(long)]
    pub jobs: Option<PathBuf>,
    /// Exercise kind, required without --jobs.
    #[arg(long)]
    pub kind: Option<robosource_core::ExerciseKind>,
    #[arg(long, value_enum, default_value = "mock")]
    pub runner: RunnerKind,
    /// Scripted runner responses (JSONL) for --runner mock.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Runner command line for --runner subprocess.
    #[arg(long)]
    pub runner_cmd: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    #[arg(long, default_value_t = 1.0)]
    pub coverage_threshold: f64,
    #[arg(long)]
    pub no_require_runnable: bool,
    #[arg(long)]
    pub no_require_tests_pass: bool,
    #[arg(long)]
    pub no_require_coverage: bool,
    #[arg(long)]
    pub no_answer_consistency: bool,
    #[arg(long, value_enum, default_value = "statement-in-answer")]
    pub number_coverage: CoverageArg,
    #[arg(long, value_enum, default_value = "off")]
    pub concept_policy: ConceptArg,
    #[arg(long)]
    pub no_novelty: bool,
    #[arg(long, default_value_t = robosource_core::novelty::DEFAULT_THRESHOLD)]
    pub novelty_threshold: f64,
    /// Reference statements (JSONL of {id, statement}) for the novelty check.
    #[arg(long)]
    pub novelty_corpus: Option<PathBuf>,
    /// Priming directory; its statements join the novelty corpus.
    #[arg(long)]
    pub primings: Option<PathBuf>,
    /// Output path for filter reports (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    /// Output path for the parsed exercises (JSONL).
    #[arg(long)]
    pub exercises_out: Option<PathBuf>,
    /// Ingest every exercise into the curation service at this URL.
    #[arg(long)]
    pub ingest: Option<String>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Filter reports JSONL.
    pub reports: PathBuf,
    /// Write the summary as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Event log path.
    #[arg(long, default_value = "events.jsonl")]
    pub log: PathBuf,
    /// Grid config whose primings and backend serve `POST /api/jobs`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scripted runner responses for programming jobs.
    #[arg(long, conflicts_with = "runner_cmd")]
    pub mock_script: Option<PathBuf>,
    /// Runner command line for programming jobs.
    #[arg(long)]
    pub runner_cmd: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ExportStatus {
    Accepted,
    Canary,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ExportFormat {
    Jsonl,
    Csv,
}

#[derive(Args)]
pub struct ExportArgs {
    /// Read from a running service.
    #[arg(long, conflicts_with = "log", required_unless_present = "log")]
    pub url: Option<String>,
    /// Read from an event log file.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "accepted")]
    pub status: ExportStatus,
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: ExportFormat,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed command. Usage problems exit with 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
}

impl CliError {
    pub fn failed(e: impl std::fmt::Display) -> Self {
        CliError::Failed(e.to_string())
    }

    pub fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Filter(args) => commands::filter(args),
        Command::Analyze(args) => commands::analyze(args),
        Command::Serve(args) => commands::serve(args),
        Command::Export(args) => export::export(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
