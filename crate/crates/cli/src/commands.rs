use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use robosource_client::Client;
use robosource_core::code::CodeFilterConfig;
use robosource_core::config::GridConfig;
use robosource_core::curation::{system_clock, CurationStore};
use robosource_core::generation::{BackendKind, CompletionBackendConfig, Generator, VecSink};
use robosource_core::math::{ConceptPolicy, CoverageDirection, MathFilterConfig};
use robosource_core::novelty::{Corpus, NoveltyConfig};
use robosource_core::parser::parse_text;
use robosource_core::pipeline::{load_corpus_entries, reference_corpus, FilterConfig, FilterPipeline};
use robosource_core::prompt::load_primings;
use robosource_core::report::summarize;
use robosource_core::runner::{RunnerBackend, ScriptedMockRunner, SubprocessRunner};
use robosource_core::{FilterReport, GeneratedExercise, GenerationJob, RawCompletion};
use robosource_service::{AppState, GenerationSetup};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{AnalyzeArgs, CliError, ConceptArg, CoverageArg, FilterArgs, GenerateArgs, RunnerKind, ServeArgs};

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = File::open(path).map_err(|e| CliError::failed(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::failed(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|e| CliError::failed(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::failed(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(CliError::failed)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(CliError::failed)
}

fn backend_config(config: &GridConfig, replay: Option<&Path>, live: bool) -> Result<CompletionBackendConfig, CliError> {
    let mut backend = match (replay, &config.backend) {
        (Some(path), base) => {
            let mut b = CompletionBackendConfig::replay(path);
            if let Some(base) = base {
                b.max_parallel_jobs = base.max_parallel_jobs;
            }
            b
        }
        (None, Some(b)) => b.clone(),
        (None, None) => return Err(CliError::usage("no backend: pass --replay or configure one")),
    };
    if live {
        backend.backend = BackendKind::Live;
    }
    backend.validate().map_err(CliError::usage)?;
    Ok(backend)
}

pub fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let config = GridConfig::load(&args.config).map_err(CliError::usage)?;
    let primings = config.selected_primings().map_err(CliError::usage)?;
    let jobs = config.jobs(&primings).map_err(CliError::usage)?;
    let backend_config = backend_config(&config, args.replay.as_deref(), args.live)?;
    let backend = backend_config.build().map_err(CliError::usage)?;

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::failed(format!("{}: {e}", args.out.display())))?;
    write_jsonl(&args.out.join("jobs.jsonl"), &jobs)?;

    let library = primings.iter().map(|p| (p.id.clone(), p.clone())).collect();
    let generator = Generator::new(library, backend, backend_config.max_parallel_jobs);
    let sink = VecSink::default();
    let summary = runtime()?.block_on(generator.generate_batch(&jobs, &sink));

    // Completions are written in grid order so reruns give identical files.
    let mut by_key: BTreeMap<String, RawCompletion> =
        sink.items.into_inner().into_iter().map(|c| (c.job_key.clone(), c)).collect();
    let ordered: Vec<RawCompletion> = jobs.iter().filter_map(|j| by_key.remove(&j.job_key)).collect();
    write_jsonl(&args.out.join("completions.jsonl"), &ordered)?;

    println!("{}", serde_json::to_string_pretty(&summary).map_err(CliError::failed)?);
    if summary.failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::failed(format!("{} of {} jobs failed", summary.failed.len(), jobs.len())))
    }
}

fn filter_config(args: &FilterArgs) -> FilterConfig {
    FilterConfig {
        math: MathFilterConfig {
            answer_consistency: !args.no_answer_consistency,
            number_coverage: match args.number_coverage {
                CoverageArg::StatementInAnswer => Some(CoverageDirection::StatementInAnswer),
                CoverageArg::AnswerInStatement => Some(CoverageDirection::AnswerInStatement),
                CoverageArg::Off => None,
            },
            concept_policy: match args.concept_policy {
                ConceptArg::Off => ConceptPolicy::Off,
                ConceptArg::Any => ConceptPolicy::Any,
                ConceptArg::All => ConceptPolicy::All,
            },
        },
        code: CodeFilterConfig {
            coverage_threshold: args.coverage_threshold,
            require_runnable: !args.no_require_runnable,
            require_tests_pass: !args.no_require_tests_pass,
            require_coverage: !args.no_require_coverage,
            ..CodeFilterConfig::default()
        },
        novelty: (!args.no_novelty).then_some(NoveltyConfig {
            threshold: args.novelty_threshold,
            ..NoveltyConfig::default()
        }),
    }
}

fn build_runner(
    kind: RunnerKind,
    mock_script: Option<&Path>,
    runner_cmd: Option<&str>,
    workers: usize,
) -> Result<Arc<dyn RunnerBackend>, CliError> {
    match kind {
        RunnerKind::Mock => {
            let script = mock_script.ok_or_else(|| CliError::usage("--runner mock needs --mock-script"))?;
            Ok(Arc::new(ScriptedMockRunner::from_jsonl(script).map_err(CliError::usage)?))
        }
        RunnerKind::Subprocess => {
            let cmd = runner_cmd.ok_or_else(|| CliError::usage("--runner subprocess needs --runner-cmd"))?;
            Ok(Arc::new(SubprocessRunner::from_command_line(cmd, workers).map_err(CliError::usage)?))
        }
    }
}

pub fn filter(args: FilterArgs) -> Result<(), CliError> {
    let completions: Vec<RawCompletion> = read_jsonl(&args.completions)?;
    let jobs: BTreeMap<String, GenerationJob> = match &args.jobs {
        Some(path) => read_jsonl::<GenerationJob>(path)?.into_iter().map(|j| (j.job_key.clone(), j)).collect(),
        None if args.kind.is_some() => BTreeMap::new(),
        None => return Err(CliError::usage("pass --jobs or --kind")),
    };

    let mut entries = Vec::new();
    if let Some(path) = &args.novelty_corpus {
        entries = load_corpus_entries(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    }
    let primings = match &args.primings {
        Some(dir) => load_primings(dir).map_err(CliError::usage)?,
        None => BTreeMap::new(),
    };
    let corpus: Corpus = reference_corpus(primings.values(), &entries);

    let needs_runner = completions.iter().any(|c| {
        jobs.get(&c.job_key).map(|j| j.kind).or(args.kind) == Some(robosource_core::ExerciseKind::Programming)
    });
    let runner = if needs_runner {
        Some(build_runner(args.runner, args.mock_script.as_deref(), args.runner_cmd.as_deref(), args.workers)?)
    } else {
        None
    };
    let pipeline = FilterPipeline::new(filter_config(&args), corpus, runner);

    let mut exercises: Vec<GeneratedExercise> = Vec::new();
    let mut reports: Vec<FilterReport> = Vec::new();
    for completion in &completions {
        let job = jobs.get(&completion.job_key);
        let kind = match (job, args.kind) {
            (Some(j), _) => j.kind,
            (None, Some(k)) => k,
            (None, None) => return Err(CliError::failed(format!("no job for completion {}", completion.job_key))),
        };
        let concepts = job.map(|j| j.target_keywords.concepts()).unwrap_or_default();
        let exercise = parse_text(&completion.text, &completion.job_key, kind);
        let report = pipeline.filter(&exercise, concepts).map_err(CliError::failed)?;
        exercises.push(exercise);
        reports.push(report);
    }
    write_jsonl(&args.out, &reports)?;
    if let Some(path) = &args.exercises_out {
        write_jsonl(path, &exercises)?;
    }

    let kept = reports.iter().filter(|r| r.reject_reasons.is_empty()).count();
    let canary = reports.iter().filter(|r| r.canary).count();
    println!("{} exercises: {kept} kept, {} rejected ({canary} canary)", reports.len(), reports.len() - kept);

    if let Some(url) = &args.ingest {
        let client = Client::new(url);
        runtime()?.block_on(async {
            for (exercise, report) in exercises.into_iter().zip(reports) {
                client.ingest(exercise, report).await.map_err(CliError::failed)?;
            }
            Ok::<_, CliError>(())
        })?;
        println!("ingested into {url}");
    }
    Ok(())
}

pub fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let reports: Vec<FilterReport> = read_jsonl(&args.reports)?;
    let summary = summarize(&reports);
    print!("{summary}");
    if let Some(out) = &args.out {
        let mut json = serde_json::to_string_pretty(&summary).map_err(CliError::failed)?;
        json.push('\n');
        std::fs::write(out, json).map_err(|e| CliError::failed(format!("{}: {e}", out.display())))?;
    }
    Ok(())
}

fn generation_setup(args: &ServeArgs) -> Result<Option<GenerationSetup>, CliError> {
    let Some(path) = &args.config else { return Ok(None) };
    let config = GridConfig::load(path).map_err(CliError::usage)?;
    let primings = config.priming_library().map_err(CliError::usage)?;
    let backend_config = backend_config(&config, None, false)?;
    let backend = backend_config.build().map_err(CliError::usage)?;
    let runner = match (&args.mock_script, &args.runner_cmd) {
        (Some(script), _) => Some(build_runner(RunnerKind::Mock, Some(script), None, 1)?),
        (None, Some(cmd)) => Some(build_runner(RunnerKind::Subprocess, None, Some(cmd), 2)?),
        (None, None) => None,
    };
    Ok(Some(GenerationSetup {
        generator: Generator::new(primings.clone(), backend, backend_config.max_parallel_jobs),
        pipeline: FilterPipeline::new(FilterConfig::default(), reference_corpus(primings.values(), &[]), runner),
        primings,
        max_tokens: config.max_tokens,
        model_name: config.model_name,
    }))
}

pub fn serve(args: ServeArgs) -> Result<(), CliError> {
    let setup = generation_setup(&args)?;
    let store = CurationStore::open(&args.log, system_clock()).map_err(CliError::failed)?;
    runtime()?.block_on(async move {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::failed(format!("cannot listen on {addr}: {e}")))?;
        let state = match setup {
            Some(setup) => AppState::with_generation(store, setup),
            None => AppState::new(store),
        };
        println!("listening on http://{}", listener.local_addr().map_err(CliError::failed)?);
        tokio::select! {
            result = robosource_service::serve(listener, state) => result.map_err(CliError::failed),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}
