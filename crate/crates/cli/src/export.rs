use std::io::Write;

use robosource_client::Client;
use robosource_core::curation::{read_log, rebuild, StatusFilter};
use robosource_core::{ExerciseRecord, GeneratedExercise};

use crate::{CliError, ExportArgs, ExportFormat, ExportStatus};

fn records(args: &ExportArgs, status: StatusFilter) -> Result<Vec<ExerciseRecord>, CliError> {
    if let Some(url) = &args.url {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(CliError::failed)?;
        return rt.block_on(Client::new(url).list(Some(status), None, None)).map_err(CliError::failed);
    }
    let path = args.log.as_ref().expect("clap requires --url or --log");
    let state = rebuild(&read_log(path).map_err(CliError::failed)?).map_err(CliError::failed)?;
    Ok(state.list(Some(status), None, None).into_iter().cloned().collect())
}

fn write_csv(out: impl Write, exercises: &[GeneratedExercise]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "kind", "statement", "solution", "tests"]).map_err(CliError::failed)?;
    for ex in exercises {
        let kind = ex.kind.to_string();
        let field = |s: &Option<String>| s.clone().unwrap_or_default();
        w.write_record([ex.id.clone(), kind, field(&ex.statement), field(&ex.solution), field(&ex.tests)])
            .map_err(CliError::failed)?;
    }
    w.flush().map_err(CliError::failed)
}

fn write_jsonl(mut out: impl Write, exercises: &[GeneratedExercise]) -> Result<(), CliError> {
    for ex in exercises {
        serde_json::to_writer(&mut out, ex).map_err(CliError::failed)?;
        out.write_all(b"\n").map_err(CliError::failed)?;
    }
    out.flush().map_err(CliError::failed)
}

/// Writes the post-edit text of accepted (or canary) exercises.
pub fn export(args: ExportArgs) -> Result<(), CliError> {
    let status = match args.status {
        ExportStatus::Accepted => StatusFilter::Accepted,
        ExportStatus::Canary => StatusFilter::Canary,
    };
    let exercises: Vec<GeneratedExercise> = records(&args, status)?.iter().map(|r| r.effective_exercise()).collect();
    let out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(
            std::fs::File::create(path).map_err(|e| CliError::failed(format!("{}: {e}", path.display())))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    };
    match args.format {
        ExportFormat::Jsonl => write_jsonl(out, &exercises),
        ExportFormat::Csv => write_csv(out, &exercises),
    }
}
