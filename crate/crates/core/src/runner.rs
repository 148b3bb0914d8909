//! Runner backends for executing exercise code.
//!
//! The wire protocol is JSON lines: one [`RunnerRequest`] per line on the
//! runner's stdin, one [`RunnerResponse`] per line on its stdout. The child
//! exits when its stdin closes. Anything on stdout that is not a response
//! object is a protocol violation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use crossbeam_channel::{Receiver, Sender};
use serde::{Deserialize, Serialize};

use crate::error::RunnerError;

pub const DEFAULT_TIMEOUT_MS: u64 = 5_000;
pub const MAX_TIMEOUT_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunnerRequest {
    pub request_id: String,
    pub solution_code: String,
    #[serde(default)]
    pub test_code: Option<String>,
    pub timeout_ms: u64,
    pub analyze_concepts: bool,
}

impl RunnerRequest {
    pub fn validate(&self) -> Result<(), RunnerError> {
        if self.timeout_ms == 0 || self.timeout_ms > MAX_TIMEOUT_MS {
            return Err(RunnerError::InvalidRequest(format!(
                "timeout_ms {} outside 1..={MAX_TIMEOUT_MS}",
                self.timeout_ms
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerResponse {
    pub request_id: String,
    pub solution_runnable: bool,
    #[serde(default)]
    pub solution_error: Option<String>,
    pub tests_collected: u32,
    pub tests_passed: u32,
    pub tests_failed: u32,
    #[serde(default)]
    pub test_error: Option<String>,
    #[serde(default)]
    pub executable_lines: Vec<u32>,
    #[serde(default)]
    pub executed_lines: Vec<u32>,
    #[serde(default)]
    pub coverage_fraction: Option<f64>,
    /// Empty when concept analysis was not requested.
    #[serde(default)]
    pub concepts: BTreeMap<String, bool>,
    #[serde(default)]
    pub timed_out: bool,
}

impl RunnerResponse {
    /// Checks the protocol invariants of a response.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let executable: BTreeSet<u32> = self.executable_lines.iter().copied().collect();
        let executed: BTreeSet<u32> = self.executed_lines.iter().copied().collect();
        if !executed.is_subset(&executable) {
            out.push("executed_lines is not a subset of executable_lines".to_string());
        }
        match (executable.is_empty(), self.coverage_fraction) {
            (true, Some(_)) => out.push("coverage_fraction present without executable lines".into()),
            (false, None) => out.push("coverage_fraction missing".into()),
            (false, Some(c)) => {
                let expected = executed.len() as f64 / executable.len() as f64;
                if (c - expected).abs() > 1e-9 {
                    out.push(format!("coverage_fraction {c} does not match {expected}"));
                }
            }
            (true, None) => {}
        }
        if self.tests_passed + self.tests_failed > self.tests_collected {
            out.push("tests_passed + tests_failed exceeds tests_collected".into());
        }
        out
    }

    /// Coverage line sets with the given executable/executed counts, lines
    /// numbered from 1.
    pub fn with_coverage(mut self, executable: u32, executed: u32) -> Self {
        self.executable_lines = (1..=executable).collect();
        self.executed_lines = (1..=executed.min(executable)).collect();
        self.coverage_fraction =
            (executable > 0).then(|| self.executed_lines.len() as f64 / executable as f64);
        self
    }

    /// A response for code that ran, with `passed` of `collected` tests passing.
    pub fn ran(request_id: impl Into<String>, collected: u32, passed: u32) -> Self {
        RunnerResponse {
            request_id: request_id.into(),
            solution_runnable: true,
            solution_error: None,
            tests_collected: collected,
            tests_passed: passed,
            tests_failed: collected - passed,
            test_error: None,
            executable_lines: Vec::new(),
            executed_lines: Vec::new(),
            coverage_fraction: None,
            concepts: BTreeMap::new(),
            timed_out: false,
        }
    }

    pub fn crashed(request_id: impl Into<String>, error: impl Into<String>) -> Self {
        RunnerResponse {
            solution_runnable: false,
            solution_error: Some(error.into()),
            ..RunnerResponse::ran(request_id, 0, 0)
        }
    }
}

/// Executes exercise code. Exercise failures are data in the response; an
/// `Err` means the backend itself failed.
pub trait RunnerBackend: Send + Sync {
    fn run(&self, request: &RunnerRequest) -> Result<RunnerResponse, RunnerError>;
}

/// Validates request and response around a backend call.
pub fn run_checked(backend: &dyn RunnerBackend, request: &RunnerRequest) -> Result<RunnerResponse, RunnerError> {
    request.validate()?;
    let response = backend.run(request)?;
    if response.request_id != request.request_id {
        return Err(RunnerError::ProtocolViolation(format!(
            "response for {:?} answered request {:?}",
            response.request_id, request.request_id
        )));
    }
    if let Some(v) = response.violations().into_iter().next() {
        return Err(RunnerError::ProtocolViolation(v));
    }
    Ok(response)
}

/// Replays canned responses keyed by request id.
#[derive(Debug, Clone, Default)]
pub struct ScriptedMockRunner {
    responses: HashMap<String, RunnerResponse>,
}

impl ScriptedMockRunner {
    pub fn new(responses: impl IntoIterator<Item = RunnerResponse>) -> Self {
        ScriptedMockRunner {
            responses: responses.into_iter().map(|r| (r.request_id.clone(), r)).collect(),
        }
    }

    pub fn insert(&mut self, response: RunnerResponse) {
        self.responses.insert(response.request_id.clone(), response);
    }

    /// Loads a JSONL script of responses.
    pub fn from_jsonl(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunnerError::RunnerFailure(format!("{}: {e}", path.display())))?;
        let mut runner = ScriptedMockRunner::default();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let response: RunnerResponse = serde_json::from_str(line).map_err(|e| {
                RunnerError::RunnerFailure(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            runner.insert(response);
        }
        Ok(runner)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl RunnerBackend for ScriptedMockRunner {
    fn run(&self, request: &RunnerRequest) -> Result<RunnerResponse, RunnerError> {
        self.responses
            .get(&request.request_id)
            .cloned()
            .ok_or_else(|| RunnerError::RunnerFailure(format!("no scripted response for {}", request.request_id)))
    }
}

struct RunnerProcess {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl RunnerProcess {
    fn spawn(program: &str, args: &[String]) -> Result<Self, RunnerError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| RunnerError::RunnerFailure(format!("spawn {program}: {e}")))?;
        let stdin = child.stdin.take().ok_or_else(|| RunnerError::RunnerFailure("runner stdin unavailable".into()))?;
        let stdout =
            child.stdout.take().ok_or_else(|| RunnerError::RunnerFailure("runner stdout unavailable".into()))?;
        Ok(RunnerProcess { child, stdin, stdout: BufReader::new(stdout) })
    }

    fn exchange(&mut self, request: &RunnerRequest) -> Result<RunnerResponse, RunnerError> {
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| RunnerError::RunnerFailure(format!("write to runner: {e}")))?;

        let mut reply = String::new();
        let n = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| RunnerError::RunnerFailure(format!("read from runner: {e}")))?;
        if n == 0 {
            return Err(RunnerError::RunnerFailure("runner exited before responding".into()));
        }
        serde_json::from_str(reply.trim_end())
            .map_err(|e| RunnerError::ProtocolViolation(format!("non-JSON line from runner ({e}): {}", reply.trim_end())))
    }
}

impl Drop for RunnerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Client for runner child processes speaking the JSON line protocol.
///
/// Keeps a bounded pool of processes; a call blocks until one is idle. A
/// process that misbehaves is discarded and replaced on the next call.
pub struct SubprocessRunner {
    program: String,
    args: Vec<String>,
    idle_tx: Sender<Option<RunnerProcess>>,
    idle_rx: Receiver<Option<RunnerProcess>>,
}

impl SubprocessRunner {
    pub fn new(program: impl Into<String>, args: Vec<String>, workers: usize) -> Self {
        let workers = workers.max(1);
        let (idle_tx, idle_rx) = crossbeam_channel::bounded(workers);
        for _ in 0..workers {
            idle_tx.send(None).expect("channel has capacity");
        }
        SubprocessRunner { program: program.into(), args, idle_tx, idle_rx }
    }

    /// Splits a shell-style command line on whitespace.
    pub fn from_command_line(command: &str, workers: usize) -> Result<Self, RunnerError> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts.next().ok_or_else(|| RunnerError::RunnerFailure("empty runner command".into()))?;
        Ok(SubprocessRunner::new(program, parts.collect(), workers))
    }
}

impl RunnerBackend for SubprocessRunner {
    fn run(&self, request: &RunnerRequest) -> Result<RunnerResponse, RunnerError> {
        let slot = self.idle_rx.recv().expect("pool sender lives in self");
        let mut process = match slot {
            Some(p) => p,
            None => match RunnerProcess::spawn(&self.program, &self.args) {
                Ok(p) => p,
                Err(e) => {
                    let _ = self.idle_tx.send(None);
                    return Err(e);
                }
            },
        };
        let result = process.exchange(request);
        let keep = result.is_ok();
        let _ = self.idle_tx.send(keep.then_some(process));
        result
    }
}
