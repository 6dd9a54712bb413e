//! Execution of untrusted guest programs under resource limits.
//!
//! Every execution gets a fresh temporary working directory, a scrubbed
//! environment, its own process group, and `setrlimit` caps on address space,
//! CPU time, and file size. Standard input is fed from the test input and
//! stdout/stderr are captured up to `max_output` bytes.
//!
//! Scores assume deterministic guest programs; nothing here detects a program
//! whose output varies between runs.

use std::io::{Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gate::Gate;

/// Extra time allowed past `wall_time` before an execution is considered to
/// have escaped containment.
pub const TIMEOUT_GRACE: Duration = Duration::from_secs(1);

const POLL_INTERVAL: Duration = Duration::from_millis(3);
const READER_DRAIN: Duration = Duration::from_millis(500);
const FILE_SIZE_LIMIT: u64 = 64 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SandboxError {
    #[error("interpreter failed to start: {0}")]
    Spawn(String),
    #[error("test suite is empty")]
    EmptySuite,
    #[error("invalid sandbox configuration: {0}")]
    InvalidConfig(String),
    #[error("suite run cancelled")]
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    pub expected_output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub suite_id: String,
    pub cases: Vec<TestCase>,
}

impl TestSuite {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLimits {
    #[serde(with = "secs")]
    pub wall_time: Duration,
    #[serde(with = "secs")]
    pub cpu_time: Duration,
    pub memory_bytes: u64,
    pub max_output_bytes: usize,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        ResourceLimits {
            wall_time: Duration::from_secs(5),
            cpu_time: Duration::from_secs(5),
            memory_bytes: 256 << 20,
            max_output_bytes: 1 << 20,
        }
    }
}

impl ResourceLimits {
    pub fn validate(&self) -> Result<(), SandboxError> {
        let bad = |what: &str| Err(SandboxError::InvalidConfig(format!("{what} must be positive")));
        if self.wall_time.is_zero() {
            return bad("wall_time");
        }
        if self.cpu_time.is_zero() {
            return bad("cpu_time");
        }
        if self.memory_bytes == 0 {
            return bad("memory_bytes");
        }
        if self.max_output_bytes == 0 {
            return bad("max_output_bytes");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    RuntimeError,
    Timeout,
    MemoryExceeded,
    OutputTruncated,
    SpawnFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    pub stdout: String,
    pub stderr: String,
    pub exit_code: Option<i32>,
    /// Terminating signal, when the guest died from one.
    pub signal: Option<i32>,
    pub duration_secs: f64,
}

impl ExecutionOutcome {
    fn spawn_failure(message: String) -> Self {
        ExecutionOutcome {
            status: ExecStatus::SpawnFailure,
            stdout: String::new(),
            stderr: message,
            exit_code: None,
            signal: None,
            duration_secs: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparePolicy {
    Exact,
    /// Ignore trailing whitespace on each line and trailing blank lines.
    #[default]
    TrailingWs,
    /// Compare whitespace-separated token sequences.
    Token,
}

fn trailing_ws_lines(s: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = s.split('\n').map(str::trim_end).collect();
    while lines.last() == Some(&"") {
        lines.pop();
    }
    lines
}

pub fn compare_output(actual: &str, expected: &str, policy: ComparePolicy) -> bool {
    match policy {
        ComparePolicy::Exact => actual == expected,
        ComparePolicy::TrailingWs => trailing_ws_lines(actual) == trailing_ws_lines(expected),
        ComparePolicy::Token => actual.split_whitespace().eq(expected.split_whitespace()),
    }
}

/// Command template for running a guest source file. `{source}` in any
/// argument is replaced with the path of the written source file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interpreter {
    pub argv: Vec<String>,
    #[serde(default = "default_source_name")]
    pub source_name: String,
}

fn default_source_name() -> String {
    "main.py".to_string()
}

pub const SOURCE_PLACEHOLDER: &str = "{source}";
pub const INTERPRETER_ENV: &str = "FEEDBACK_GYM_INTERPRETER";

impl Default for Interpreter {
    fn default() -> Self {
        Interpreter::python3()
    }
}

impl Interpreter {
    pub fn python3() -> Self {
        Interpreter {
            argv: vec!["python3".into(), SOURCE_PLACEHOLDER.into()],
            source_name: default_source_name(),
        }
    }

    /// Parses a whitespace-separated template such as `"python3 -S {source}"`.
    pub fn parse(template: &str) -> Result<Self, SandboxError> {
        let interp = Interpreter {
            argv: template.split_whitespace().map(String::from).collect(),
            source_name: default_source_name(),
        };
        interp.validate()?;
        Ok(interp)
    }

    /// Reads the template from `FEEDBACK_GYM_INTERPRETER` if set.
    pub fn from_env() -> Option<Result<Self, SandboxError>> {
        std::env::var(INTERPRETER_ENV).ok().map(|t| Interpreter::parse(&t))
    }

    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.argv.is_empty() {
            return Err(SandboxError::InvalidConfig("interpreter argv is empty".into()));
        }
        if !self.argv.iter().any(|a| a.contains(SOURCE_PLACEHOLDER)) {
            return Err(SandboxError::InvalidConfig(format!(
                "interpreter argv lacks the {SOURCE_PLACEHOLDER} placeholder"
            )));
        }
        if self.source_name.is_empty() || self.source_name.contains('/') {
            return Err(SandboxError::InvalidConfig("source_name must be a bare file name".into()));
        }
        Ok(())
    }

    fn argv_for(&self, source: &Path) -> Vec<String> {
        let source = source.to_string_lossy();
        self.argv
            .iter()
            .map(|a| a.replace(SOURCE_PLACEHOLDER, &source))
            .collect()
    }
}

/// Cooperative cancellation shared between a suite run and its caller.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

const ENV_ALLOWLIST: &[&str] = &["PATH", "LANG", "LC_ALL", "SYSTEMROOT"];

fn build_command(argv: &[String], workdir: &Path, limits: &ResourceLimits) -> Command {
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .current_dir(workdir)
        .env_clear()
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    for key in ENV_ALLOWLIST {
        if let Ok(v) = std::env::var(key) {
            cmd.env(key, v);
        }
    }
    if std::env::var_os("PATH").is_none() {
        cmd.env("PATH", "/usr/local/bin:/usr/bin:/bin");
    }
    cmd.env("HOME", workdir)
        .env("TMPDIR", workdir)
        .env("PYTHONHASHSEED", "0")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONIOENCODING", "utf-8");

    let mem = limits.memory_bytes as libc::rlim_t;
    let cpu = limits.cpu_time.as_secs_f64().ceil().max(1.0) as libc::rlim_t;
    // SAFETY: the closure only calls async-signal-safe setrlimit.
    unsafe {
        cmd.pre_exec(move || {
            set_limit(libc::RLIMIT_AS, mem, mem)?;
            set_limit(libc::RLIMIT_CPU, cpu, cpu + 1)?;
            set_limit(libc::RLIMIT_FSIZE, FILE_SIZE_LIMIT as libc::rlim_t, FILE_SIZE_LIMIT as libc::rlim_t)?;
            set_limit(libc::RLIMIT_CORE, 0, 0)?;
            Ok(())
        });
    }
    cmd
}

fn set_limit(resource: libc::__rlimit_resource_t, soft: libc::rlim_t, hard: libc::rlim_t) -> std::io::Result<()> {
    let lim = libc::rlimit {
        rlim_cur: soft,
        rlim_max: hard,
    };
    // SAFETY: plain syscall on a stack value.
    if unsafe { libc::setrlimit(resource, &lim) } != 0 {
        return Err(std::io::Error::last_os_error());
    }
    Ok(())
}

fn kill_group(child: &Child) {
    // SAFETY: negative pid targets the process group created for this child.
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
}

struct CappedReader {
    buf: Arc<Mutex<Vec<u8>>>,
    done: mpsc::Receiver<()>,
}

fn spawn_reader<R: Read + Send + 'static>(mut src: R, cap: usize, overflow: Arc<AtomicBool>) -> CappedReader {
    let buf = Arc::new(Mutex::new(Vec::new()));
    let (tx, done) = mpsc::channel();
    let sink = Arc::clone(&buf);
    thread::spawn(move || {
        let mut chunk = [0u8; 8192];
        loop {
            match src.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let mut b = sink.lock().unwrap();
                    let room = cap.saturating_sub(b.len());
                    b.extend_from_slice(&chunk[..n.min(room)]);
                    if n > room {
                        overflow.store(true, Ordering::SeqCst);
                        break;
                    }
                }
            }
        }
        let _ = tx.send(());
    });
    CappedReader { buf, done }
}

impl CappedReader {
    fn finish(self) -> String {
        let _ = self.done.recv_timeout(READER_DRAIN);
        let bytes = std::mem::take(&mut *self.buf.lock().unwrap());
        String::from_utf8_lossy(&bytes).into_owned()
    }
}

fn looks_like_oom(stderr: &str) -> bool {
    stderr.contains("MemoryError") || stderr.contains("Cannot allocate memory")
}

/// Runs one program on one input. Returns `Err` only when cancelled.
fn execute(
    code: &str,
    input: &str,
    limits: &ResourceLimits,
    interpreter: &Interpreter,
    cancel: &[&CancelToken],
) -> Result<ExecutionOutcome, SandboxError> {
    let workdir = match tempfile::Builder::new().prefix("fgym-").tempdir() {
        Ok(d) => d,
        Err(e) => return Ok(ExecutionOutcome::spawn_failure(format!("workdir: {e}"))),
    };
    let source = workdir.path().join(&interpreter.source_name);
    if let Err(e) = std::fs::write(&source, code) {
        return Ok(ExecutionOutcome::spawn_failure(format!("writing source: {e}")));
    }
    let argv = interpreter.argv_for(&source);
    let mut child = match build_command(&argv, workdir.path(), limits).spawn() {
        Ok(c) => c,
        Err(e) => return Ok(ExecutionOutcome::spawn_failure(format!("{}: {e}", argv[0]))),
    };
    let start = Instant::now();

    let mut stdin = child.stdin.take().expect("piped stdin");
    let input_bytes = input.as_bytes().to_vec();
    thread::spawn(move || {
        let _ = stdin.write_all(&input_bytes);
    });
    let overflow = Arc::new(AtomicBool::new(false));
    let out = spawn_reader(child.stdout.take().expect("piped stdout"), limits.max_output_bytes, Arc::clone(&overflow));
    let err = spawn_reader(child.stderr.take().expect("piped stderr"), limits.max_output_bytes, Arc::new(AtomicBool::new(false)));

    let mut timed_out = false;
    let mut cancelled = false;
    let mut truncated = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(s)) => break Some(s),
            Ok(None) => {}
            Err(_) => break None,
        }
        if start.elapsed() >= limits.wall_time {
            timed_out = true;
        } else if overflow.load(Ordering::SeqCst) {
            truncated = true;
        } else if cancel.iter().any(|t| t.is_cancelled()) {
            cancelled = true;
        } else {
            thread::sleep(POLL_INTERVAL);
            continue;
        }
        kill_group(&child);
        break child.wait().ok();
    };
    let duration = start.elapsed();
    // Reap anything the guest left running in its group.
    kill_group(&child);
    if cancelled {
        return Err(SandboxError::Cancelled);
    }
    let stdout = out.finish();
    let stderr = err.finish();
    truncated |= overflow.load(Ordering::SeqCst);

    let exit_code = status.and_then(|s| s.code());
    let signal = status.and_then(|s| s.signal());
    let status = if timed_out || signal == Some(libc::SIGXCPU) {
        ExecStatus::Timeout
    } else if truncated {
        ExecStatus::OutputTruncated
    } else if exit_code == Some(0) {
        ExecStatus::Ok
    } else if looks_like_oom(&stderr) {
        ExecStatus::MemoryExceeded
    } else {
        ExecStatus::RuntimeError
    };
    Ok(ExecutionOutcome {
        status,
        stdout,
        stderr,
        exit_code,
        signal,
        duration_secs: duration.as_secs_f64(),
    })
}

/// Runs `code` once with `input` on stdin in a fresh working directory.
pub fn run_program(code: &str, input: &str, limits: &ResourceLimits, interpreter: &Interpreter) -> ExecutionOutcome {
    execute(code, input, limits, interpreter, &[]).expect("uncancellable run")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub index: usize,
    pub outcome: ExecutionOutcome,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub per_case: Vec<CaseResult>,
    pub pass_count: usize,
    pub total: usize,
    pub score: f64,
}

impl EvalResult {
    fn from_cases(per_case: Vec<CaseResult>) -> Self {
        let pass_count = per_case.iter().filter(|c| c.passed).count();
        let total = per_case.len();
        EvalResult {
            per_case,
            pass_count,
            total,
            score: pass_count as f64 / total as f64,
        }
    }

    pub fn pass_all(&self) -> bool {
        self.pass_count == self.total
    }

    /// `'1'`/`'0'` per case in case order.
    pub fn bitmap(&self) -> String {
        self.per_case.iter().map(|c| if c.passed { '1' } else { '0' }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    pub interpreter: Interpreter,
    pub limits: ResourceLimits,
    pub policy: ComparePolicy,
    /// Worker threads per suite run.
    pub workers: usize,
    /// Guest processes allowed to run at once across all callers.
    pub max_processes: usize,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        let cpus = thread::available_parallelism().map(|n| n.get()).unwrap_or(4);
        SandboxConfig {
            interpreter: Interpreter::default(),
            limits: ResourceLimits::default(),
            policy: ComparePolicy::default(),
            workers: cpus.min(8),
            max_processes: cpus,
        }
    }
}

impl SandboxConfig {
    pub fn validate(&self) -> Result<(), SandboxError> {
        self.interpreter.validate()?;
        self.limits.validate()?;
        if self.workers == 0 {
            return Err(SandboxError::InvalidConfig("workers must be at least 1".into()));
        }
        if self.max_processes == 0 {
            return Err(SandboxError::InvalidConfig("max_processes must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxStats {
    pub running: usize,
    pub waiting: usize,
    pub completed: usize,
    pub capacity: usize,
}

/// Shareable executor. Guest processes beyond `max_processes` block until a
/// slot frees up.
#[derive(Debug)]
pub struct Sandbox {
    config: SandboxConfig,
    slots: Gate,
}

impl Sandbox {
    pub fn new(config: SandboxConfig) -> Result<Self, SandboxError> {
        config.validate()?;
        let slots = Gate::new(config.max_processes);
        Ok(Sandbox { config, slots })
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    pub fn stats(&self) -> SandboxStats {
        SandboxStats {
            running: self.slots.active(),
            waiting: self.slots.waiting(),
            completed: self.slots.completed(),
            capacity: self.slots.capacity(),
        }
    }

    fn execute_gated(&self, code: &str, input: &str, cancel: &[&CancelToken]) -> Result<ExecutionOutcome, SandboxError> {
        let _slot = self.slots.acquire();
        if cancel.iter().any(|t| t.is_cancelled()) {
            return Err(SandboxError::Cancelled);
        }
        execute(code, input, &self.config.limits, &self.config.interpreter, cancel)
    }

    pub fn run_program(&self, code: &str, input: &str) -> ExecutionOutcome {
        self.execute_gated(code, input, &[]).expect("uncancellable run")
    }

    pub fn run_suite(&self, code: &str, suite: &TestSuite) -> Result<EvalResult, SandboxError> {
        self.run_suite_with(code, suite, self.config.policy, self.config.workers, &CancelToken::new())
    }

    /// Runs every case in its own process on up to `workers` threads. The
    /// result is independent of `workers`; `per_case` is in case order.
    pub fn run_suite_with(
        &self,
        code: &str,
        suite: &TestSuite,
        policy: ComparePolicy,
        workers: usize,
        cancel: &CancelToken,
    ) -> Result<EvalResult, SandboxError> {
        if suite.is_empty() {
            return Err(SandboxError::EmptySuite);
        }
        if workers == 0 {
            return Err(SandboxError::InvalidConfig("workers must be at least 1".into()));
        }
        let next = AtomicUsize::new(0);
        let failure: Mutex<Option<SandboxError>> = Mutex::new(None);
        let results: Mutex<Vec<Option<CaseResult>>> = Mutex::new(vec![None; suite.len()]);
        // Stops sibling workers on the first spawn failure without touching
        // the caller's token.
        let abort = CancelToken::new();
        thread::scope(|scope| {
            for _ in 0..workers.min(suite.len()) {
                scope.spawn(|| loop {
                    if abort.is_cancelled() || cancel.is_cancelled() {
                        break;
                    }
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    let Some(case) = suite.cases.get(index) else { break };
                    let outcome = match self.execute_gated(code, &case.input, &[cancel, &abort]) {
                        Ok(o) => o,
                        Err(SandboxError::Cancelled) => break,
                        Err(e) => {
                            failure.lock().unwrap().get_or_insert(e);
                            abort.cancel();
                            break;
                        }
                    };
                    if outcome.status == ExecStatus::SpawnFailure {
                        failure
                            .lock()
                            .unwrap()
                            .get_or_insert(SandboxError::Spawn(outcome.stderr.clone()));
                        abort.cancel();
                        break;
                    }
                    let passed = outcome.status == ExecStatus::Ok
                        && compare_output(&outcome.stdout, &case.expected_output, policy);
                    results.lock().unwrap()[index] = Some(CaseResult { index, outcome, passed });
                });
            }
        });
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        if cancel.is_cancelled() {
            return Err(SandboxError::Cancelled);
        }
        let per_case = results
            .into_inner()
            .unwrap()
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or(SandboxError::Cancelled)?;
        Ok(EvalResult::from_cases(per_case))
    }

    /// Runs `code` once per input on the worker pool; outcomes are in input
    /// order. The first spawn failure aborts the batch.
    pub fn run_many(&self, code: &str, inputs: &[String]) -> Result<Vec<ExecutionOutcome>, SandboxError> {
        let next = AtomicUsize::new(0);
        let abort = CancelToken::new();
        let failure: Mutex<Option<SandboxError>> = Mutex::new(None);
        let results: Mutex<Vec<Option<ExecutionOutcome>>> = Mutex::new(vec![None; inputs.len()]);
        thread::scope(|scope| {
            for _ in 0..self.config.workers.min(inputs.len()) {
                scope.spawn(|| loop {
                    if abort.is_cancelled() {
                        break;
                    }
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    let Some(input) = inputs.get(index) else { break };
                    match self.execute_gated(code, input, &[&abort]) {
                        Ok(o) if o.status == ExecStatus::SpawnFailure => {
                            failure.lock().unwrap().get_or_insert(SandboxError::Spawn(o.stderr));
                            abort.cancel();
                        }
                        Ok(o) => results.lock().unwrap()[index] = Some(o),
                        Err(_) => break,
                    }
                });
            }
        });
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        Ok(results
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|o| o.expect("every input executed"))
            .collect())
    }

    /// Runs a trivial echo program and checks the round trip.
    pub fn canary(&self) -> Result<(), SandboxError> {
        const PROBE: &str = "canary-7f3a\n";
        let out = self.run_program("import sys\nsys.stdout.write(sys.stdin.read())\n", PROBE);
        match out.status {
            ExecStatus::Ok if out.stdout == PROBE => Ok(()),
            ExecStatus::SpawnFailure => Err(SandboxError::Spawn(out.stderr)),
            other => Err(SandboxError::InvalidConfig(format!(
                "canary returned {other:?}: stdout={:?} stderr={:?}",
                out.stdout, out.stderr
            ))),
        }
    }
}
