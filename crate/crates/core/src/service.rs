//! HTTP front end for the reward environment.
//!
//! | method | path              | body                    |
//! |--------|-------------------|-------------------------|
//! | GET    | `/health`         |                         |
//! | POST   | `/v1/score`       | `RewardRequest`         |
//! | POST   | `/v1/batch`       | `{"requests": [...]}`   |
//! | GET    | `/v1/jobs/{id}`   |                         |
//! | POST   | `/v1/pass-at-1`   | `{"results": [[bool]]}` |
//! | GET    | `/v1/stats`       |                         |
//!
//! Errors are `{"error": {"code", "message"}}` with `code` one of
//! `invalid_request`, `not_found`, `upstream_model_error`, `sandbox_error`,
//! `capacity`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{oneshot, Semaphore};

use crate::config::{ConfigError, EnvConfig, ServiceConfig};
use crate::data::DataError;
use crate::reward::{pass_at_1, AuditLog, ProblemSet, RewardEnv, RewardError, RewardRequest, RewardResponse};
use crate::sandbox::{Sandbox, SandboxError, SandboxStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    InvalidRequest,
    NotFound,
    UpstreamModelError,
    SandboxError,
    Capacity,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::InvalidRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::UpstreamModelError => StatusCode::BAD_GATEWAY,
            ErrorCode::SandboxError => StatusCode::INTERNAL_SERVER_ERROR,
            ErrorCode::Capacity => StatusCode::PAYLOAD_TOO_LARGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ApiError,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
        }
    }
}

impl From<&RewardError> for ApiError {
    fn from(e: &RewardError) -> Self {
        let code = match e {
            RewardError::UnknownProblem(_) | RewardError::UnknownSuite(_) | RewardError::UnknownEditor(_) => {
                ErrorCode::NotFound
            }
            RewardError::EmptySuite(_) => ErrorCode::InvalidRequest,
            RewardError::Editor(_) => ErrorCode::UpstreamModelError,
            RewardError::Sandbox(_) => ErrorCode::SandboxError,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(ErrorCode::InvalidRequest, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(ErrorBody { error: self })).into_response()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Score,
    BatchEval,
    PassAt1,
    Audit,
    Synthesize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn can_move_to(self, next: JobStatus) -> bool {
        matches!(
            (self, next),
            (JobStatus::Queued, JobStatus::Running) | (JobStatus::Running, JobStatus::Done | JobStatus::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<RewardResponse>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job_id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    pub payload: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JobError {
    #[error("unknown job {0:?}")]
    Unknown(String),
    #[error("job {id}: illegal transition {from:?} -> {to:?}")]
    IllegalTransition { id: String, from: JobStatus, to: JobStatus },
}

#[derive(Debug, Serialize)]
struct JobEvent<'a> {
    job_id: &'a str,
    kind: JobKind,
    status: JobStatus,
}

/// In-memory job table with an optional append-only log of transitions.
#[derive(Debug, Default)]
pub struct JobStore {
    jobs: Mutex<HashMap<String, JobSpec>>,
    next_id: AtomicU64,
    log: Option<Mutex<File>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobCounts {
    pub queued: usize,
    pub running: usize,
    pub done: usize,
    pub failed: usize,
}

impl JobStore {
    pub fn new() -> Self {
        JobStore::default()
    }

    pub fn with_log(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JobStore {
            log: Some(Mutex::new(file)),
            ..JobStore::default()
        })
    }

    fn record(&self, job: &JobSpec) {
        if let Some(log) = &self.log {
            let event = JobEvent {
                job_id: &job.job_id,
                kind: job.kind,
                status: job.status,
            };
            let mut line = serde_json::to_string(&event).expect("event serializes");
            line.push('\n');
            if let Err(e) = log.lock().unwrap().write_all(line.as_bytes()) {
                tracing::warn!(error = %e, "job log write failed");
            }
        }
    }

    pub fn submit(&self, kind: JobKind, payload: serde_json::Value) -> String {
        let n = self.next_id.fetch_add(1, Ordering::SeqCst) + 1;
        let job_id = format!("job-{n:06}");
        let job = JobSpec {
            job_id: job_id.clone(),
            kind,
            status: JobStatus::Queued,
            payload,
            result: None,
            error: None,
        };
        self.record(&job);
        self.jobs.lock().unwrap().insert(job_id.clone(), job);
        job_id
    }

    pub fn get(&self, id: &str) -> Option<JobSpec> {
        self.jobs.lock().unwrap().get(id).cloned()
    }

    fn update(&self, id: &str, to: JobStatus, apply: impl FnOnce(&mut JobSpec)) -> Result<(), JobError> {
        let mut jobs = self.jobs.lock().unwrap();
        let job = jobs.get_mut(id).ok_or_else(|| JobError::Unknown(id.to_string()))?;
        if !job.status.can_move_to(to) {
            return Err(JobError::IllegalTransition {
                id: id.to_string(),
                from: job.status,
                to,
            });
        }
        job.status = to;
        apply(job);
        self.record(job);
        Ok(())
    }

    pub fn start(&self, id: &str) -> Result<(), JobError> {
        self.update(id, JobStatus::Running, |_| {})
    }

    pub fn finish(&self, id: &str, result: serde_json::Value) -> Result<(), JobError> {
        self.update(id, JobStatus::Done, |j| j.result = Some(result))
    }

    pub fn fail(&self, id: &str, error: impl Into<String>) -> Result<(), JobError> {
        let error = error.into();
        self.update(id, JobStatus::Failed, |j| j.error = Some(error))
    }

    pub fn counts(&self) -> JobCounts {
        let mut c = JobCounts::default();
        for j in self.jobs.lock().unwrap().values() {
            match j.status {
                JobStatus::Queued => c.queued += 1,
                JobStatus::Running => c.running += 1,
                JobStatus::Done => c.done += 1,
                JobStatus::Failed => c.failed += 1,
            }
        }
        c
    }
}

/// Shared state behind the router.
pub struct AppState {
    pub env: RewardEnv,
    pub jobs: JobStore,
    pub limits: ServiceConfig,
    ready: AtomicBool,
    in_flight: Arc<Semaphore>,
    waiting: AtomicUsize,
    active: AtomicUsize,
}

impl AppState {
    pub fn new(env: RewardEnv, limits: ServiceConfig, jobs: JobStore) -> Self {
        let permits = limits.max_in_flight.max(1);
        AppState {
            env,
            jobs,
            limits,
            ready: AtomicBool::new(false),
            in_flight: Arc::new(Semaphore::new(permits)),
            waiting: AtomicUsize::new(0),
            active: AtomicUsize::new(0),
        }
    }

    pub fn is_ready(&self) -> bool {
        self.ready.load(Ordering::SeqCst)
    }

    /// Runs the sandbox canary and opens readiness on success.
    pub fn run_canary(&self) -> Result<(), SandboxError> {
        self.env.sandbox.canary()?;
        self.ready.store(true, Ordering::SeqCst);
        Ok(())
    }

    /// Scores one request once a slot is free. Requests over the in-flight
    /// limit wait here instead of being rejected.
    pub async fn score(self: &Arc<Self>, request: RewardRequest) -> Result<RewardResponse, ApiError> {
        self.waiting.fetch_add(1, Ordering::SeqCst);
        let permit = self.in_flight.clone().acquire_owned().await.expect("semaphore never closed");
        self.waiting.fetch_sub(1, Ordering::SeqCst);
        self.active.fetch_add(1, Ordering::SeqCst);
        let state = self.clone();
        let joined = tokio::task::spawn_blocking(move || {
            let _permit = permit;
            state.env.score(&request)
        })
        .await;
        self.active.fetch_sub(1, Ordering::SeqCst);
        match joined {
            Ok(r) => r.map_err(|e| ApiError::from(&e)),
            Err(e) => Err(ApiError::new(ErrorCode::SandboxError, format!("scoring task failed: {e}"))),
        }
    }

    pub fn stats(&self) -> ServiceStats {
        ServiceStats {
            ready: self.is_ready(),
            requests_active: self.active.load(Ordering::SeqCst),
            requests_waiting: self.waiting.load(Ordering::SeqCst),
            max_in_flight: self.limits.max_in_flight,
            sandbox: self.env.sandbox.stats(),
            jobs: self.jobs.counts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceStats {
    pub ready: bool,
    pub requests_active: usize,
    /// Score requests queued behind the in-flight limit.
    pub requests_waiting: usize,
    pub max_in_flight: usize,
    pub sandbox: SandboxStats,
    pub jobs: JobCounts,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchRequest {
    pub requests: Vec<RewardRequest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobHandle {
    pub job_id: String,
    pub status: JobStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassAt1Request {
    pub results: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAt1Response {
    pub pass_at_1: f64,
    pub problems: usize,
}

type Shared = Arc<AppState>;

async fn health(State(state): State<Shared>) -> Response {
    if state.is_ready() {
        Json(serde_json::json!({"status": "ready"})).into_response()
    } else {
        let body = ErrorBody {
            error: ApiError::new(ErrorCode::SandboxError, "sandbox self-test has not passed"),
        };
        (StatusCode::SERVICE_UNAVAILABLE, Json(body)).into_response()
    }
}

async fn score(
    State(state): State<Shared>,
    body: Result<Json<RewardRequest>, JsonRejection>,
) -> Result<Json<RewardResponse>, ApiError> {
    let Json(request) = body?;
    state.score(request).await.map(Json)
}

async fn run_batch(state: Shared, job_id: String, requests: Vec<RewardRequest>) {
    if let Err(e) = state.jobs.start(&job_id) {
        tracing::error!(error = %e, "batch job could not start");
        return;
    }
    let mut set = tokio::task::JoinSet::new();
    for (index, request) in requests.into_iter().enumerate() {
        let state = state.clone();
        set.spawn(async move { (index, state.score(request).await) });
    }
    let mut items = Vec::new();
    while let Some(joined) = set.join_next().await {
        match joined {
            Ok((index, Ok(response))) => items.push(BatchItem {
                index,
                response: Some(response),
                error: None,
            }),
            Ok((index, Err(error))) => items.push(BatchItem {
                index,
                response: None,
                error: Some(error),
            }),
            Err(e) => {
                let _ = state.jobs.fail(&job_id, format!("batch task failed: {e}"));
                return;
            }
        }
    }
    items.sort_by_key(|i| i.index);
    let result = serde_json::to_value(&items).expect("items serialize");
    if let Err(e) = state.jobs.finish(&job_id, result) {
        tracing::error!(error = %e, "batch job could not finish");
    }
}

async fn batch(
    State(state): State<Shared>,
    body: Result<Json<BatchRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<JobHandle>), ApiError> {
    let Json(batch) = body?;
    if batch.requests.is_empty() {
        return Err(ApiError::new(ErrorCode::InvalidRequest, "batch has no requests"));
    }
    if batch.requests.len() > state.limits.max_batch {
        return Err(ApiError::new(
            ErrorCode::Capacity,
            format!("batch of {} exceeds the cap of {}", batch.requests.len(), state.limits.max_batch),
        ));
    }
    let payload = serde_json::json!({ "requests": batch.requests.len() });
    let job_id = state.jobs.submit(JobKind::BatchEval, payload);
    tokio::spawn(run_batch(state.clone(), job_id.clone(), batch.requests));
    Ok((
        StatusCode::ACCEPTED,
        Json(JobHandle {
            job_id,
            status: JobStatus::Queued,
        }),
    ))
}

async fn job(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<JobSpec>, ApiError> {
    state
        .jobs
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("unknown job {id:?}")))
}

async fn pass_at_1_handler(
    body: Result<Json<PassAt1Request>, JsonRejection>,
) -> Result<Json<PassAt1Response>, ApiError> {
    let Json(req) = body?;
    let value = pass_at_1(&req.results).map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.to_string()))?;
    Ok(Json(PassAt1Response {
        pass_at_1: value,
        problems: req.results.len(),
    }))
}

async fn stats(State(state): State<Shared>) -> Json<ServiceStats> {
    Json(state.stats())
}

async fn fallback() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such route")
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/score", post(score))
        .route("/v1/batch", post(batch))
        .route("/v1/jobs/{id}", get(job))
        .route("/v1/pass-at-1", post(pass_at_1_handler))
        .route("/v1/stats", get(stats))
        .fallback(fallback)
        .with_state(state)
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Builds the reward environment and service state described by `config`.
pub fn build_state(config: &EnvConfig) -> Result<AppState, ServiceError> {
    let dir = config.corpus_dir();
    let problems = dir.problems()?;
    let editors = config.build_registry(&problems)?;
    let sandbox = Arc::new(Sandbox::new(config.sandbox.clone())?);
    let mut env = RewardEnv::new(ProblemSet::new(problems), editors, sandbox);
    env.editor_params = config.editor_params.clone();
    if let Some(path) = &config.paths.audit_log {
        env.audit = Some(Arc::new(AuditLog::open(path)?));
    }
    let jobs = match &config.paths.job_log {
        Some(path) => JobStore::with_log(path)?,
        None => JobStore::new(),
    };
    Ok(AppState::new(env, config.service.clone(), jobs))
}

/// Waits (bounded) for running jobs after the listener stops.
async fn drain(state: &AppState) {
    for _ in 0..600 {
        let c = state.jobs.counts();
        if c.queued + c.running == 0 {
            return;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    tracing::warn!("shutting down with jobs still running");
}

/// Serves on `listener` until `shutdown` resolves. When `canary` is set the
/// sandbox self-test runs in the background and `/health` turns ready once
/// it passes.
pub async fn run(
    listener: tokio::net::TcpListener,
    state: Shared,
    canary: bool,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    if canary {
        let s = state.clone();
        tokio::task::spawn_blocking(move || match s.run_canary() {
            Ok(()) => tracing::info!("sandbox canary passed; ready"),
            Err(e) => tracing::error!(error = %e, "sandbox canary failed; staying unready"),
        });
    }
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    drain(&state).await;
    Ok(())
}

/// Runs the service described by `config` until Ctrl-C.
pub fn serve(config: &EnvConfig) -> Result<(), ServiceError> {
    let state = Arc::new(build_state(config)?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.service.bind)
            .await
            .map_err(|source| ServiceError::Bind {
                addr: config.service.bind.clone(),
                source,
            })?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutdown requested; draining");
        };
        run(listener, state, true, shutdown).await?;
        Ok(())
    })
}

/// A service running on a background thread, for tests and embedding.
pub struct ServiceHandle {
    pub addr: SocketAddr,
    pub state: Shared,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl ServiceHandle {
    /// Binds `127.0.0.1:0` and serves `state`.
    pub fn start(state: AppState, canary: bool) -> std::io::Result<Self> {
        let state = Arc::new(state);
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let s = state.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = match tokio::net::TcpListener::bind("127.0.0.1:0").await {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = addr_tx.send(Err(std::io::Error::new(e.kind(), e.to_string())));
                        return Err(e);
                    }
                };
                let _ = addr_tx.send(listener.local_addr());
                run(listener, s, canary, async {
                    let _ = stop_rx.await;
                })
                .await
            })
        });
        let addr = addr_rx
            .recv()
            .map_err(|_| std::io::Error::other("service thread exited before binding"))??;
        Ok(ServiceHandle {
            addr,
            state,
            shutdown: Some(stop_tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    /// Stops accepting connections, drains jobs and joins the thread.
    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown_inner()
    }

    fn shutdown_inner(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| std::io::Error::other("service thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        let _ = self.shutdown_inner();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::mock::{with_marker, FailingClient};
    use crate::clients::ClientError;
    use crate::pairing::Polarity;

    fn state() -> AppState {
        let mut cfg = EnvConfig::default();
        cfg.service.max_batch = 4;
        let mut st = build_state(&cfg).unwrap();
        st.env.editors.insert(
            "broken",
            Arc::new(FailingClient::new("broken", ClientError::Transport { attempts: 1, message: "down".into() })),
        );
        st
    }

    fn fixture_request(editor: &str, polarity: Polarity) -> RewardRequest {
        let dir = crate::data::CorpusDir::fixtures();
        let fx = &dir.editor_fixtures().unwrap()[0];
        RewardRequest {
            problem_id: fx.problem_id.clone(),
            wrong_code: fx.wrong_code.clone(),
            feedback: with_marker("fb", polarity),
            editor: editor.into(),
            suite_ref: None,
        }
    }

    #[test]
    fn job_transitions() {
        let store = JobStore::new();
        let id = store.submit(JobKind::BatchEval, serde_json::Value::Null);
        assert!(matches!(store.finish(&id, serde_json::Value::Null), Err(JobError::IllegalTransition { .. })));
        store.start(&id).unwrap();
        assert!(store.start(&id).is_err());
        store.fail(&id, "x").unwrap();
        assert!(store.finish(&id, serde_json::Value::Null).is_err());
        assert_eq!(store.counts().failed, 1);
        assert!(matches!(store.start("job-999999"), Err(JobError::Unknown(_))));
        let other = store.submit(JobKind::Score, serde_json::Value::Null);
        assert_ne!(id, other);
    }

    #[test]
    fn job_log_is_append_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("jobs.jsonl");
        let store = JobStore::with_log(&path).unwrap();
        let id = store.submit(JobKind::Audit, serde_json::Value::Null);
        store.start(&id).unwrap();
        store.finish(&id, serde_json::json!(1)).unwrap();
        let lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].contains("\"done\""));
    }

    #[test]
    fn endpoints() {
        let svc = ServiceHandle::start(state(), false).unwrap();
        let http = reqwest::blocking::Client::new();

        let r = http.get(svc.url("/health")).send().unwrap();
        assert_eq!(r.status(), 503);
        svc.state.run_canary().unwrap();
        assert_eq!(http.get(svc.url("/health")).send().unwrap().status(), 200);

        let r = http
            .post(svc.url("/v1/score"))
            .json(&fixture_request("mock-faithful", Polarity::Correct))
            .send()
            .unwrap();
        assert_eq!(r.status(), 200);
        let body: RewardResponse = r.json().unwrap();
        assert_eq!(body.score, 1.0);

        let mut unknown = fixture_request("mock-faithful", Polarity::Correct);
        unknown.problem_id = "no-such-problem".into();
        let r = http.post(svc.url("/v1/score")).json(&unknown).send().unwrap();
        assert_eq!(r.status(), 404);
        let err: ErrorBody = r.json().unwrap();
        assert_eq!(err.error.code, ErrorCode::NotFound);

        let r = http
            .post(svc.url("/v1/score"))
            .header("content-type", "application/json")
            .body("{\"problem_id\": 3}")
            .send()
            .unwrap();
        assert_eq!(r.status(), 400);
        assert_eq!(r.json::<ErrorBody>().unwrap().error.code, ErrorCode::InvalidRequest);

        let r = http
            .post(svc.url("/v1/pass-at-1"))
            .json(&serde_json::json!({"results": [[true, false], [true, true]]}))
            .send()
            .unwrap();
        assert_eq!(r.json::<PassAt1Response>().unwrap().pass_at_1, 75.0);

        let r = http.get(svc.url("/v1/stats")).send().unwrap();
        let stats: serde_json::Value = r.json().unwrap();
        assert_eq!(stats["ready"], true);
        assert!(stats["sandbox"]["capacity"].as_u64().unwrap() >= 1);

        assert_eq!(http.get(svc.url("/v1/jobs/job-424242")).send().unwrap().status(), 404);
        svc.stop().unwrap();
    }

    #[test]
    fn batch_jobs() {
        let svc = ServiceHandle::start(state(), false).unwrap();
        let http = reqwest::blocking::Client::new();

        let empty = http
            .post(svc.url("/v1/batch"))
            .json(&serde_json::json!({"requests": []}))
            .send()
            .unwrap();
        assert_eq!(empty.status(), 400);

        let too_many = vec![fixture_request("mock-faithful", Polarity::Correct); 5];
        let r = http
            .post(svc.url("/v1/batch"))
            .json(&BatchRequest { requests: too_many })
            .send()
            .unwrap();
        assert_eq!(r.status(), 413);
        assert_eq!(r.json::<ErrorBody>().unwrap().error.code, ErrorCode::Capacity);

        let requests = vec![
            fixture_request("mock-faithful", Polarity::Correct),
            fixture_request("broken", Polarity::Correct),
            fixture_request("mock-faithful", Polarity::Wrong),
        ];
        let r = http.post(svc.url("/v1/batch")).json(&BatchRequest { requests }).send().unwrap();
        assert_eq!(r.status(), 202);
        let handle: JobHandle = r.json().unwrap();
        let job = loop {
            let j: JobSpec = http.get(svc.url(&format!("/v1/jobs/{}", handle.job_id))).send().unwrap().json().unwrap();
            if matches!(j.status, JobStatus::Done | JobStatus::Failed) {
                break j;
            }
            std::thread::sleep(Duration::from_millis(20));
        };
        assert_eq!(job.status, JobStatus::Done);
        let items: Vec<BatchItem> = serde_json::from_value(job.result.unwrap()).unwrap();
        assert_eq!(items.iter().map(|i| i.index).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(items[0].response.as_ref().unwrap().score, 1.0);
        assert_eq!(items[1].error.as_ref().unwrap().code, ErrorCode::UpstreamModelError);
        assert!(items[2].response.as_ref().unwrap().score < 1.0);
        svc.stop().unwrap();
    }
}
