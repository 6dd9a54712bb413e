//! Environment configuration: a TOML file plus environment overrides.
//!
//! ```toml
//! seed = 0
//!
//! [sandbox]
//! interpreter = { argv = ["python3", "{source}"] }
//! limits = { wall_time = 5.0, cpu_time = 5.0, memory_bytes = 268435456, max_output_bytes = 1048576 }
//! policy = "trailing_ws"
//! workers = 4
//! max_processes = 8
//!
//! [service]
//! bind = "127.0.0.1:8080"
//! max_batch = 256
//! max_in_flight = 32
//!
//! [paths]
//! corpus = "data/corpus"
//! audit_log = "out/reward_audit.jsonl"
//!
//! [[bindings]]
//! name = "editor-large"
//! role = "editor"
//! kind = "http"
//! base_url = "http://localhost:8000/v1"
//! model_name = "some-model"
//! api_key_env = "EDITOR_API_KEY"
//! ```
//!
//! Overrides: `FEEDBACK_GYM_INTERPRETER` (an argv template containing
//! `{source}`), `FEEDBACK_GYM_BIND`, `FEEDBACK_GYM_CORPUS`. API keys are only
//! ever read from the variable a binding names.

use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::mock::{CannedClient, EditorFixtures, MockEditor, SamplingClient};
use crate::clients::{GenerationParams, HttpChatClient, ModelEndpoint, Registry, RetryPolicy, Role};
use crate::corpus::Problem;
use crate::data::{fixture_corpus_dir, CorpusDir, DataError};
use crate::pairing::DEFAULT_MIN_SCORE;
use crate::reward::default_editor_params;
use crate::sandbox::{Interpreter, SandboxConfig};
use crate::testgen::SynthesisConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn report(errors: &[FieldError]) -> String {
    errors.iter().map(|e| format!("\n  {e}")).collect()
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:{}", report(.0))]
    Invalid(Vec<FieldError>),
    #[error("binding {name:?}: {message}")]
    Binding { name: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// Largest accepted `/v1/batch` request.
    pub max_batch: usize,
    /// Score requests evaluated at once; later ones wait their turn.
    pub max_in_flight: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            max_batch: 256,
            max_in_flight: 32,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Corpus directory; the shipped fixtures when unset.
    pub corpus: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    pub job_log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingConfig {
    /// Feedback samples drawn per context for reward ranking.
    pub n_samples: u32,
    /// Correct/wrong pairs kept per context.
    pub cw_cap: usize,
    pub rs_min_score: f64,
    /// Keep teacher/student pairs only when the teacher scores higher.
    pub validated_ts: bool,
}

impl Default for PairingConfig {
    fn default() -> Self {
        PairingConfig {
            n_samples: 10,
            cw_cap: 1,
            rs_min_score: DEFAULT_MIN_SCORE,
            validated_ts: false,
        }
    }
}

fn default_max_concurrency() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Backend {
    Http {
        base_url: String,
        model_name: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        retry: RetryPolicy,
        #[serde(default = "default_max_concurrency")]
        max_concurrency: usize,
    },
    /// Needs `editor_fixtures.jsonl` in the corpus directory.
    MockFaithful,
    MockSkewed,
    Canned {
        text: String,
    },
    Sampling {
        candidates: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub name: String,
    pub role: Role,
    #[serde(flatten)]
    pub backend: Backend,
}

fn default_bindings() -> Vec<Binding> {
    vec![
        Binding {
            name: "mock-faithful".into(),
            role: Role::Editor,
            backend: Backend::MockFaithful,
        },
        Binding {
            name: "mock-skewed".into(),
            role: Role::Editor,
            backend: Backend::MockSkewed,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub seed: u64,
    pub sandbox: SandboxConfig,
    pub service: ServiceConfig,
    pub paths: PathsConfig,
    /// Parameters for sampling feedback candidates.
    pub sampling: GenerationParams,
    pub editor_params: GenerationParams,
    pub testgen: SynthesisConfig,
    pub pairing: PairingConfig,
    pub bindings: Vec<Binding>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            seed: 0,
            sandbox: SandboxConfig::default(),
            service: ServiceConfig::default(),
            paths: PathsConfig::default(),
            sampling: GenerationParams::default(),
            editor_params: default_editor_params(),
            testgen: SynthesisConfig::default(),
            pairing: PairingConfig::default(),
            bindings: default_bindings(),
        }
    }
}

fn field(field: &str, message: impl std::fmt::Display) -> FieldError {
    FieldError {
        field: field.into(),
        message: message.to_string(),
    }
}

impl EnvConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads `path` (or starts from defaults), applies environment overrides
    /// and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                EnvConfig::from_toml(&text, p)?
            }
            None => EnvConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(t) = get("FEEDBACK_GYM_INTERPRETER") {
            self.sandbox.interpreter = Interpreter::parse(&t)
                .map_err(|e| ConfigError::Invalid(vec![field("FEEDBACK_GYM_INTERPRETER", e)]))?;
        }
        if let Some(b) = get("FEEDBACK_GYM_BIND") {
            self.service.bind = b;
        }
        if let Some(c) = get("FEEDBACK_GYM_CORPUS") {
            self.paths.corpus = Some(PathBuf::from(c));
        }
        Ok(())
    }

    /// Every problem found, one entry per offending field.
    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        if let Err(e) = self.sandbox.interpreter.validate() {
            errs.push(field("sandbox.interpreter", e));
        }
        if let Err(e) = self.sandbox.limits.validate() {
            errs.push(field("sandbox.limits", e));
        }
        if self.sandbox.workers == 0 {
            errs.push(field("sandbox.workers", "must be at least 1"));
        }
        if self.sandbox.max_processes == 0 {
            errs.push(field("sandbox.max_processes", "must be at least 1"));
        }
        if let Err(e) = self.service.bind.parse::<SocketAddr>() {
            errs.push(field("service.bind", e));
        }
        if self.service.max_batch == 0 {
            errs.push(field("service.max_batch", "must be at least 1"));
        }
        if self.service.max_in_flight == 0 {
            errs.push(field("service.max_in_flight", "must be at least 1"));
        }
        if let Err(e) = self.sampling.validate() {
            errs.push(field("sampling", e));
        }
        if let Err(e) = self.editor_params.validate() {
            errs.push(field("editor_params", e));
        }
        if self.testgen.request_budget == 0 {
            errs.push(field("testgen.request_budget", "must be at least 1"));
        }
        if self.testgen.min_suite_size == 0 {
            errs.push(field("testgen.min_suite_size", "must be at least 1"));
        }
        if self.pairing.n_samples == 0 {
            errs.push(field("pairing.n_samples", "must be at least 1"));
        }
        if self.pairing.cw_cap == 0 {
            errs.push(field("pairing.cw_cap", "must be at least 1"));
        }
        if !self.pairing.rs_min_score.is_finite() {
            errs.push(field("pairing.rs_min_score", "must be finite"));
        }
        if let Some(c) = &self.paths.corpus {
            if !c.is_dir() {
                errs.push(field("paths.corpus", format!("{} is not a directory", c.display())));
            }
        }
        let mut names = HashSet::new();
        for (i, b) in self.bindings.iter().enumerate() {
            let f = format!("bindings[{i}]");
            if b.name.trim().is_empty() {
                errs.push(field(&format!("{f}.name"), "must not be empty"));
            } else if !names.insert(b.name.as_str()) {
                errs.push(field(&format!("{f}.name"), format!("duplicate binding {:?}", b.name)));
            }
            match &b.backend {
                Backend::Http {
                    base_url,
                    model_name,
                    max_concurrency,
                    ..
                } => {
                    if !(base_url.starts_with("http://") || base_url.starts_with("https://")) {
                        errs.push(field(&format!("{f}.base_url"), "must start with http:// or https://"));
                    }
                    if model_name.is_empty() {
                        errs.push(field(&format!("{f}.model_name"), "must not be empty"));
                    }
                    if *max_concurrency == 0 {
                        errs.push(field(&format!("{f}.max_concurrency"), "must be at least 1"));
                    }
                }
                Backend::MockFaithful | Backend::MockSkewed if b.role != Role::Editor => {
                    errs.push(field(&format!("{f}.role"), "mock editors must have role \"editor\""));
                }
                Backend::Sampling { candidates } if candidates.is_empty() => {
                    errs.push(field(&format!("{f}.candidates"), "must not be empty"));
                }
                _ => {}
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let errs = self.field_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    pub fn corpus_dir(&self) -> CorpusDir {
        CorpusDir::new(self.paths.corpus.clone().unwrap_or_else(fixture_corpus_dir))
    }

    pub fn binding(&self, name: &str) -> Option<&Binding> {
        self.bindings.iter().find(|b| b.name == name)
    }

    /// Instantiates every binding. Editor fixtures are loaded from the
    /// corpus directory only when a mock editor is bound.
    pub fn build_registry(&self, problems: &[Problem]) -> Result<Registry, ConfigError> {
        let needs_fixtures = self
            .bindings
            .iter()
            .any(|b| matches!(b.backend, Backend::MockFaithful | Backend::MockSkewed));
        let fixtures = if needs_fixtures {
            let records = self.corpus_dir().editor_fixtures()?;
            Some(Arc::new(EditorFixtures::new(records, problems).map_err(|e| {
                ConfigError::Binding {
                    name: "mock editors".into(),
                    message: e.to_string(),
                }
            })?))
        } else {
            None
        };
        let mut reg = Registry::new();
        for b in &self.bindings {
            let generator: crate::clients::SharedGenerator = match &b.backend {
                Backend::Http {
                    base_url,
                    model_name,
                    api_key_env,
                    retry,
                    max_concurrency,
                } => {
                    let endpoint = ModelEndpoint {
                        base_url: base_url.clone(),
                        model_name: model_name.clone(),
                        api_key_env: api_key_env.clone(),
                        role: b.role,
                    };
                    Arc::new(
                        HttpChatClient::new(b.name.clone(), endpoint, *retry, *max_concurrency).map_err(|e| {
                            ConfigError::Binding {
                                name: b.name.clone(),
                                message: e.to_string(),
                            }
                        })?,
                    )
                }
                Backend::MockFaithful => Arc::new(MockEditor::faithful(fixtures.clone().expect("loaded above"))),
                Backend::MockSkewed => Arc::new(MockEditor::skewed(fixtures.clone().expect("loaded above"))),
                Backend::Canned { text } => Arc::new(CannedClient::new(b.name.clone(), text.clone())),
                Backend::Sampling { candidates } => Arc::new(SamplingClient::new(b.name.clone(), candidates.clone())),
            };
            reg.insert(b.name.clone(), generator);
        }
        Ok(reg)
    }
}
