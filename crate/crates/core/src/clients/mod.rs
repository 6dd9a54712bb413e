//! Text-generation clients: the feedback model, editor, annotator, and judge
//! all sit behind [`TextGenerator`].

mod http;
pub mod mock;
pub mod templates;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpChatClient, RetryPolicy};
pub use templates::{Bindings, PromptTemplate, TemplateError, TemplateId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authorization failed: {0}")]
    Authorization(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("unknown fixture: {0}")]
    UnknownFixture(String),
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClientError::Transport { .. })
    }
}

/// Sampling parameters. Defaults are the annotation settings: temperature
/// 0.7, nucleus 0.95, 500 new tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub n_samples: u32,
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.7,
            top_p: 0.95,
            max_tokens: 500,
            n_samples: 1,
            seed: None,
        }
    }
}

impl GenerationParams {
    pub fn with_samples(mut self, n: u32) -> Self {
        self.n_samples = n;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ClientError::InvalidParams(format!("temperature {}", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.top_p) {
            return Err(ClientError::InvalidParams(format!("top_p {}", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(ClientError::InvalidParams("max_tokens must be positive".into()));
        }
        if self.n_samples == 0 {
            return Err(ClientError::InvalidParams("n_samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Feedback,
    Editor,
    Annotator,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    pub role: Role,
}

/// Anything that turns a prompt into `n_samples` completions. Implementations
/// return exactly `n_samples` items or an error, never a partial list.
pub trait TextGenerator: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Vec<String>, ClientError>;
}

pub type SharedGenerator = Arc<dyn TextGenerator>;

/// Named generators, looked up by binding name (e.g. `"mock-faithful"`).
#[derive(Clone, Default)]
pub struct Registry {
    generators: BTreeMap<String, SharedGenerator>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, generator: SharedGenerator) {
        self.generators.insert(name.into(), generator);
    }

    pub fn get(&self, name: &str) -> Option<&SharedGenerator> {
        self.generators.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.generators.keys().map(String::as_str)
    }
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.generators.keys()).finish()
    }
}
