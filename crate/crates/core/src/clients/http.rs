use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ClientError, GenerationParams, ModelEndpoint, TextGenerator};
use crate::gate::Gate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 250,
            timeout_secs: 120,
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    n: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

/// Chat-completion client for OpenAI-compatible endpoints.
///
/// Must be used from a blocking context (a plain thread or
/// `tokio::task::spawn_blocking`).
pub struct HttpChatClient {
    name: String,
    endpoint: ModelEndpoint,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    retry: RetryPolicy,
    in_flight: Gate,
}

impl HttpChatClient {
    pub fn new(
        name: impl Into<String>,
        endpoint: ModelEndpoint,
        retry: RetryPolicy,
        max_concurrency: usize,
    ) -> Result<Self, ClientError> {
        let api_key = match &endpoint.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ClientError::MissingCredential(var.clone()))?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(retry.timeout_secs))
            .build()
            .map_err(|e| ClientError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(HttpChatClient {
            name: name.into(),
            endpoint,
            api_key,
            http,
            retry,
            in_flight: Gate::new(max_concurrency.max(1)),
        })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.endpoint.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &ChatRequest<'_>, n: usize) -> Result<Vec<String>, ClientError> {
        let mut req = self.http.post(self.url()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ClientError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(ClientError::Authorization(resp.text().unwrap_or_default()));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(ClientError::Transport {
                attempts: 1,
                message: format!("status {status}"),
            });
        }
        if !status.is_success() {
            return Err(ClientError::Rejected {
                status: status.as_u16(),
                body: resp.text().unwrap_or_default(),
            });
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| ClientError::MalformedResponse(e.to_string()))?;
        if parsed.choices.len() != n {
            return Err(ClientError::MalformedResponse(format!(
                "expected {n} choices, got {}",
                parsed.choices.len()
            )));
        }
        parsed
            .choices
            .into_iter()
            .map(|c| {
                c.message
                    .content
                    .ok_or_else(|| ClientError::MalformedResponse("choice without content".into()))
            })
            .collect()
    }
}

impl TextGenerator for HttpChatClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Vec<String>, ClientError> {
        params.validate()?;
        let body = ChatRequest {
            model: &self.endpoint.model_name,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: params.temperature,
            top_p: params.top_p,
            max_tokens: params.max_tokens,
            n: params.n_samples,
            seed: params.seed,
        };
        let _permit = self.in_flight.acquire();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body, params.n_samples as usize) {
                Err(ClientError::Transport { message, .. }) => {
                    if attempts > self.retry.max_retries {
                        return Err(ClientError::Transport { attempts, message });
                    }
                    let delay = self.retry.base_delay_ms.saturating_mul(1 << (attempts - 1).min(16));
                    tracing::warn!(client = %self.name, attempts, %message, "retrying model request");
                    thread::sleep(Duration::from_millis(delay));
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::Role;
    use axum::http::StatusCode;
    use axum::routing::post;
    use axum::{Json, Router};
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    fn endpoint(base_url: String) -> ModelEndpoint {
        ModelEndpoint {
            base_url,
            model_name: "m".into(),
            api_key_env: None,
            role: Role::Editor,
        }
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_retries: 2,
            base_delay_ms: 1,
            timeout_secs: 5,
        }
    }

    /// Serves `router` on an ephemeral port from a background runtime.
    fn serve(router: Router) -> String {
        let (tx, rx) = std::sync::mpsc::channel();
        thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, router).await.unwrap();
            });
        });
        format!("http://{}", rx.recv().unwrap())
    }

    #[test]
    fn parses_choices() {
        let router = Router::new().route(
            "/chat/completions",
            post(|Json(body): Json<serde_json::Value>| async move {
                let n = body["n"].as_u64().unwrap();
                let prompt = body["messages"][0]["content"].as_str().unwrap().to_string();
                let choices: Vec<_> = (0..n)
                    .map(|i| serde_json::json!({"message": {"content": format!("{prompt}-{i}")}}))
                    .collect();
                Json(serde_json::json!({ "choices": choices }))
            }),
        );
        let base = serve(router);
        let client = HttpChatClient::new("t", endpoint(base), fast_retry(), 2).unwrap();
        let out = client
            .complete("hi", &GenerationParams::default().with_samples(2))
            .unwrap();
        assert_eq!(out, vec!["hi-0", "hi-1"]);
    }

    #[test]
    fn retries_server_errors_then_gives_up() {
        let hits = Arc::new(AtomicU32::new(0));
        let h = hits.clone();
        let router = Router::new().route(
            "/chat/completions",
            post(move || {
                h.fetch_add(1, Ordering::SeqCst);
                async { StatusCode::SERVICE_UNAVAILABLE }
            }),
        );
        let client = HttpChatClient::new("t", endpoint(serve(router)), fast_retry(), 1).unwrap();
        let err = client.complete("x", &GenerationParams::default()).unwrap_err();
        assert_eq!(hits.load(Ordering::SeqCst), 3);
        assert!(matches!(err, ClientError::Transport { attempts: 3, .. }));
    }

    #[test]
    fn no_retry_on_authorization_failure() {
        let hits = Arc::new(AtomicU32::new(0));
        let h = hits.clone();
        let router = Router::new().route(
            "/chat/completions",
            post(move || {
                h.fetch_add(1, Ordering::SeqCst);
                async { StatusCode::UNAUTHORIZED }
            }),
        );
        let client = HttpChatClient::new("t", endpoint(serve(router)), fast_retry(), 1).unwrap();
        let err = client.complete("x", &GenerationParams::default()).unwrap_err();
        assert!(matches!(err, ClientError::Authorization(_)));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        // Bind then drop to get a port nobody listens on.
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let client = HttpChatClient::new("t", endpoint(format!("http://127.0.0.1:{port}")), fast_retry(), 1).unwrap();
        let err = client.complete("x", &GenerationParams::default()).unwrap_err();
        assert!(matches!(err, ClientError::Transport { attempts: 3, .. }));
    }

    #[test]
    fn short_choice_list_is_malformed() {
        let router = Router::new().route(
            "/chat/completions",
            post(|| async { Json(serde_json::json!({"choices": [{"message": {"content": "only one"}}]})) }),
        );
        let client = HttpChatClient::new("t", endpoint(serve(router)), fast_retry(), 1).unwrap();
        let err = client
            .complete("x", &GenerationParams::default().with_samples(3))
            .unwrap_err();
        assert!(matches!(err, ClientError::MalformedResponse(_)));
    }
}
