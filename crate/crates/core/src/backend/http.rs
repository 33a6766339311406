//! Chat-completions HTTP client.
//!
//! Request: `POST {endpoint}` with bearer auth and
//! `{"model", "messages": [system, user], "temperature", "max_tokens"}`.
//! Response: `choices[0].message.content`, optional `usage.prompt_tokens` and
//! `usage.completion_tokens`.

use std::fmt;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;
use tracing::warn;

use super::{BackendError, Completion, CompletionBackend, TokenEstimator};
use crate::prompt::Prompt;

pub const API_KEY_ENV: &str = "STROT_API_KEY";
const BODY_EXCERPT_CHARS: usize = 200;

/// API key wrapper that never prints its contents.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(API_KEY_ENV)
            .ok()
            .filter(|v| !v.is_empty())
            .map(Self)
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Debug, Clone)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model_id: String,
    pub api_key: Secret,
    pub timeout: Duration,
    pub max_output_tokens: u32,
    /// Transport-level retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl BackendConfig {
    pub fn new(endpoint: impl Into<String>, model_id: impl Into<String>, api_key: Secret) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            api_key,
            timeout: Duration::from_secs(60),
            max_output_tokens: 1024,
            max_retries: 2,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

pub struct HttpBackend {
    config: BackendConfig,
    client: Client,
    estimator: TokenEstimator,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Option<Message>,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

enum AttemptError {
    Retryable(BackendError),
    Fatal(BackendError),
}

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT_CHARS).collect()
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        if config.timeout.is_zero() {
            return Err(BackendError::InvalidConfig("timeout must be positive".into()));
        }
        if config.endpoint.is_empty() {
            return Err(BackendError::InvalidConfig("endpoint is empty".into()));
        }
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            config,
            client,
            estimator: TokenEstimator::default(),
        })
    }

    pub fn with_estimator(mut self, estimator: TokenEstimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn request_body(&self, prompt: &Prompt) -> serde_json::Value {
        json!({
            "model": self.config.model_id,
            "messages": [
                {"role": "system", "content": prompt.system_message()},
                {"role": "user", "content": prompt.render()},
            ],
            "temperature": prompt.temperature,
            "max_tokens": self.config.max_output_tokens,
        })
    }

    fn attempt(&self, body: &serde_json::Value, prompt: &Prompt) -> Result<Completion, AttemptError> {
        let response = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(self.config.api_key.expose())
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    AttemptError::Retryable(BackendError::Timeout)
                } else {
                    AttemptError::Retryable(BackendError::Transport {
                        status: None,
                        body_excerpt: excerpt(&e.to_string()),
                    })
                }
            })?;

        let status = response.status();
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Retryable(BackendError::Timeout)
            } else {
                AttemptError::Retryable(BackendError::Transport {
                    status: Some(status.as_u16()),
                    body_excerpt: excerpt(&e.to_string()),
                })
            }
        })?;

        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(AttemptError::Fatal(BackendError::AuthFailure));
        }
        if !status.is_success() {
            let err = BackendError::Transport {
                status: Some(status.as_u16()),
                body_excerpt: excerpt(&text),
            };
            return Err(if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                AttemptError::Retryable(err)
            } else {
                AttemptError::Fatal(err)
            });
        }

        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|_| {
            AttemptError::Fatal(BackendError::Transport {
                status: Some(status.as_u16()),
                body_excerpt: excerpt(&text),
            })
        })?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message)
            .and_then(|m| m.content)
            .ok_or(AttemptError::Fatal(BackendError::EmptyCompletion))?;
        let usage = parsed.usage;
        Ok(Completion {
            prompt_tokens: usage
                .as_ref()
                .and_then(|u| u.prompt_tokens)
                .unwrap_or_else(|| self.estimator.estimate_prompt(prompt)),
            completion_tokens: usage
                .as_ref()
                .and_then(|u| u.completion_tokens)
                .unwrap_or_else(|| self.estimator.estimate(&content)),
            text: content,
            latency_ms: 0,
        })
    }
}

impl CompletionBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn complete(&self, prompt: &Prompt) -> Result<Completion, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::InvalidConfig("prompt is empty".into()));
        }
        let body = self.request_body(prompt);
        let started = Instant::now();
        let mut backoff = self.config.initial_backoff;
        let mut retries = 0;
        loop {
            match self.attempt(&body, prompt) {
                Ok(mut completion) => {
                    completion.latency_ms = started.elapsed().as_millis() as u64;
                    return Ok(completion);
                }
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retryable(e)) => {
                    if retries >= self.config.max_retries {
                        return Err(e);
                    }
                    warn!(error = %e, retry = retries + 1, "transient backend failure, backing off {:?}", backoff);
                    std::thread::sleep(backoff);
                    backoff *= 2;
                    retries += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::Stage;

    #[test]
    fn secret_debug_is_redacted() {
        let cfg = BackendConfig::new("http://x", "m", Secret::new("sk-very-secret"));
        let dbg = format!("{cfg:?}");
        assert!(!dbg.contains("sk-very-secret"));
        assert!(dbg.contains("***"));
    }

    #[test]
    fn zero_timeout_rejected() {
        let mut cfg = BackendConfig::new("http://x", "m", Secret::new("k"));
        cfg.timeout = Duration::ZERO;
        assert!(matches!(HttpBackend::new(cfg), Err(BackendError::InvalidConfig(_))));
    }

    #[test]
    fn body_carries_stage_temperature_and_no_secret() {
        let backend = HttpBackend::new(BackendConfig::new("http://x", "gpt-4-turbo", Secret::new("sk-1"))).unwrap();
        let prompt = Prompt::new(Stage::Refine, 0.25).section("A", "b");
        let body = backend.request_body(&prompt);
        assert_eq!(body["temperature"], 0.25);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "### A\nb\n");
        assert!(!body.to_string().contains("sk-1"));
    }
}
