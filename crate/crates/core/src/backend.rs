//! Argument generators and evaluator models behind one interface.
//!
//! Remote backends speak the common chat-completion wire shape (a message list
//! with role/content, plus sampling parameters). The built-in `symbolic`
//! backend reads the target triple back out of the prompt and answers with the
//! deterministic arguer's rendering.

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::sync::Semaphore;
use tracing::{debug, warn};

use crate::arguer::{argue, render};
use crate::case::{CaseTriple, Mode};
use crate::catalog::Catalog;
use crate::prompt::parse_case_blocks;

pub const SYMBOLIC_BACKEND: &str = "symbolic";
pub const DEFAULT_MAX_TOKENS: u32 = 500;
pub const REASONING_MAX_TOKENS: u32 = 5000;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend {backend}: environment variable {var} is not set")]
    MissingApiKey { backend: String, var: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider error (HTTP {status}) after {attempts} attempt(s): {message}")]
    Provider { status: u16, attempts: u32, message: String },
    #[error("malformed provider response: {0}")]
    Decode(String),
    #[error("symbolic backend: {0}")]
    Symbolic(String),
    #[error("invalid backend config {backend}: {message}")]
    Config { backend: String, message: String },
}

impl BackendError {
    pub fn attempts(&self) -> u32 {
        match self {
            BackendError::Transport { attempts, .. } | BackendError::Provider { attempts, .. } => *attempts,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub attempts: u32,
    /// Base delay; doubles after every failed attempt.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, backoff_ms: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub name: String,
    #[serde(default)]
    pub endpoint_url: String,
    /// Name of the environment variable holding the API key, if the endpoint needs one.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    /// Defaults to 500, or 5000 for reasoning models.
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default = "one")]
    pub top_p: f64,
    #[serde(default)]
    pub frequency_penalty: f64,
    #[serde(default)]
    pub presence_penalty: f64,
    #[serde(default)]
    pub reasoning: bool,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn one() -> f64 {
    1.0
}

fn default_in_flight() -> usize {
    4
}

fn default_timeout() -> u64 {
    120
}

impl BackendConfig {
    pub fn new(name: &str, endpoint_url: &str, model_id: &str) -> Self {
        BackendConfig {
            name: name.to_string(),
            endpoint_url: endpoint_url.to_string(),
            api_key_env: None,
            model_id: model_id.to_string(),
            temperature: 0.0,
            max_tokens: None,
            top_p: 1.0,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
            reasoning: false,
            max_in_flight: default_in_flight(),
            retry: RetryPolicy::default(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn symbolic() -> Self {
        BackendConfig::new(SYMBOLIC_BACKEND, "", SYMBOLIC_BACKEND)
    }

    pub fn is_symbolic(&self) -> bool {
        self.name == SYMBOLIC_BACKEND && self.endpoint_url.is_empty()
    }

    pub fn effective_max_tokens(&self) -> u32 {
        self.max_tokens
            .unwrap_or(if self.reasoning { REASONING_MAX_TOKENS } else { DEFAULT_MAX_TOKENS })
    }

    /// The sampling parameters as sent; never includes credentials.
    pub fn params(&self) -> GenerationParams {
        GenerationParams {
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            max_tokens: self.effective_max_tokens(),
            top_p: self.top_p,
            frequency_penalty: self.frequency_penalty,
            presence_penalty: self.presence_penalty,
            reasoning: self.reasoning,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |message: &str| BackendError::Config { backend: self.name.clone(), message: message.to_string() };
        if self.name.trim().is_empty() {
            return Err(bad("empty name"));
        }
        if self.is_symbolic() {
            return Ok(());
        }
        if self.endpoint_url.is_empty() {
            return Err(bad("endpoint_url is required"));
        }
        if self.model_id.is_empty() {
            return Err(bad("model_id is required"));
        }
        if self.max_in_flight == 0 {
            return Err(bad("max_in_flight must be positive"));
        }
        if self.retry.attempts == 0 {
            return Err(bad("retry.attempts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub reasoning: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub total_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    /// Possibly empty; an empty answer is a recorded outcome.
    pub text: String,
    pub model_id: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    pub timestamp: DateTime<Utc>,
    pub attempts: u32,
}

#[async_trait]
pub trait Generator: Send + Sync {
    fn name(&self) -> &str;
    fn params(&self) -> GenerationParams;
    /// Upper bound on concurrent `complete` calls the harness should issue.
    fn max_in_flight(&self) -> usize;
    async fn complete(&self, prompt: &str) -> Result<Completion, BackendError>;
}

/// Chat-completion client with retries and a per-backend in-flight limit.
pub struct HttpBackend {
    config: BackendConfig,
    api_key: Option<String>,
    client: reqwest::Client,
    permits: Arc<Semaphore>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpBackend {
    /// Resolves the API key now, so a missing key fails before any request.
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| BackendError::MissingApiKey {
                backend: config.name.clone(),
                var: var.clone(),
            })?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config { backend: config.name.clone(), message: e.to_string() })?;
        let permits = Arc::new(Semaphore::new(config.max_in_flight));
        Ok(HttpBackend { config, api_key, client, permits })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn request_body(&self, prompt: &str) -> serde_json::Value {
        let p = self.config.params();
        json!({
            "model": p.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": p.temperature,
            "max_tokens": p.max_tokens,
            "top_p": p.top_p,
            "frequency_penalty": p.frequency_penalty,
            "presence_penalty": p.presence_penalty,
        })
    }

    async fn attempt(&self, body: &serde_json::Value) -> Result<(String, Option<Usage>), AttemptError> {
        let mut req = self.client.post(&self.config.endpoint_url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| AttemptError::Transport(e.to_string()))?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(|e| AttemptError::Transport(e.to_string()))?;
        if !status.is_success() {
            let message = provider_message(&bytes);
            let retryable = status.as_u16() == 429 || status.is_server_error();
            return Err(AttemptError::Provider { status: status.as_u16(), message, retryable });
        }
        let v: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| AttemptError::Decode(format!("invalid JSON: {e}")))?;
        if let Some(err) = v.get("error").filter(|e| !e.is_null()) {
            return Err(AttemptError::Provider { status: status.as_u16(), message: error_message(err), retryable: false });
        }
        let text = v
            .pointer("/choices/0/message/content")
            .map(|c| c.as_str().unwrap_or("").to_string())
            .ok_or_else(|| AttemptError::Decode("missing choices[0].message.content".into()))?;
        let usage = v.get("usage").map(|u| Usage {
            prompt_tokens: u.get("prompt_tokens").and_then(|x| x.as_u64()),
            completion_tokens: u.get("completion_tokens").and_then(|x| x.as_u64()),
            total_tokens: u.get("total_tokens").and_then(|x| x.as_u64()),
        });
        Ok((text, usage))
    }
}

enum AttemptError {
    Transport(String),
    Provider { status: u16, message: String, retryable: bool },
    Decode(String),
}

fn error_message(err: &serde_json::Value) -> String {
    err.get("message")
        .and_then(|m| m.as_str())
        .map(str::to_string)
        .unwrap_or_else(|| err.to_string())
}

fn provider_message(body: &[u8]) -> String {
    match serde_json::from_slice::<serde_json::Value>(body) {
        Ok(v) => v.get("error").map(error_message).unwrap_or_else(|| v.to_string()),
        Err(_) => String::from_utf8_lossy(body).chars().take(500).collect(),
    }
}

#[async_trait]
impl Generator for HttpBackend {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn params(&self) -> GenerationParams {
        self.config.params()
    }

    fn max_in_flight(&self) -> usize {
        self.config.max_in_flight
    }

    async fn complete(&self, prompt: &str) -> Result<Completion, BackendError> {
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        let body = self.request_body(prompt);
        let started = Instant::now();
        let attempts = self.config.retry.attempts.max(1);
        let mut last = None;
        for attempt in 1..=attempts {
            match self.attempt(&body).await {
                Ok((text, usage)) => {
                    debug!(backend = %self.config.name, attempt, "completion received");
                    return Ok(Completion {
                        text,
                        model_id: self.config.model_id.clone(),
                        latency_ms: started.elapsed().as_millis() as u64,
                        usage,
                        timestamp: Utc::now(),
                        attempts: attempt,
                    });
                }
                Err(AttemptError::Decode(m)) => return Err(BackendError::Decode(m)),
                Err(AttemptError::Provider { status, message, retryable: false }) => {
                    return Err(BackendError::Provider { status, attempts: attempt, message });
                }
                Err(e) => {
                    let err = match e {
                        AttemptError::Transport(message) => BackendError::Transport { attempts: attempt, message },
                        AttemptError::Provider { status, message, .. } => {
                            BackendError::Provider { status, attempts: attempt, message }
                        }
                        AttemptError::Decode(_) => unreachable!(),
                    };
                    warn!(backend = %self.config.name, attempt, of = attempts, error = %err, "request attempt failed");
                    last = Some(err);
                    if attempt < attempts {
                        let delay = self.config.retry.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                        tokio::time::sleep(Duration::from_millis(delay)).await;
                    }
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// Answers argument prompts with the deterministic arguer.
#[derive(Debug, Clone)]
pub struct SymbolicBackend {
    catalog: Catalog,
}

impl SymbolicBackend {
    pub fn new(catalog: Catalog) -> Self {
        SymbolicBackend { catalog }
    }

    pub fn respond(&self, prompt: &str) -> Result<String, BackendError> {
        let [cc, tsc1, tsc2] = parse_case_blocks(prompt).map_err(|e| BackendError::Symbolic(e.to_string()))?;
        let triple = CaseTriple { id: "prompt".into(), mode: Mode::Arguable, complexity: 0, seed: 0, cc, tsc1, tsc2 };
        let argument = argue(&triple, &self.catalog).map_err(|e| BackendError::Symbolic(e.to_string()))?;
        Ok(render(&argument, &self.catalog))
    }
}

#[async_trait]
impl Generator for SymbolicBackend {
    fn name(&self) -> &str {
        SYMBOLIC_BACKEND
    }

    fn params(&self) -> GenerationParams {
        BackendConfig::symbolic().params()
    }

    fn max_in_flight(&self) -> usize {
        default_in_flight()
    }

    async fn complete(&self, prompt: &str) -> Result<Completion, BackendError> {
        let started = Instant::now();
        let text = self.respond(prompt)?;
        Ok(Completion {
            text,
            model_id: SYMBOLIC_BACKEND.to_string(),
            latency_ms: started.elapsed().as_millis() as u64,
            usage: None,
            timestamp: Utc::now(),
            attempts: 1,
        })
    }
}

pub fn build_generator(config: &BackendConfig, catalog: &Catalog) -> Result<Arc<dyn Generator>, BackendError> {
    if config.is_symbolic() {
        Ok(Arc::new(SymbolicBackend::new(catalog.clone())))
    } else {
        Ok(Arc::new(HttpBackend::new(config.clone())?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped {
    pub text: String,
    /// Set when an opening reasoning tag had no matching close; the text is then unchanged.
    pub warning: Option<String>,
}

const REASONING_TAGS: [&str; 3] = ["think", "thinking", "reasoning"];

/// Removes `<think>…</think>` style reasoning blocks. Also accepts the
/// malformed `<\think>` closer some models emit.
pub fn strip_reasoning(text: &str) -> Stripped {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    let mut stripped_any = false;
    loop {
        let lower = rest.to_ascii_lowercase();
        let open = REASONING_TAGS
            .iter()
            .filter_map(|t| lower.find(&format!("<{t}>")).map(|i| (i, *t)))
            .min_by_key(|(i, _)| *i);
        let Some((start, tag)) = open else {
            out.push_str(rest);
            break;
        };
        let body_start = start + tag.len() + 2;
        let close = [format!("</{tag}>"), format!("<\\{tag}>")]
            .iter()
            .filter_map(|c| lower[body_start..].find(c.as_str()).map(|i| (body_start + i, c.len())))
            .min_by_key(|(i, _)| *i);
        let Some((end, close_len)) = close else {
            return Stripped {
                text: text.to_string(),
                warning: Some(format!("unclosed <{tag}> block; text left unchanged")),
            };
        };
        out.push_str(&rest[..start]);
        rest = &rest[end + close_len..];
        stripped_any = true;
    }
    let text = if stripped_any { out.trim_start().to_string() } else { out };
    Stripped { text, warning: None }
}
