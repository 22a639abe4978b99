//! Uniform access to chat-completion endpoints.
//!
//! A [`ChatBackend`] does one request/response exchange. [`Gateway`] wraps a
//! backend with request validation, bounded retries, concurrency limits and
//! trace emission: exactly one [`CallTrace`] per logical call, whatever the
//! number of attempts.

mod http;
mod mock;

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::accounting::{CallTrace, Stage, TraceSink};

pub use http::{resolve_path, HttpBackend};
pub use mock::{write_fixture, FixtureError, FixtureKey, FixtureRecord, MockBackend};

/// Where to find the text and usage fields in a provider's response body.
/// Paths are dot-separated; numeric segments index arrays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseMapping {
    pub text: String,
    #[serde(default)]
    pub input_tokens: Option<String>,
    #[serde(default)]
    pub output_tokens: Option<String>,
    #[serde(default)]
    pub neurons: Option<String>,
    /// Time to first token in milliseconds, for providers that report it.
    #[serde(default)]
    pub ttft_ms: Option<String>,
}

impl Default for ResponseMapping {
    fn default() -> Self {
        Self {
            text: "choices.0.message.content".into(),
            input_tokens: Some("usage.prompt_tokens".into()),
            output_tokens: Some("usage.completion_tokens".into()),
            neurons: None,
            ttft_ms: None,
        }
    }
}

fn default_max_tokens() -> u32 {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Provider model identifier, e.g. `@cf/meta/llama-3.1-8b-instruct`.
    pub endpoint_id: String,
    /// Request URL; `{endpoint_id}` is substituted.
    #[serde(default)]
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub auth_token_ref: Option<String>,
    #[serde(default)]
    pub default_temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub default_max_tokens: u32,
    #[serde(default)]
    pub response: ResponseMapping,
    /// Adds `"model": endpoint_id` to the request body.
    #[serde(default)]
    pub include_model_field: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EndpointError {
    #[error("endpoint_id is empty")]
    EmptyId,
    #[error("endpoint {0}: default_max_tokens must be at least 1")]
    MaxTokens(String),
    #[error("endpoint {0}: temperature must be in [0, 2]")]
    Temperature(String),
}

impl EndpointConfig {
    pub fn new(endpoint_id: impl Into<String>) -> Self {
        Self {
            endpoint_id: endpoint_id.into(),
            base_url: String::new(),
            auth_token_ref: None,
            default_temperature: 0.0,
            default_max_tokens: 512,
            response: ResponseMapping::default(),
            include_model_field: false,
        }
    }

    pub fn validate(&self) -> Result<(), EndpointError> {
        if self.endpoint_id.trim().is_empty() {
            return Err(EndpointError::EmptyId);
        }
        if self.default_max_tokens == 0 {
            return Err(EndpointError::MaxTokens(self.endpoint_id.clone()));
        }
        if !(0.0..=2.0).contains(&self.default_temperature) {
            return Err(EndpointError::Temperature(self.endpoint_id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Speaker,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Speaker::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Speaker::User, content: content.into() }
    }
}

/// Identifies a call for fixtures and traces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestTag {
    pub query_id: String,
    pub stage: Stage,
    pub slot: String,
    /// Position of the call within its stage.
    #[serde(default)]
    pub order: u32,
}

impl RequestTag {
    pub fn new(query_id: impl Into<String>, stage: Stage, slot: impl Into<String>, order: u32) -> Self {
        Self {
            query_id: query_id.into(),
            stage,
            slot: slot.into(),
            order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    /// Overrides the endpoint default when set.
    pub temperature: Option<f64>,
    /// Overrides the endpoint default when set.
    pub max_tokens: Option<u32>,
    pub tag: RequestTag,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>, tag: RequestTag) -> Self {
        Self { messages, temperature: None, max_tokens: None, tag }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = Some(temperature);
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = Some(max_tokens);
        self
    }

    pub fn effective_temperature(&self, endpoint: &EndpointConfig) -> f64 {
        self.temperature.unwrap_or(endpoint.default_temperature)
    }

    pub fn effective_max_tokens(&self, endpoint: &EndpointConfig) -> u32 {
        self.max_tokens.unwrap_or(endpoint.default_max_tokens)
    }

    pub fn prompt_chars(&self) -> usize {
        self.messages.iter().map(|m| m.content.chars().count()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
    pub neurons: Option<u64>,
    pub ttft_ms: Option<u64>,
    /// Token counts were estimated from character length, not reported.
    pub token_counts_estimated: bool,
}

/// `ceil(chars / 4)`, the fallback when a provider reports no usage.
pub fn estimate_tokens(chars: usize) -> u64 {
    chars.div_ceil(4) as u64
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("could not decode response: {0}")]
    Decode(String),
    #[error("no fixture entry for ({}, {}, {})", .0.query_id, .0.stage, .0.slot)]
    FixtureMiss(FixtureKey),
    #[error("fixture scripts a failure for ({}, {}, {})", .0.query_id, .0.stage, .0.slot)]
    ScriptedFailure(FixtureKey),
    #[error("environment variable {0} holding the auth token is not set")]
    MissingAuth(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) => true,
            GatewayError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn send(&self, endpoint: &EndpointConfig, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    /// Wall-clock timestamp recorded on traces.
    fn now_ms(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 2, initial_backoff_ms: 250 }
    }
}

#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    parallelism: usize,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self { backend, retry: RetryPolicy::default(), parallelism: 4 }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    pub async fn complete(
        &self,
        endpoint: &EndpointConfig,
        request: &ChatRequest,
        sink: &dyn TraceSink,
    ) -> Result<ChatResponse, GatewayError> {
        let result = self.complete_with_retries(endpoint, request).await;
        let timestamp_ms = self.backend.now_ms();
        let tag = &request.tag;
        let trace = match &result {
            Ok(r) => CallTrace {
                query_id: tag.query_id.clone(),
                method: String::new(),
                stage: tag.stage,
                slot: tag.slot.clone(),
                model_id: endpoint.endpoint_id.clone(),
                input_tokens: r.input_tokens,
                output_tokens: r.output_tokens,
                latency_ms: r.latency_ms,
                neurons: r.neurons,
                ttft_ms: r.ttft_ms,
                token_counts_estimated: r.token_counts_estimated,
                failed: false,
                timestamp_ms,
            },
            Err(_) => CallTrace {
                query_id: tag.query_id.clone(),
                method: String::new(),
                stage: tag.stage,
                slot: tag.slot.clone(),
                model_id: endpoint.endpoint_id.clone(),
                input_tokens: 0,
                output_tokens: 0,
                latency_ms: 0,
                neurons: None,
                ttft_ms: None,
                token_counts_estimated: false,
                failed: true,
                timestamp_ms,
            },
        };
        sink.record(tag.order, trace);
        result
    }

    async fn complete_with_retries(
        &self,
        endpoint: &EndpointConfig,
        request: &ChatRequest,
    ) -> Result<ChatResponse, GatewayError> {
        if !request.messages.iter().any(|m| m.role == Speaker::User) {
            return Err(GatewayError::InvalidRequest("at least one user message is required".into()));
        }
        if request.max_tokens == Some(0) {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        let mut attempt = 0;
        loop {
            match self.backend.send(endpoint, request).await {
                Ok(response) => return Ok(response),
                Err(e) if e.is_retryable() && attempt < self.retry.max_retries => {
                    let backoff = self.retry.initial_backoff_ms << attempt;
                    tracing::warn!(
                        query = %request.tag.query_id,
                        slot = %request.tag.slot,
                        attempt,
                        "retrying after {e}"
                    );
                    tokio::time::sleep(Duration::from_millis(backoff)).await;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Issues the batch concurrently (bounded by the configured parallelism).
    /// Result `i` belongs to request `i`; one failure does not cancel others.
    pub async fn complete_parallel(
        &self,
        batch: &[(EndpointConfig, ChatRequest)],
        sink: &dyn TraceSink,
    ) -> Vec<Result<ChatResponse, GatewayError>> {
        stream::iter(batch.iter())
            .map(|(endpoint, request)| self.complete(endpoint, request, sink))
            .buffered(self.parallelism)
            .collect()
            .await
    }
}
