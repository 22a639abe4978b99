use std::time::Instant;

use async_trait::async_trait;
use serde_json::{json, Value};

use super::{estimate_tokens, ChatBackend, ChatRequest, ChatResponse, EndpointConfig, GatewayError};

/// Live adapter for chat-completions style endpoints.
///
/// Request body: `{"messages": [...], "temperature": t, "max_tokens": n}`.
/// The reply's text and usage are read through the endpoint's
/// [`ResponseMapping`](super::ResponseMapping).
#[derive(Debug, Clone, Default)]
pub struct HttpBackend {
    client: reqwest::Client,
}

impl HttpBackend {
    pub fn new() -> Self {
        Self { client: reqwest::Client::new() }
    }

    /// Checks that every endpoint's auth variable is present in the
    /// environment, naming the first missing one.
    pub fn check_auth<'a>(endpoints: impl IntoIterator<Item = &'a EndpointConfig>) -> Result<(), GatewayError> {
        for ep in endpoints {
            if let Some(var) = &ep.auth_token_ref {
                if std::env::var(var).map(|v| v.is_empty()).unwrap_or(true) {
                    return Err(GatewayError::MissingAuth(var.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn request_body(endpoint: &EndpointConfig, request: &ChatRequest) -> Value {
        let mut body = json!({
            "messages": request.messages,
            "temperature": request.effective_temperature(endpoint),
            "max_tokens": request.effective_max_tokens(endpoint),
        });
        if endpoint.include_model_field {
            body["model"] = Value::String(endpoint.endpoint_id.clone());
        }
        body
    }

    pub fn url(endpoint: &EndpointConfig) -> String {
        endpoint.base_url.replace("{endpoint_id}", &endpoint.endpoint_id)
    }

    /// Pulls text and usage out of a decoded body. Absent usage falls back to
    /// the `ceil(chars / 4)` estimate and marks the response as estimated.
    pub fn decode(
        endpoint: &EndpointConfig,
        request: &ChatRequest,
        body: &Value,
        latency_ms: u64,
    ) -> Result<ChatResponse, GatewayError> {
        let mapping = &endpoint.response;
        let text = resolve_path(body, &mapping.text)
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::Decode(format!("no string at {:?}", mapping.text)))?
            .to_string();
        let count = |path: &Option<String>| path.as_deref().and_then(|p| resolve_path(body, p)).and_then(Value::as_u64);
        let input = count(&mapping.input_tokens);
        let output = count(&mapping.output_tokens);
        Ok(ChatResponse {
            input_tokens: input.unwrap_or_else(|| estimate_tokens(request.prompt_chars())),
            output_tokens: output.unwrap_or_else(|| estimate_tokens(text.chars().count())),
            token_counts_estimated: input.is_none() || output.is_none(),
            neurons: count(&mapping.neurons),
            ttft_ms: count(&mapping.ttft_ms),
            latency_ms,
            text,
        })
    }
}

/// Walks a dot-separated path; numeric segments index arrays.
pub fn resolve_path<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').filter(|s| !s.is_empty()).try_fold(value, |v, seg| match v {
        Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get(i)),
        Value::Object(map) => map.get(seg),
        _ => None,
    })
}

#[async_trait]
impl ChatBackend for HttpBackend {
    async fn send(&self, endpoint: &EndpointConfig, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut builder = self
            .client
            .post(Self::url(endpoint))
            .json(&Self::request_body(endpoint, request));
        if let Some(var) = &endpoint.auth_token_ref {
            let token = std::env::var(var).map_err(|_| GatewayError::MissingAuth(var.clone()))?;
            builder = builder.bearer_auth(token);
        }
        let started = Instant::now();
        let response = builder
            .send()
            .await
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = response.status();
        let bytes = response
            .bytes()
            .await
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let latency_ms = started.elapsed().as_millis() as u64;
        if !status.is_success() {
            return Err(GatewayError::Status {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&bytes).into_owned(),
            });
        }
        let body: Value = serde_json::from_slice(&bytes).map_err(|e| GatewayError::Decode(e.to_string()))?;
        Self::decode(endpoint, request, &body, latency_ms)
    }
}
