use serde_json::{json, Value};

use super::{EndpointConfig, LlmError, Transport, TransportError};

/// Environment variable holding the bearer credential.
pub const API_KEY_ENV: &str = "HYPOSCORE_API_KEY";

/// OpenAI-compatible `POST {base_url}/chat/completions` with a single user message.
pub struct HttpTransport {
    agent: ureq::Agent,
    api_key: String,
}

impl HttpTransport {
    pub fn new(api_key: impl Into<String>, cfg: &EndpointConfig) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build();
        HttpTransport {
            agent: ureq::Agent::new_with_config(config),
            api_key: api_key.into(),
        }
    }

    pub fn from_env(cfg: &EndpointConfig) -> Result<Self, LlmError> {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.trim().is_empty() => Ok(HttpTransport::new(key.trim(), cfg)),
            _ => Err(LlmError::AuthMissing(API_KEY_ENV)),
        }
    }
}

pub(crate) fn request_body(prompt: &str, cfg: &EndpointConfig) -> Value {
    json!({
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
    })
}

impl Transport for HttpTransport {
    fn send(&self, prompt: &str, cfg: &EndpointConfig) -> Result<String, TransportError> {
        let url = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
        let mut response = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request_body(prompt, cfg))
            .map_err(|e| TransportError::Retryable(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Retryable(e.to_string()))?;
        match status {
            200..=299 => {}
            429 | 500..=599 => return Err(TransportError::Retryable(format!("HTTP {status}: {body}"))),
            _ => return Err(TransportError::Fatal(format!("HTTP {status}: {body}"))),
        }
        let value: Value =
            serde_json::from_str(&body).map_err(|e| TransportError::Fatal(format!("malformed response body: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError::Fatal("response has no choices[0].message.content".into()))
    }
}
