//! Chat-completion transport with retries and a bounded batch pool.

mod http;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

pub use http::{HttpTransport, API_KEY_ENV};
pub use mock::{load_fixtures, prompt_sha256, FixtureLine, MockTransport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    /// Network failure, 429 or 5xx: worth retrying.
    #[error("retryable: {0}")]
    Retryable(String),
    #[error("{0}")]
    Fatal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("gave up after {attempts} attempts: {last}")]
    TransportExhausted { attempts: u32, last: String },
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("environment variable {0} is not set")]
    AuthMissing(&'static str),
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub backoff_multiplier: f64,
    pub max_parallel: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "https://api.openai.com/v1".to_string(),
            model_name: "gpt-3.5-turbo".to_string(),
            temperature: 0.0,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            backoff_multiplier: 2.0,
            max_parallel: 4,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_parallel < 1 {
            return Err(LlmError::InvalidConfig("max_parallel must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(LlmError::InvalidConfig("temperature must be non-negative".into()));
        }
        if !(self.backoff_multiplier >= 1.0) {
            return Err(LlmError::InvalidConfig("backoff multiplier must be at least 1".into()));
        }
        Ok(())
    }

    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff
            .mul_f64(self.backoff_multiplier.powi(retry.saturating_sub(1) as i32))
    }
}

/// One request/response exchange with a model.
pub trait Transport: Send + Sync {
    fn send(&self, prompt: &str, cfg: &EndpointConfig) -> Result<String, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn send(&self, prompt: &str, cfg: &EndpointConfig) -> Result<String, TransportError> {
        (**self).send(prompt, cfg)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&self, prompt: &str, cfg: &EndpointConfig) -> Result<String, TransportError> {
        (**self).send(prompt, cfg)
    }
}

/// Single completion with exponential backoff. Makes at most
/// `max_retries + 1` attempts; fatal errors stop immediately.
pub fn complete(transport: &dyn Transport, prompt: &str, cfg: &EndpointConfig) -> Result<String, LlmError> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match transport.send(prompt, cfg) {
            Ok(reply) => return Ok(reply),
            Err(TransportError::Fatal(msg)) => return Err(LlmError::Rejected(msg)),
            Err(TransportError::Retryable(msg)) => {
                if attempts > cfg.max_retries {
                    return Err(LlmError::TransportExhausted { attempts, last: msg });
                }
                let delay = cfg.backoff(attempts);
                if !delay.is_zero() {
                    thread::sleep(delay);
                }
            }
        }
    }
}

/// Complete every prompt with at most `max_parallel` requests in flight.
/// Results come back in input order; failures stay per item.
pub fn complete_batch(
    transport: &dyn Transport,
    prompts: &[String],
    cfg: &EndpointConfig,
) -> Vec<Result<String, LlmError>> {
    if prompts.is_empty() {
        return Vec::new();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<String, LlmError>>>> = Mutex::new(vec![None; prompts.len()]);
    let workers = cfg.max_parallel.max(1).min(prompts.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= prompts.len() {
                    break;
                }
                let result = complete(transport, &prompts[i], cfg);
                results.lock().expect("result lock")[i] = Some(result);
            });
        }
    });
    results
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every index is processed"))
        .collect()
}
