use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EndpointConfig, Transport, TransportError};

pub fn prompt_sha256(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// One line of a mock fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureLine {
    pub prompt_sha256: String,
    pub reply: String,
}

/// Deterministic transport answering from a prompt-hash → reply map.
///
/// Prompts without a fixture fail fatally. Optional scripted failures,
/// per-prompt delays and an in-flight counter support retry and
/// concurrency tests.
#[derive(Debug, Default)]
pub struct MockTransport {
    replies: HashMap<String, String>,
    delays: HashMap<String, Duration>,
    fail_first: usize,
    attempts: AtomicUsize,
    failures_left: Mutex<HashMap<String, usize>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl MockTransport {
    pub fn new() -> Self {
        MockTransport::default()
    }

    pub fn from_fixtures(lines: impl IntoIterator<Item = FixtureLine>) -> Self {
        MockTransport {
            replies: lines.into_iter().map(|l| (l.prompt_sha256, l.reply)).collect(),
            ..MockTransport::default()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(MockTransport::from_fixtures(load_fixtures(path)?))
    }

    pub fn with_reply(mut self, prompt: &str, reply: &str) -> Self {
        self.replies.insert(prompt_sha256(prompt), reply.to_string());
        self
    }

    pub fn with_delay(mut self, prompt: &str, delay: Duration) -> Self {
        self.delays.insert(prompt_sha256(prompt), delay);
        self
    }

    /// Each prompt fails with a retryable error `n` times before answering.
    pub fn fail_first(mut self, n: usize) -> Self {
        self.fail_first = n;
        self
    }

    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    fn respond(&self, hash: &str) -> Result<String, TransportError> {
        if let Some(delay) = self.delays.get(hash) {
            thread::sleep(*delay);
        }
        if self.fail_first > 0 {
            let mut left = self.failures_left.lock().expect("mock lock");
            let remaining = left.entry(hash.to_string()).or_insert(self.fail_first);
            if *remaining > 0 {
                *remaining -= 1;
                return Err(TransportError::Retryable("scripted mock failure".into()));
            }
        }
        self.replies
            .get(hash)
            .cloned()
            .ok_or_else(|| TransportError::Fatal(format!("no mock fixture for prompt sha256 {hash}")))
    }
}

impl Transport for MockTransport {
    fn send(&self, prompt: &str, _cfg: &EndpointConfig) -> Result<String, TransportError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        let result = self.respond(&prompt_sha256(prompt));
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

/// Read a JSONL fixture file of `{"prompt_sha256": ..., "reply": ...}` lines.
pub fn load_fixtures(path: impl AsRef<Path>) -> io::Result<Vec<FixtureLine>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fixture: FixtureLine = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", idx + 1)))?;
        lines.push(fixture);
    }
    Ok(lines)
}
