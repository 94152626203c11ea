//! Chat-completion gateway.
//!
//! One [`Gateway`] is shared by all workers of a run. It owns the rate
//! limiter and the cassette and applies retries with exponential backoff.
//! Three modes:
//!
//! * **live**: every call goes to the transport;
//! * **record**: cassette hits are served locally, misses go to the
//!   transport and are appended to the cassette;
//! * **replay**: only the cassette is consulted; a miss is an error and the
//!   transport is never touched.
//!
//! Requests are identified by a fingerprint over prompt, model, temperature
//! and an optional salt (retry attempt or evaluation run index).

mod cassette;
#[cfg(feature = "http")]
mod http;
pub mod mock;
mod rate;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, CassetteEntry};
#[cfg(feature = "http")]
pub use http::HttpTransport;
pub use rate::RateLimiter;

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_rpm() -> u32 {
    60
}
fn default_backoff_initial() -> u64 {
    500
}
fn default_backoff_max() -> u64 {
    30_000
}

/// Where and how to reach a chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer key; `None` for keyless
    /// local servers.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_backoff_initial")]
    pub backoff_initial_ms: u64,
    #[serde(default = "default_backoff_max")]
    pub backoff_max_ms: u64,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            requests_per_minute: default_rpm(),
            temperature: 0.0,
            backoff_initial_ms: default_backoff_initial(),
            backoff_max_ms: default_backoff_max(),
        }
    }

    /// A config for scripted/offline use: no backoff delay, generous rate.
    pub fn offline(model_name: impl Into<String>) -> Self {
        EndpointConfig {
            requests_per_minute: 1_000_000,
            backoff_initial_ms: 0,
            backoff_max_ms: 0,
            ..EndpointConfig::new("http://offline.invalid/v1", model_name)
        }
    }

    // negated comparisons so NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.requests_per_minute == 0 {
            return Err(GatewayError::Config("requests_per_minute must be > 0".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(GatewayError::Config("timeout_secs must be > 0".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::Config("temperature must be a finite value >= 0".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(GatewayError::Config("model_name must not be empty".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Backoff before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
        let ms = self.backoff_initial_ms.saturating_mul(factor).min(self.backoff_max_ms);
        Duration::from_millis(ms)
    }
}

/// Stable request identity. Hex SHA-256 over model, temperature, salt and
/// prompt; an empty salt covers exactly prompt + model + temperature.
pub fn fingerprint(prompt: &str, model: &str, temperature: f64, salt: &str) -> String {
    let mut h = Sha256::new();
    h.update(b"model\0");
    h.update(model.as_bytes());
    h.update(b"\0temperature\0");
    h.update(format!("{temperature}").as_bytes());
    if !salt.is_empty() {
        h.update(b"\0salt\0");
        h.update(salt.as_bytes());
    }
    h.update(b"\0prompt\0");
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

pub fn prompt_sha(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// A single-message chat request.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("connection error: {0}")]
    Io(String),
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("transport aborted: {0}")]
    Aborted(String),
}

impl TransportError {
    /// 429, 5xx, connection failures and timeouts are retried.
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            TransportError::Io(_) | TransportError::Timeout => true,
            TransportError::Protocol(_) | TransportError::Aborted(_) => false,
        }
    }
}

/// Something that can send one chat request.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub attempt: u32,
    pub error: String,
    pub transient: bool,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("environment variable `{0}` with the API key is not set")]
    MissingApiKey(String),
    #[error("cassette has no entry for fingerprint {fingerprint}")]
    CassetteMiss { fingerprint: String },
    #[error("request failed after {} attempt(s): {}", attempts.len(), attempts.last().map(|a| a.error.as_str()).unwrap_or(""))]
    Transport { attempts: Vec<AttemptLog> },
    #[error("cassette storage: {0}")]
    Storage(String),
}

impl GatewayError {
    pub fn attempt_log(&self) -> &[AttemptLog] {
        match self {
            GatewayError::Transport { attempts } => attempts,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Transport attempts used; 0 when served from the cassette.
    pub attempts: u32,
    pub latency_ms: u64,
    pub fingerprint: String,
}

/// Shareable completion client.
pub struct Gateway {
    cfg: EndpointConfig,
    mode: Mode,
    transport: Option<Arc<dyn Transport>>,
    cassette: Option<Arc<Cassette>>,
    limiter: RateLimiter,
    network_requests: AtomicU64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("model", &self.cfg.model_name).field("mode", &self.mode).finish()
    }
}

impl Gateway {
    fn build(
        cfg: EndpointConfig,
        mode: Mode,
        transport: Option<Arc<dyn Transport>>,
        cassette: Option<Arc<Cassette>>,
    ) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let limiter = RateLimiter::per_minute(cfg.requests_per_minute);
        Ok(Gateway { cfg, mode, transport, cassette, limiter, network_requests: AtomicU64::new(0) })
    }

    pub fn live(cfg: EndpointConfig, transport: Arc<dyn Transport>) -> Result<Self, GatewayError> {
        Gateway::build(cfg, Mode::Live, Some(transport), None)
    }

    pub fn recording(
        cfg: EndpointConfig,
        transport: Arc<dyn Transport>,
        cassette: Arc<Cassette>,
    ) -> Result<Self, GatewayError> {
        Gateway::build(cfg, Mode::Record, Some(transport), Some(cassette))
    }

    /// Offline gateway; never performs network activity.
    pub fn replay(cfg: EndpointConfig, cassette: Arc<Cassette>) -> Result<Self, GatewayError> {
        Gateway::build(cfg, Mode::Replay, None, Some(cassette))
    }

    /// Live gateway over the OpenAI-compatible HTTP transport.
    #[cfg(feature = "http")]
    pub fn http(cfg: EndpointConfig) -> Result<Self, GatewayError> {
        let transport = HttpTransport::new(&cfg)?;
        Gateway::live(cfg, Arc::new(transport))
    }

    /// Recording gateway over the HTTP transport.
    #[cfg(feature = "http")]
    pub fn http_recording(cfg: EndpointConfig, cassette: Arc<Cassette>) -> Result<Self, GatewayError> {
        let transport = HttpTransport::new(&cfg)?;
        Gateway::recording(cfg, Arc::new(transport), cassette)
    }

    /// Replaces the rate limiter (e.g. a shorter window in tests).
    pub fn with_rate_limiter(mut self, limiter: RateLimiter) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn cassette(&self) -> Option<&Arc<Cassette>> {
        self.cassette.as_ref()
    }

    /// Number of transport sends issued so far (including failed attempts).
    pub fn network_requests(&self) -> u64 {
        self.network_requests.load(Ordering::SeqCst)
    }

    pub fn fingerprint(&self, prompt: &str, salt: &str) -> String {
        fingerprint(prompt, &self.cfg.model_name, self.cfg.temperature, salt)
    }

    pub fn complete(&self, prompt: &str) -> Result<Completion, GatewayError> {
        self.complete_salted(prompt, "")
    }

    /// Completes `prompt`; `salt` distinguishes otherwise identical requests
    /// (retry attempts, evaluation runs).
    pub fn complete_salted(&self, prompt: &str, salt: &str) -> Result<Completion, GatewayError> {
        let fp = self.fingerprint(prompt, salt);
        if let Some(cassette) = &self.cassette {
            if let Some(entry) = cassette.get(&fp) {
                return Ok(Completion {
                    text: entry.completion,
                    attempts: 0,
                    latency_ms: entry.latency_ms,
                    fingerprint: fp,
                });
            }
        }
        if self.mode == Mode::Replay {
            return Err(GatewayError::CassetteMiss { fingerprint: fp });
        }
        let completion = self.send_with_retries(prompt, fp)?;
        if let Some(cassette) = &self.cassette {
            cassette
                .insert(CassetteEntry {
                    fingerprint: completion.fingerprint.clone(),
                    prompt_sha: prompt_sha(prompt),
                    completion: completion.text.clone(),
                    latency_ms: completion.latency_ms,
                })
                .map_err(|e| GatewayError::Storage(e.to_string()))?;
        }
        Ok(completion)
    }

    fn send_with_retries(&self, prompt: &str, fp: String) -> Result<Completion, GatewayError> {
        let transport =
            self.transport.as_ref().ok_or_else(|| GatewayError::Config("no transport configured".into()))?;
        let request = ChatRequest {
            model: self.cfg.model_name.clone(),
            prompt: prompt.to_string(),
            temperature: self.cfg.temperature,
            timeout: self.cfg.timeout(),
        };
        let mut log = Vec::new();
        for attempt in 1..=self.cfg.max_retries + 1 {
            self.limiter.acquire();
            self.network_requests.fetch_add(1, Ordering::SeqCst);
            let started = Instant::now();
            match transport.send(&request) {
                Ok(text) => {
                    return Ok(Completion {
                        text,
                        attempts: attempt,
                        latency_ms: started.elapsed().as_millis() as u64,
                        fingerprint: fp,
                    })
                }
                Err(err) => {
                    let transient = err.is_transient();
                    tracing::debug!(attempt, %err, transient, "completion attempt failed");
                    log.push(AttemptLog { attempt, error: err.to_string(), transient });
                    if !transient || attempt > self.cfg.max_retries {
                        break;
                    }
                    std::thread::sleep(self.cfg.backoff(attempt));
                }
            }
        }
        Err(GatewayError::Transport { attempts: log })
    }
}

#[cfg(test)]
mod tests {
    use super::mock::FnTransport;
    use super::*;

    fn cfg() -> EndpointConfig {
        EndpointConfig::offline("mock-model")
    }

    #[test]
    fn fingerprint_depends_on_every_input() {
        let base = fingerprint("p", "m", 0.0, "");
        assert_eq!(base, fingerprint("p", "m", 0.0, ""));
        assert_ne!(base, fingerprint("p", "m", 0.7, ""));
        assert_ne!(base, fingerprint("p", "m2", 0.0, ""));
        assert_ne!(base, fingerprint("p2", "m", 0.0, ""));
        assert_ne!(base, fingerprint("p", "m", 0.0, "run=1"));
        assert_eq!(base.len(), 64);
    }

    #[test]
    fn fingerprint_is_stable_across_processes() {
        // computed independently with python hashlib; changing it invalidates shipped cassettes
        assert_eq!(
            fingerprint("hello", "gpt-4o", 0.0, ""),
            "e8e1b6724337c27c5c46e2682b1f8455e2e680b5872cf2ea881e2e13683dd860"
        );
    }

    #[test]
    fn retries_transient_failures() {
        let t = Arc::new(FnTransport::new(|_req, call| {
            if call < 2 {
                Err(TransportError::Status { status: 503, body: "busy".into() })
            } else {
                Ok("done".into())
            }
        }));
        let gw = Gateway::live(EndpointConfig { max_retries: 3, ..cfg() }, t.clone()).unwrap();
        let c = gw.complete("p").unwrap();
        assert_eq!(c.text, "done");
        assert_eq!(c.attempts, 3);
        assert_eq!(t.calls(), 3);
    }

    #[test]
    fn permanent_failure_carries_attempt_log() {
        let t = Arc::new(FnTransport::new(|_req, _| Err(TransportError::Timeout)));
        let gw = Gateway::live(EndpointConfig { max_retries: 2, ..cfg() }, t.clone()).unwrap();
        let err = gw.complete("p").unwrap_err();
        assert_eq!(err.attempt_log().len(), 3);
        assert_eq!(t.calls(), 3);

        let t =
            Arc::new(FnTransport::new(|_req, _| Err(TransportError::Status { status: 401, body: "bad key".into() })));
        let gw = Gateway::live(EndpointConfig { max_retries: 5, ..cfg() }, t.clone()).unwrap();
        let err = gw.complete("p").unwrap_err();
        assert_eq!(err.attempt_log().len(), 1, "4xx is not retried");
    }

    #[test]
    fn replay_miss_names_fingerprint() {
        let gw = Gateway::replay(cfg(), Arc::new(Cassette::in_memory())).unwrap();
        match gw.complete("unknown") {
            Err(GatewayError::CassetteMiss { fingerprint }) => {
                assert_eq!(fingerprint, gw.fingerprint("unknown", ""))
            }
            other => panic!("expected miss, got {other:?}"),
        }
    }

    #[test]
    fn record_dedups_identical_prompts() {
        let t = Arc::new(FnTransport::new(|req, call| Ok(format!("{}#{call}", req.prompt))));
        let cassette = Arc::new(Cassette::in_memory());
        let gw = Gateway::recording(cfg(), t.clone(), cassette.clone()).unwrap();
        let a = gw.complete("same").unwrap();
        let b = gw.complete("same").unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(cassette.len(), 1);
        assert_eq!(t.calls(), 1);
    }

    #[test]
    fn invalid_config_rejected() {
        let t: Arc<dyn Transport> = Arc::new(FnTransport::new(|_, _| Ok(String::new())));
        assert!(Gateway::live(EndpointConfig { requests_per_minute: 0, ..cfg() }, t.clone()).is_err());
        assert!(Gateway::live(EndpointConfig { timeout_secs: 0.0, ..cfg() }, t).is_err());
    }

    #[test]
    fn backoff_is_exponential_and_capped() {
        let c = EndpointConfig { backoff_initial_ms: 100, backoff_max_ms: 350, ..cfg() };
        assert_eq!(c.backoff(1), Duration::from_millis(100));
        assert_eq!(c.backoff(2), Duration::from_millis(200));
        assert_eq!(c.backoff(3), Duration::from_millis(350));
        assert_eq!(c.backoff(40), Duration::from_millis(350));
    }
}
