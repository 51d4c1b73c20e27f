//! Uniform chat-completion access: provider adapters, an offline mock,
//! retries, bounded-parallel batches and usage/cost accounting.
//!
//! A [`Gateway`] owns one [`BackendConfig`]. Every request, whether issued
//! through [`Gateway::complete`] directly or through
//! [`Gateway::batch_complete`], passes the same concurrency gate, so the
//! in-flight bound holds even when several stage workers share a gateway.

pub mod mock;
pub mod providers;

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::workers::{bounded_map, Semaphore};

pub use mock::MockBank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output: u32,
    /// Caller-supplied correlation id; must be unique within a batch.
    pub tag: String,
}

impl ChatRequest {
    pub fn new(tag: impl Into<String>, system_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            messages: Vec::new(),
            temperature: 0.7,
            max_output: 1024,
            tag: tag.into(),
        }
    }

    pub fn with_messages(mut self, messages: Vec<Message>) -> Self {
        self.messages = messages;
        self
    }

    pub fn push(mut self, message: Message) -> Self {
        self.messages.push(message);
        self
    }

    /// Messages must alternate user/assistant starting from user, and the
    /// last one must be a user turn.
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest(format!("{}: no messages", self.tag)));
        }
        for (i, m) in self.messages.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if m.role != expected {
                return Err(GatewayError::InvalidRequest(format!(
                    "{}: message {i} should be {expected:?}",
                    self.tag
                )));
            }
        }
        if self.messages.len().is_multiple_of(2) {
            return Err(GatewayError::InvalidRequest(format!(
                "{}: last message must come from the user",
                self.tag
            )));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!(
                "{}: negative temperature",
                self.tag
            )));
        }
        Ok(())
    }

    pub fn last_user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.text.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Self) {
        self.input_tokens += rhs.input_tokens;
        self.output_tokens += rhs.output_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub tag: String,
    pub text: String,
    pub usage: Usage,
    pub cost_estimate: f64,
    /// Wall-clock time of the successful attempt. Never persisted.
    #[serde(skip)]
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before attempt `n + 1`; the last entry repeats.
    #[serde(default)]
    pub backoff_ms: Vec<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_ms: vec![500, 2000, 8000],
        }
    }
}

impl RetryPolicy {
    fn delay_before(&self, attempt: u32) -> Duration {
        let idx = (attempt as usize).saturating_sub(2);
        self.backoff_ms
            .get(idx)
            .or(self.backoff_ms.last())
            .map(|&ms| Duration::from_millis(ms))
            .unwrap_or_default()
    }
}

/// Prices in currency units per million tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub input_per_mtok: f64,
    pub output_per_mtok: f64,
}

impl PriceTable {
    pub fn cost(&self, usage: Usage) -> f64 {
        (usage.input_tokens as f64 * self.input_per_mtok + usage.output_tokens as f64 * self.output_per_mtok)
            / 1_000_000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub provider: String,
    pub model: String,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub price_table: PriceTable,
    /// Overrides the provider's default endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    /// Mock fixture bank (a TOML file or a directory of text fixtures).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_fixtures: Option<PathBuf>,
    #[serde(default)]
    pub mock_seed: u64,
}

fn default_concurrency() -> usize {
    4
}

impl BackendConfig {
    pub fn mock(seed: u64) -> Self {
        Self {
            provider: "mock".into(),
            model: "mock".into(),
            max_concurrency: default_concurrency(),
            retry: RetryPolicy {
                max_attempts: 1,
                backoff_ms: Vec::new(),
            },
            price_table: PriceTable::default(),
            base_url: None,
            mock_fixtures: None,
            mock_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        self.validate_limits()?;
        if self.provider != "mock" && providers::Provider::parse(&self.provider).is_none() {
            return Err(GatewayError::Config(format!("unknown provider {:?}", self.provider)));
        }
        Ok(())
    }

    fn validate_limits(&self) -> Result<(), GatewayError> {
        if self.max_concurrency < 1 {
            return Err(GatewayError::Config("max_concurrency must be at least 1".into()));
        }
        if self.retry.max_attempts < 1 {
            return Err(GatewayError::Config("retry.max_attempts must be at least 1".into()));
        }
        if self.price_table.input_per_mtok < 0.0 || self.price_table.output_per_mtok < 0.0 {
            return Err(GatewayError::Config("prices must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("duplicate tag {0:?} in batch")]
    DuplicateTag(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider refused: {0}")]
    Content(String),
}

/// What a backend returns for one attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    /// Retryable: network failure, rate limit, server error.
    #[error("{0}")]
    Transport(String),
    /// Not retried: the provider declined the content.
    #[error("{0}")]
    Content(String),
}

/// A single-attempt completion source.
pub trait Backend: Send + Sync {
    fn send(&self, model: &str, request: &ChatRequest) -> Result<Completion, BackendError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub requests: u64,
    pub failures: u64,
    pub usage: Usage,
    pub cost: f64,
}

pub struct Gateway {
    config: BackendConfig,
    backend: Arc<dyn Backend>,
    gate: Semaphore,
    totals: Mutex<UsageTotals>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    /// Build the backend named by `config.provider`. Fails before any network
    /// activity on unknown providers or missing credentials.
    pub fn new(config: BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let backend: Arc<dyn Backend> = if config.provider == "mock" {
            let bank = match &config.mock_fixtures {
                Some(path) => MockBank::load(path, config.mock_seed)?,
                None => MockBank::new(config.mock_seed),
            };
            Arc::new(bank)
        } else {
            let provider = providers::Provider::parse(&config.provider).expect("validated above");
            Arc::new(providers::HttpBackend::from_env(provider, config.base_url.clone())?)
        };
        Ok(Self::assemble(config, backend))
    }

    /// Use a caller-supplied backend (tests, custom adapters).
    pub fn with_backend(config: BackendConfig, backend: Arc<dyn Backend>) -> Result<Self, GatewayError> {
        config.validate_limits()?;
        Ok(Self::assemble(config, backend))
    }

    fn assemble(config: BackendConfig, backend: Arc<dyn Backend>) -> Self {
        Self {
            gate: Semaphore::new(config.max_concurrency),
            config,
            backend,
            totals: Mutex::new(UsageTotals::default()),
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// One completion, retried on transport failures per the retry policy.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let policy = &self.config.retry;
        let mut last = String::new();
        for attempt in 1..=policy.max_attempts {
            if attempt > 1 {
                let delay = policy.delay_before(attempt);
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
            }
            let started = Instant::now();
            let outcome = {
                let _permit = self.gate.acquire();
                self.backend.send(&self.config.model, request)
            };
            match outcome {
                Ok(completion) => {
                    let cost = self.config.price_table.cost(completion.usage);
                    let mut totals = self.totals.lock().expect("totals poisoned");
                    totals.requests += 1;
                    totals.usage += completion.usage;
                    totals.cost += cost;
                    return Ok(ChatResponse {
                        tag: request.tag.clone(),
                        text: completion.text,
                        usage: completion.usage,
                        cost_estimate: cost,
                        latency: started.elapsed(),
                    });
                }
                Err(BackendError::Content(msg)) => {
                    self.record_failure();
                    return Err(GatewayError::Content(msg));
                }
                Err(BackendError::Transport(msg)) => {
                    log::debug!("{}: attempt {attempt} failed: {msg}", request.tag);
                    last = msg;
                }
            }
        }
        self.record_failure();
        Err(GatewayError::Transport {
            attempts: policy.max_attempts,
            message: last,
        })
    }

    /// Complete every request with at most `max_concurrency` in flight.
    /// Responses come back in request order; a failing request occupies its
    /// own slot without affecting the rest.
    pub fn batch_complete(
        &self,
        requests: &[ChatRequest],
    ) -> Result<Vec<Result<ChatResponse, GatewayError>>, GatewayError> {
        let mut seen = std::collections::HashSet::new();
        for r in requests {
            if !seen.insert(r.tag.as_str()) {
                return Err(GatewayError::DuplicateTag(r.tag.clone()));
            }
        }
        Ok(bounded_map(requests, self.config.max_concurrency, |_, r| {
            self.complete(r)
        }))
    }

    fn record_failure(&self) {
        self.totals.lock().expect("totals poisoned").failures += 1;
    }

    /// Highest number of requests observed in flight at once.
    pub fn peak_in_flight(&self) -> usize {
        self.gate.peak()
    }

    pub fn totals(&self) -> UsageTotals {
        *self.totals.lock().expect("totals poisoned")
    }
}

/// Rough token count used where a provider reports none (the mock).
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}
