//! Provider-agnostic chat completion access.
//!
//! A [`Gateway`] routes each [`ModelConfig`] to the [`Transport`] registered
//! for its provider, applying per-provider rate limits and concurrency
//! permits, and retrying transient failures with capped exponential backoff.

mod clock;
pub mod http;
pub mod mock;

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clock::{Clock, SystemClock, VirtualClock};
pub use http::{ApiFlavor, HttpTransport};
pub use mock::{MockDefault, MockReply, MockTransport};

use crate::error::{Error, Result};
use crate::util::{self, SeededRng};

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateLimit {
    pub requests: u32,
    pub window_ms: u64,
}

impl RateLimit {
    pub fn window(&self) -> Duration {
        Duration::from_millis(self.window_ms)
    }
}

/// Where the generation prompt is placed in the chat request.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessagePlacement {
    #[default]
    User,
    System,
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_OUTPUT_TOKENS
}
fn default_timeout_ms() -> u64 {
    120_000
}
fn default_retries() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    pub provider_id: String,
    /// Provider-side model name when it differs from `model_id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_model: Option<String>,
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit: Option<RateLimit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    #[serde(default)]
    pub placement: MessagePlacement,
}

impl ModelConfig {
    pub fn new(model_id: &str, provider_id: &str, temperature: f64) -> Self {
        ModelConfig {
            model_id: model_id.into(),
            provider_id: provider_id.into(),
            api_model: None,
            temperature,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            request_timeout_ms: default_timeout_ms(),
            max_retries: default_retries(),
            rate_limit: None,
            top_p: None,
            placement: MessagePlacement::User,
        }
    }

    pub fn api_model(&self) -> &str {
        self.api_model.as_deref().unwrap_or(&self.model_id)
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(format!("model {}: {msg}", self.model_id)));
        if self.model_id.is_empty()
            || !self
                .model_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
        {
            return bad("model_id must be non-empty and use only [A-Za-z0-9._-]".into());
        }
        if self.provider_id.is_empty() {
            return bad("provider_id is empty".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive".into());
        }
        if self.request_timeout_ms == 0 {
            return bad("request_timeout_ms must be positive".into());
        }
        if let Some(rl) = self.rate_limit {
            if rl.requests == 0 || rl.window_ms == 0 {
                return bad("rate_limit needs positive requests and window_ms".into());
            }
        }
        if let Some(p) = self.top_p {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("top_p {p} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Hash of everything that determines the outgoing request.
    pub fn request_fingerprint(&self, prompt: &str) -> String {
        util::sha256_hex(&[
            self.model_id.as_bytes(),
            self.provider_id.as_bytes(),
            self.api_model().as_bytes(),
            &self.temperature.to_le_bytes(),
            &self.max_output_tokens.to_le_bytes(),
            &self.top_p.unwrap_or(-1.0).to_le_bytes(),
            &[self.placement as u8],
            prompt.as_bytes(),
        ])
    }
}

/// The eight benchmarked models, all at temperature 0.4.
pub fn reference_models() -> Vec<ModelConfig> {
    let rows: [(&str, &str, Option<&str>); 8] = [
        ("gpt-4o-mini", "openai", None),
        ("claude-3-5-haiku-20241022", "anthropic", None),
        ("claude-3-7-sonnet-20250219", "anthropic", None),
        ("gemini-1.5-pro", "gemini", None),
        (
            "Llama-3.3-70B-Instruct-Turbo-Free",
            "together",
            Some("meta-llama/Llama-3.3-70B-Instruct-Turbo-Free"),
        ),
        ("deepSeek-V3", "deepseek", Some("deepseek-chat")),
        (
            "Qwen2.5-72B-Instruct-Turbo",
            "together",
            Some("Qwen/Qwen2.5-72B-Instruct-Turbo"),
        ),
        ("grok-2-1212", "xai", None),
    ];
    rows.iter()
        .map(|&(model, provider, api)| ModelConfig {
            api_model: api.map(str::to_string),
            ..ModelConfig::new(model, provider, 0.4)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackoffPolicy {
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    /// Fraction of each delay that may be randomly shaved off, in [0, 1].
    pub jitter: f64,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        BackoffPolicy {
            base_delay_ms: 500,
            max_delay_ms: 30_000,
            jitter: 0.2,
        }
    }
}

impl BackoffPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << (retry.saturating_sub(1)).min(20));
        let capped = exp.min(self.max_delay_ms) as f64;
        let jitter = self.jitter.clamp(0.0, 1.0);
        let factor = 1.0 - jitter * rng.random::<f64>();
        Duration::from_millis((capped * factor).round() as u64)
    }
}

/// One outgoing chat completion request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub provider_id: String,
    pub api_model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub top_p: Option<f64>,
    pub placement: MessagePlacement,
    pub timeout_ms: u64,
    pub fingerprint: String,
    /// FRs covered by the prompt; only used for routing scripted mocks.
    pub fr_ids: Vec<String>,
}

impl ChatRequest {
    pub fn new(config: &ModelConfig, prompt: &str, fr_ids: &[String]) -> Self {
        ChatRequest {
            model_id: config.model_id.clone(),
            provider_id: config.provider_id.clone(),
            api_model: config.api_model().to_string(),
            prompt: prompt.to_string(),
            temperature: config.temperature,
            max_output_tokens: config.max_output_tokens,
            top_p: config.top_p,
            placement: config.placement,
            timeout_ms: config.request_timeout_ms,
            fingerprint: config.request_fingerprint(prompt),
            fr_ids: fr_ids.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum TransportFailure {
    Timeout,
    Status { code: u16, body: String },
    Network(String),
    Auth(String),
    EmptyResponse,
}

impl TransportFailure {
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportFailure::Timeout | TransportFailure::Network(_) | TransportFailure::EmptyResponse => true,
            TransportFailure::Status { code, .. } => *code == 429 || *code >= 500,
            TransportFailure::Auth(_) => false,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            TransportFailure::Status { code, .. } => Some(*code),
            _ => None,
        }
    }
}

impl std::fmt::Display for TransportFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportFailure::Timeout => f.write_str("request timed out"),
            TransportFailure::Status { code, body } => write!(f, "HTTP {code}: {body}"),
            TransportFailure::Network(m) => write!(f, "network error: {m}"),
            TransportFailure::Auth(m) => write!(f, "authentication failed: {m}"),
            TransportFailure::EmptyResponse => f.write_str("empty response"),
        }
    }
}

/// Sends one request to a provider. Implementations must be thread-safe.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> std::result::Result<String, TransportFailure>;
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GatewayError {
    #[error("provider {0:?} is already registered")]
    DuplicateProvider(String),
    #[error("model {model_id:?} routes to unregistered provider {provider_id:?}")]
    UnroutableProvider { model_id: String, provider_id: String },
    #[error("model {model_id:?}: retries exhausted after {attempts} attempts, last failure: {last}")]
    Transport {
        model_id: String,
        attempts: u32,
        status: Option<u16>,
        last: String,
    },
    #[error("model {model_id:?}: timed out after {attempts} attempts")]
    Timeout { model_id: String, attempts: u32 },
    #[error("provider {provider_id:?} rejected credentials: {message}")]
    Credential { provider_id: String, message: String },
    #[error("model {model_id:?}: request rejected with HTTP {status}: {body}")]
    Rejected {
        model_id: String,
        status: u16,
        body: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCompletion {
    pub model_id: String,
    pub request_fingerprint: String,
    pub text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub timestamp_ms: u64,
}

struct Permits {
    available: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Permits {
            available: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.cv.wait(n).unwrap();
        }
        *n -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Sliding-window limiter over the issue times of one provider's requests.
#[derive(Default)]
pub struct RateLimiter {
    issued: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    /// Blocks (via `clock.sleep`) until a request may be issued, then records it.
    pub fn acquire(&self, limit: RateLimit, clock: &dyn Clock) {
        let window = limit.window();
        loop {
            let wait = {
                let mut issued = self.issued.lock().unwrap();
                let now = clock.now();
                while issued.front().is_some_and(|&t| t + window <= now) {
                    issued.pop_front();
                }
                if issued.len() < limit.requests as usize {
                    issued.push_back(now);
                    return;
                }
                *issued.front().unwrap() + window - now
            };
            clock.sleep(wait);
        }
    }
}

pub struct ProviderOptions {
    pub max_concurrency: usize,
}

impl Default for ProviderOptions {
    fn default() -> Self {
        ProviderOptions { max_concurrency: 4 }
    }
}

struct ProviderSlot {
    transport: Arc<dyn Transport>,
    permits: Permits,
    limiter: RateLimiter,
}

pub struct Gateway {
    providers: RwLock<HashMap<String, Arc<ProviderSlot>>>,
    clock: Arc<dyn Clock>,
    backoff: BackoffPolicy,
    rng: Mutex<SeededRng>,
}

impl Default for Gateway {
    fn default() -> Self {
        Gateway::new(Arc::new(SystemClock::default()), BackoffPolicy::default())
    }
}

impl Gateway {
    pub fn new(clock: Arc<dyn Clock>, backoff: BackoffPolicy) -> Self {
        Gateway {
            providers: RwLock::new(HashMap::new()),
            clock,
            backoff,
            rng: Mutex::new(util::seeded_rng(0x6a77)),
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn register_provider(
        &self,
        provider_id: &str,
        transport: Arc<dyn Transport>,
        options: ProviderOptions,
    ) -> std::result::Result<(), GatewayError> {
        let mut providers = self.providers.write().unwrap();
        if providers.contains_key(provider_id) {
            return Err(GatewayError::DuplicateProvider(provider_id.to_string()));
        }
        providers.insert(
            provider_id.to_string(),
            Arc::new(ProviderSlot {
                transport,
                permits: Permits::new(options.max_concurrency),
                limiter: RateLimiter::default(),
            }),
        );
        Ok(())
    }

    pub fn is_routable(&self, config: &ModelConfig) -> bool {
        self.providers.read().unwrap().contains_key(&config.provider_id)
    }

    fn route(&self, config: &ModelConfig) -> std::result::Result<Arc<ProviderSlot>, GatewayError> {
        self.providers
            .read()
            .unwrap()
            .get(&config.provider_id)
            .cloned()
            .ok_or_else(|| GatewayError::UnroutableProvider {
                model_id: config.model_id.clone(),
                provider_id: config.provider_id.clone(),
            })
    }

    /// Checks that every model has a registered provider.
    pub fn check_routes(&self, models: &[ModelConfig]) -> std::result::Result<(), GatewayError> {
        models.iter().try_for_each(|m| self.route(m).map(drop))
    }

    pub fn query_model(&self, config: &ModelConfig, prompt: &str) -> std::result::Result<RawCompletion, GatewayError> {
        self.query_model_for(config, prompt, &[])
    }

    /// Like [`Gateway::query_model`], tagging the request with the FRs it covers.
    pub fn query_model_for(
        &self,
        config: &ModelConfig,
        prompt: &str,
        fr_ids: &[String],
    ) -> std::result::Result<RawCompletion, GatewayError> {
        let slot = self.route(config)?;
        let request = ChatRequest::new(config, prompt, fr_ids);
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            if let Some(limit) = config.rate_limit {
                slot.limiter.acquire(limit, self.clock.as_ref());
            }
            let started = self.clock.now();
            let outcome = {
                let _permit = slot.permits.acquire();
                slot.transport.send(&request)
            };
            let failure = match outcome {
                Ok(text) if !text.trim().is_empty() => {
                    let latency = self.clock.now().saturating_sub(started);
                    return Ok(RawCompletion {
                        model_id: config.model_id.clone(),
                        request_fingerprint: request.fingerprint.clone(),
                        text,
                        latency_ms: latency.as_millis() as u64,
                        attempt_count: attempts,
                        timestamp_ms: self.clock.unix_millis(),
                    });
                }
                Ok(_) => TransportFailure::EmptyResponse,
                Err(f) => f,
            };
            log::debug!("{}: attempt {attempts} failed: {failure}", config.model_id);
            if !failure.is_retryable() {
                return Err(match failure {
                    TransportFailure::Auth(message) => GatewayError::Credential {
                        provider_id: config.provider_id.clone(),
                        message,
                    },
                    TransportFailure::Status { code, body } if code == 401 || code == 403 => GatewayError::Credential {
                        provider_id: config.provider_id.clone(),
                        message: format!("HTTP {code}: {body}"),
                    },
                    TransportFailure::Status { code, body } => GatewayError::Rejected {
                        model_id: config.model_id.clone(),
                        status: code,
                        body,
                    },
                    other => GatewayError::Transport {
                        model_id: config.model_id.clone(),
                        attempts,
                        status: other.status(),
                        last: other.to_string(),
                    },
                });
            }
            if attempts > config.max_retries {
                return Err(match failure {
                    TransportFailure::Timeout => GatewayError::Timeout {
                        model_id: config.model_id.clone(),
                        attempts,
                    },
                    other => GatewayError::Transport {
                        model_id: config.model_id.clone(),
                        attempts,
                        status: other.status(),
                        last: other.to_string(),
                    },
                });
            }
            let delay = self.backoff.delay(attempts, &mut *self.rng.lock().unwrap());
            self.clock.sleep(delay);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub id: String,
    pub api: ApiFlavor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
}

fn default_concurrency() -> usize {
    4
}

/// Gateway configuration file: providers, models and retry policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    #[serde(default)]
    pub providers: Vec<ProviderSpec>,
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub backoff: BackoffPolicy,
}

impl GatewayConfig {
    /// The eight reference models with their default HTTP providers.
    pub fn reference() -> Self {
        let provider = |id: &str, api, base: &str| ProviderSpec {
            id: id.into(),
            api,
            base_url: Some(base.into()),
            max_concurrency: default_concurrency(),
        };
        GatewayConfig {
            providers: vec![
                provider("openai", ApiFlavor::OpenAi, "https://api.openai.com/v1"),
                provider("anthropic", ApiFlavor::Anthropic, "https://api.anthropic.com"),
                provider("gemini", ApiFlavor::Gemini, "https://generativelanguage.googleapis.com"),
                provider("together", ApiFlavor::OpenAi, "https://api.together.xyz/v1"),
                provider("deepseek", ApiFlavor::OpenAi, "https://api.deepseek.com/v1"),
                provider("xai", ApiFlavor::OpenAi, "https://api.x.ai/v1"),
            ],
            models: reference_models(),
            backoff: BackoffPolicy::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: GatewayConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Validation("gateway config lists no models".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for m in &self.models {
            m.validate()?;
            if !seen.insert(m.model_id.as_str()) {
                return Err(Error::Validation(format!("model {} listed twice", m.model_id)));
            }
        }
        Ok(())
    }

    /// Distinct provider ids used by the models, in first-use order.
    pub fn model_provider_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for m in &self.models {
            if !ids.contains(&m.provider_id) {
                ids.push(m.provider_id.clone());
            }
        }
        ids
    }

    /// A gateway with an HTTP transport per configured provider.
    pub fn http_gateway(&self, clock: Arc<dyn Clock>) -> std::result::Result<Gateway, GatewayError> {
        let gateway = Gateway::new(clock, self.backoff.clone());
        for p in &self.providers {
            gateway.register_provider(
                &p.id,
                Arc::new(HttpTransport::new(&p.id, p.api, p.base_url.clone())),
                ProviderOptions {
                    max_concurrency: p.max_concurrency,
                },
            )?;
        }
        Ok(gateway)
    }

    /// A gateway answering every model from `mock`.
    pub fn mock_gateway(&self, mock: Arc<MockTransport>, clock: Arc<dyn Clock>) -> Gateway {
        let gateway = Gateway::new(clock, self.backoff.clone());
        for id in self.model_provider_ids() {
            gateway
                .register_provider(&id, mock.clone(), ProviderOptions::default())
                .expect("provider ids are distinct");
        }
        gateway
    }
}
