//! Language-model client used by the in-context-learning policy.
//!
//! Two backends share one interface: a deterministic mock that parses the
//! observation out of the prompt and answers with the queue-aware greedy
//! schedule, and a live HTTP backend speaking the OpenAI-style chat
//! completions shape. Transient failures (timeouts, transport errors,
//! 5xx/429 statuses) retry with exponential backoff; everything else fails
//! fast with a typed error. The transport is a trait so tests can inject
//! failures without a network.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::policy::{
    self, greedy_velocity, parse_observation_block, serialize_decision, Assignment, Decision,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LlmError {
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport failure after {attempts} attempts: {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("endpoint returned status {code} after {attempts} attempts")]
    Status { code: u16, attempts: u32 },
    #[error("endpoint reply is not a completion: {detail}")]
    BadResponse { detail: String },
    #[error("response of {chars} chars exceeds the {cap} char cap")]
    ResponseTooLarge { chars: usize, cap: usize },
    #[error("auth environment variable {env} is set but empty")]
    EmptyAuth { env: String },
    #[error("mock could not read the prompt: {reason}")]
    MalformedPrompt { reason: String },
    #[error("invalid client configuration: {reason}")]
    InvalidConfig { reason: String },
}

impl LlmError {
    /// Transient failures worth retrying: timeouts, transport drops, and
    /// overload/server statuses.
    fn retryable(&self) -> bool {
        match self {
            LlmError::Timeout { .. } | LlmError::Transport { .. } => true,
            LlmError::Status { code, .. } => *code == 429 || (500..600).contains(code),
            _ => false,
        }
    }

    fn with_attempts(self, attempts: u32) -> Self {
        match self {
            LlmError::Timeout { .. } => LlmError::Timeout { attempts },
            LlmError::Transport { detail, .. } => LlmError::Transport { attempts, detail },
            LlmError::Status { code, .. } => LlmError::Status { code, attempts },
            other => other,
        }
    }
}

/// Connection settings for the live backend. The auth token is read from
/// the environment variable named here, never stored in configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub timeout_s: f64,
    /// Retries after the first attempt; 2 means up to 3 attempts total.
    pub max_retries: u32,
    pub temperature: f64,
    pub auth_env: String,
    pub backoff_base_ms: u64,
    pub max_response_chars: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".to_string(),
            model: "local-model".to_string(),
            timeout_s: 30.0,
            max_retries: 2,
            temperature: 0.0,
            auth_env: "LLM_API_KEY".to_string(),
            backoff_base_ms: 100,
            max_response_chars: 64 * 1024,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(LlmError::InvalidConfig { reason: format!("timeout_s = {}", self.timeout_s) });
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::InvalidConfig { reason: format!("temperature = {}", self.temperature) });
        }
        if self.base_url.is_empty() {
            return Err(LlmError::InvalidConfig { reason: "empty base_url".to_string() });
        }
        if self.max_response_chars == 0 {
            return Err(LlmError::InvalidConfig { reason: "max_response_chars = 0".to_string() });
        }
        Ok(())
    }
}

/// Bookkeeping for one completed (or mocked) request.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRecord {
    pub backend: &'static str,
    pub prompt_chars: usize,
    pub response_chars: usize,
    pub latency_s: f64,
    pub attempts: u32,
}

/// One round trip to a completion endpoint. Implementations map their
/// failures onto [`LlmError`]; retry policy lives in the client.
pub trait Transport: Send {
    fn send(&mut self, prompt: &str) -> Result<String, LlmError>;
}

enum Backend {
    Mock { latency_s: f64 },
    Remote { cfg: EndpointConfig, transport: Box<dyn Transport> },
}

/// Completion client with a pluggable backend.
pub struct LlmClient {
    backend: Backend,
}

impl LlmClient {
    /// Deterministic offline backend. The reported latency is the given
    /// constant; no real waiting happens.
    pub fn mock(latency_s: f64) -> Self {
        Self { backend: Backend::Mock { latency_s } }
    }

    /// Live HTTP backend speaking the chat-completions shape.
    pub fn live(cfg: EndpointConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let transport = HttpTransport::new(&cfg)?;
        Ok(Self {
            backend: Backend::Remote { cfg, transport: Box::new(transport) },
        })
    }

    /// Live retry/backoff logic over an injected transport; used by tests
    /// to exercise failure handling without a network.
    pub fn with_transport(cfg: EndpointConfig, transport: Box<dyn Transport>) -> Result<Self, LlmError> {
        cfg.validate()?;
        Ok(Self { backend: Backend::Remote { cfg, transport } })
    }

    pub fn is_mock(&self) -> bool {
        matches!(self.backend, Backend::Mock { .. })
    }

    pub fn backend_name(&self) -> &'static str {
        match self.backend {
            Backend::Mock { .. } => "mock",
            Backend::Remote { .. } => "live",
        }
    }

    /// Sends one prompt and returns the completion text plus bookkeeping.
    pub fn complete(&mut self, prompt: &str) -> Result<(String, CompletionRecord), LlmError> {
        match &mut self.backend {
            Backend::Mock { latency_s } => {
                let text = mock_complete(prompt)?;
                let record = CompletionRecord {
                    backend: "mock",
                    prompt_chars: prompt.len(),
                    response_chars: text.len(),
                    latency_s: *latency_s,
                    attempts: 1,
                };
                Ok((text, record))
            }
            Backend::Remote { cfg, transport } => {
                let started = Instant::now();
                let mut attempts = 0u32;
                loop {
                    attempts += 1;
                    match transport.send(prompt) {
                        Ok(text) => {
                            if text.len() > cfg.max_response_chars {
                                return Err(LlmError::ResponseTooLarge {
                                    chars: text.len(),
                                    cap: cfg.max_response_chars,
                                });
                            }
                            let record = CompletionRecord {
                                backend: "live",
                                prompt_chars: prompt.len(),
                                response_chars: text.len(),
                                latency_s: started.elapsed().as_secs_f64(),
                                attempts,
                            };
                            return Ok((text, record));
                        }
                        Err(err) => {
                            if err.retryable() && attempts <= cfg.max_retries {
                                let backoff = cfg.backoff_base_ms.saturating_mul(1 << (attempts - 1));
                                if backoff > 0 {
                                    std::thread::sleep(Duration::from_millis(backoff));
                                }
                                continue;
                            }
                            return Err(err.with_attempts(attempts));
                        }
                    }
                }
            }
        }
    }
}

// ===== Mock backend =====

/// Parses the observation block embedded in the prompt and answers with
/// the queue-aware greedy schedule in wire format. Sharing the greedy rule
/// with the baseline policy makes the mock's replies exactly reproducible
/// from the observation alone.
pub fn mock_complete(prompt: &str) -> Result<String, LlmError> {
    let obs = parse_observation_block(prompt)
        .map_err(|e| LlmError::MalformedPrompt { reason: e.to_string() })?;
    let assignments = obs
        .uavs
        .iter()
        .enumerate()
        .map(|(idx, u)| Assignment {
            uav: u.id,
            sensor: obs.sensors[policy::greedy_target_for_uav(&obs, idx)].id,
            velocity_mps: greedy_velocity(u.v_max_mps, obs.mean_queue_frac),
        })
        .collect();
    Ok(serialize_decision(&Decision { assignments }))
}

// ===== Live backend =====

struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    temperature: f64,
    auth_token: Option<String>,
}

impl HttpTransport {
    fn new(cfg: &EndpointConfig) -> Result<Self, LlmError> {
        let auth_token = match std::env::var(&cfg.auth_env) {
            Ok(token) if token.is_empty() => {
                return Err(LlmError::EmptyAuth { env: cfg.auth_env.clone() })
            }
            Ok(token) => Some(token),
            // Unset is tolerated: local endpoints often need no auth.
            Err(_) => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_s))
            .build()
            .map_err(|e| LlmError::InvalidConfig { reason: e.to_string() })?;
        Ok(Self {
            client,
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            auth_token,
        })
    }
}

impl Transport for HttpTransport {
    fn send(&mut self, prompt: &str) -> Result<String, LlmError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(token) = &self.auth_token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout { attempts: 0 }
            } else {
                LlmError::Transport { attempts: 0, detail: e.to_string() }
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LlmError::Status { code: status.as_u16(), attempts: 0 });
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| LlmError::BadResponse { detail: e.to_string() })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::BadResponse {
                detail: "missing choices[0].message.content".to_string(),
            })
    }
}

// ===== Tests =====
