//! Provider-agnostic chat-completion transport.
//!
//! A [`ChatProvider`] makes exactly one attempt; [`LlmClient`] adds the
//! retry policy (exponential backoff with upward-only jitter so the
//! schedule is monotone), a concurrency gate, and usage accounting. The
//! [`MockProvider`] answers offline and deterministically: scripted replies
//! by prompt fingerprint, kind-aware synthesized replies otherwise.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::prompt::{PromptBundle, PromptKind};

/// Transport configuration. The credential itself is never stored: only the
/// name of the environment variable holding it, read at call time.
#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout: Duration,
    pub max_concurrency: usize,
    pub credential_env: String,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model_id: "gpt-4".into(),
            temperature: 0.0,
            max_retries: 3,
            timeout: Duration::from_secs(60),
            max_concurrency: 4,
            credential_env: "AUTOGRADE_API_KEY".into(),
            backoff_base: Duration::from_millis(250),
            backoff_cap: Duration::from_secs(10),
        }
    }
}

/// One attempt's failure, classified for the retry policy.
#[derive(Debug, Error)]
pub enum AttemptError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("throttled: {0}")]
    Throttled(String),
    #[error("server error: {0}")]
    Server(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("network error: {0}")]
    Network(String),
}

impl AttemptError {
    fn retryable(&self) -> bool {
        matches!(
            self,
            AttemptError::Throttled(_)
                | AttemptError::Server(_)
                | AttemptError::Timeout(_)
                | AttemptError::Network(_)
        )
    }
}

/// Final transport outcome after the retry policy has run.
#[derive(Debug, Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts: {last}")]
    RateLimited { attempts: u32, last: String },
    #[error("timed out after {attempts} attempts: {last}")]
    Timeout { attempts: u32, last: String },
    #[error("unparseable provider response: {0}")]
    Protocol(String),
    #[error("transport failed after {attempts} attempts: {last}")]
    Transport { attempts: u32, last: String },
}

impl LlmError {
    pub fn is_auth(&self) -> bool {
        matches!(self, LlmError::Auth(_))
    }
}

pub struct ProviderReply {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// A single chat-completion attempt against some backend.
pub trait ChatProvider: Send + Sync {
    fn complete(
        &self,
        prompt: &PromptBundle,
        config: &ProviderConfig,
    ) -> Result<ProviderReply, AttemptError>;
}

/// Request/response pair with transport metadata.
#[derive(Debug, Clone)]
pub struct ChatExchange {
    pub messages: Vec<crate::prompt::Message>,
    pub fingerprint: String,
    pub response: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency: Duration,
    pub attempts: u32,
}

/// Backoff delay before retry number `attempt` (0-based). Jitter only ever
/// lengthens the delay, and the cap is applied last, so the schedule is
/// nondecreasing for every jitter sequence.
fn backoff_delay(attempt: u32, base: Duration, cap: Duration, jitter01: f64) -> Duration {
    let exp = base.as_secs_f64() * 2f64.powi(attempt as i32);
    let jittered = exp * (1.0 + 0.25 * jitter01.clamp(0.0, 1.0));
    Duration::from_secs_f64(jittered.min(cap.as_secs_f64()))
}

/// Counting semaphore bounding in-flight provider calls.
struct Gate {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.gate.permits.lock().unwrap();
        *permits += 1;
        self.gate.cv.notify_one();
    }
}

/// Shareable client: one provider, one config, one concurrency gate.
pub struct LlmClient {
    provider: Arc<dyn ChatProvider>,
    config: ProviderConfig,
    gate: Gate,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

impl LlmClient {
    pub fn new(provider: Arc<dyn ChatProvider>, config: ProviderConfig) -> Self {
        let gate = Gate::new(config.max_concurrency);
        Self {
            provider,
            config,
            gate,
            prompt_tokens: AtomicU64::new(0),
            completion_tokens: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// (prompt tokens, completion tokens) used so far.
    pub fn usage(&self) -> (u64, u64) {
        (
            self.prompt_tokens.load(Ordering::Relaxed),
            self.completion_tokens.load(Ordering::Relaxed),
        )
    }

    /// Sends the prompt, retrying transient failures (throttling, 5xx,
    /// timeouts, network drops) with exponential backoff and jitter up to
    /// `max_retries`. Authentication and malformed-request failures are
    /// never retried.
    pub fn chat_complete(&self, prompt: &PromptBundle) -> Result<ChatExchange, LlmError> {
        let _permit = self.gate.acquire();
        let started = Instant::now();
        let mut attempt = 0u32;
        loop {
            match self.provider.complete(prompt, &self.config) {
                Ok(reply) => {
                    if reply.text.trim().is_empty() {
                        return Err(LlmError::Protocol("empty completion text".into()));
                    }
                    self.prompt_tokens
                        .fetch_add(reply.prompt_tokens, Ordering::Relaxed);
                    self.completion_tokens
                        .fetch_add(reply.completion_tokens, Ordering::Relaxed);
                    return Ok(ChatExchange {
                        messages: prompt.messages.clone(),
                        fingerprint: prompt.fingerprint.clone(),
                        response: reply.text,
                        prompt_tokens: reply.prompt_tokens,
                        completion_tokens: reply.completion_tokens,
                        latency: started.elapsed(),
                        attempts: attempt + 1,
                    });
                }
                Err(err) => {
                    let attempts = attempt + 1;
                    if !err.retryable() {
                        return Err(match err {
                            AttemptError::Auth(msg) => LlmError::Auth(msg),
                            AttemptError::Protocol(msg) => LlmError::Protocol(msg),
                            other => LlmError::Transport {
                                attempts,
                                last: other.to_string(),
                            },
                        });
                    }
                    if attempt >= self.config.max_retries {
                        return Err(match err {
                            AttemptError::Throttled(msg) => LlmError::RateLimited {
                                attempts,
                                last: msg,
                            },
                            AttemptError::Timeout(msg) => LlmError::Timeout {
                                attempts,
                                last: msg,
                            },
                            other => LlmError::Transport {
                                attempts,
                                last: other.to_string(),
                            },
                        });
                    }
                    let delay = backoff_delay(
                        attempt,
                        self.config.backoff_base,
                        self.config.backoff_cap,
                        rand::random::<f64>(),
                    );
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// HTTP provider (single POST endpoint, chat-completion body shape)
// ---------------------------------------------------------------------------

/// POSTs `{model, messages, temperature}` to the configured endpoint with a
/// bearer token from the credential environment variable and returns the
/// first choice's message content. The credential is read per call and
/// never stored or echoed into errors.
pub struct HttpProvider;

impl ChatProvider for HttpProvider {
    fn complete(
        &self,
        prompt: &PromptBundle,
        config: &ProviderConfig,
    ) -> Result<ProviderReply, AttemptError> {
        let credential = std::env::var(&config.credential_env).map_err(|_| {
            AttemptError::Auth(format!(
                "credential environment variable {} is not set",
                config.credential_env
            ))
        })?;
        if config.endpoint.is_empty() {
            return Err(AttemptError::Protocol("no endpoint configured".into()));
        }

        let body = serde_json::json!({
            "model": config.model_id,
            "messages": prompt
                .messages
                .iter()
                .map(|m| serde_json::json!({"role": m.role.as_str(), "content": m.content}))
                .collect::<Vec<_>>(),
            "temperature": config.temperature,
        });

        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let result = agent
            .post(&config.endpoint)
            .header("Authorization", &format!("Bearer {credential}"))
            .send_json(&body);

        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) => {
                return Err(match code {
                    401 | 403 => AttemptError::Auth(format!("endpoint returned {code}")),
                    429 => AttemptError::Throttled("endpoint returned 429".into()),
                    c if c >= 500 => AttemptError::Server(format!("endpoint returned {c}")),
                    c => AttemptError::Protocol(format!("unexpected status {c}")),
                });
            }
            Err(ureq::Error::Timeout(t)) => {
                return Err(AttemptError::Timeout(format!("{t}")));
            }
            Err(e) => return Err(AttemptError::Network(e.to_string())),
        };

        let value: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| AttemptError::Protocol(format!("body is not JSON: {e}")))?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| AttemptError::Protocol("missing choices[0].message.content".into()))?
            .to_string();
        let usage = &value["usage"];
        Ok(ProviderReply {
            text,
            prompt_tokens: usage["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: usage["completion_tokens"].as_u64().unwrap_or(0),
        })
    }
}

// ---------------------------------------------------------------------------
// deterministic mock provider
// ---------------------------------------------------------------------------

/// Deterministic reply synthesizer for unscripted prompts.
pub type FallbackRule = dyn Fn(&PromptBundle) -> String + Send + Sync;

/// Offline provider: scripted replies by fingerprint, otherwise a
/// synthesized reply from the fallback rule (by default one appropriate
/// for the prompt kind). The same prompt always gets the same reply.
/// Failure injection and in-flight instrumentation support the transport
/// tests.
pub struct MockProvider {
    script: HashMap<String, String>,
    fallback: Box<FallbackRule>,
    injected_failures: Mutex<Vec<AttemptError>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    call_count: AtomicUsize,
    hold: Duration,
}

/// Builds a mock provider with scripted replies keyed by prompt
/// fingerprint and the given fallback synthesizer for everything else.
pub fn mock_provider_with(
    script: HashMap<String, String>,
    fallback_rule: impl Fn(&PromptBundle) -> String + Send + Sync + 'static,
) -> MockProvider {
    let mut provider = MockProvider::new(script);
    provider.fallback = Box::new(fallback_rule);
    provider
}

/// Builds a mock provider with scripted replies and the default kind-aware
/// fallback.
pub fn mock_provider(script: HashMap<String, String>) -> MockProvider {
    MockProvider::new(script)
}

impl MockProvider {
    pub fn new(script: HashMap<String, String>) -> Self {
        Self {
            script,
            fallback: Box::new(Self::synthesize),
            injected_failures: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            call_count: AtomicUsize::new(0),
            hold: Duration::ZERO,
        }
    }

    /// Failures consumed (in order) before any successful reply.
    pub fn with_failures(mut self, mut failures: Vec<AttemptError>) -> Self {
        failures.reverse(); // popped from the back
        self.injected_failures = Mutex::new(failures);
        self
    }

    /// Keeps each call busy for `hold`, making concurrency observable.
    pub fn with_hold(mut self, hold: Duration) -> Self {
        self.hold = hold;
        self
    }

    pub fn max_in_flight_seen(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> usize {
        self.call_count.load(Ordering::SeqCst)
    }

    fn synthesize(prompt: &PromptBundle) -> String {
        let fp = fingerprint_seed(&prompt.fingerprint);
        let tag = &prompt.fingerprint[..8.min(prompt.fingerprint.len())];
        match prompt.kind {
            PromptKind::Evaluate => {
                let score = 1 + (fp % 10);
                let aspects = [
                    "the sampling frame",
                    "cost-effectiveness",
                    "representativeness",
                    "practical implementation",
                    "the stated justification",
                    "the link between method and scenario",
                ];
                let aspect = aspects[(fp / 10) as usize % aspects.len()];
                format!(
                    "SCORE: {score}/10\n\
                     ERRORS:\n\
                     - The answer does not fully address {aspect}.\n\
                     WHY:\n\
                     Marks were lost because {aspect} is required by the marking scheme and the \
                     response covers it only partially (case {tag}).\n\
                     IMPROVE:\n\
                     - Revisit {aspect} and connect it explicitly to the question.\n\
                     - State the assumptions behind your approach.\n"
                )
            }
            PromptKind::Refine => format!(
                "{{\"criteria\": [\
                 {{\"description\": \"Core approach\", \"alternatives\": [\
                 {{\"marks\": 4, \"condition\": \"identifies an appropriate method and applies it correctly (variant {tag})\"}}]}}, \
                 {{\"description\": \"Justification\", \"alternatives\": [\
                 {{\"marks\": 3, \"condition\": \"explains why the approach fits the scenario\"}}]}}, \
                 {{\"description\": \"Practicality\", \"alternatives\": [\
                 {{\"marks\": 3, \"condition\": \"addresses feasibility and limitations\"}}]}}]}}"
            ),
            PromptKind::Summarize => format!(
                "1. Missing justification for the chosen approach.\n\
                 2. Practical constraints not addressed.\n\
                 3. Weak link between the method and the scenario (corpus {tag}).\n"
            ),
        }
    }
}

fn fingerprint_seed(fingerprint: &str) -> u64 {
    u64::from_str_radix(&fingerprint[..16.min(fingerprint.len())], 16).unwrap_or(0)
}

impl ChatProvider for MockProvider {
    fn complete(
        &self,
        prompt: &PromptBundle,
        _config: &ProviderConfig,
    ) -> Result<ProviderReply, AttemptError> {
        self.call_count.fetch_add(1, Ordering::SeqCst);
        if let Some(failure) = self.injected_failures.lock().unwrap().pop() {
            return Err(failure);
        }

        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        if !self.hold.is_zero() {
            std::thread::sleep(self.hold);
        }

        let text = self
            .script
            .get(&prompt.fingerprint)
            .cloned()
            .unwrap_or_else(|| (self.fallback)(prompt));
        let reply = ProviderReply {
            prompt_tokens: prompt
                .messages
                .iter()
                .map(|m| m.content.split_whitespace().count() as u64)
                .sum(),
            completion_tokens: text.split_whitespace().count() as u64,
            text,
        };

        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        Ok(reply)
    }
}
