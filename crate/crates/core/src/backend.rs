//! Chat-completion backends: an HTTP client for remote endpoints, a
//! deterministic keyword stub, and a scripted double for protocol tests.
//!
//! The wire format is the common chat-completions shape: JSON with `model`,
//! `messages[{role, content}]`, `temperature`, and `max_tokens`, bearer
//! credential taken from a named environment variable.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parsing::YesNo;
use crate::prompts::{
    cascade_label_prompt, cascade_step2_prompt, extract_input_text, ChatMessage, PromptStrategy,
    Role,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API credential.
    pub api_key_ref: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
}

fn default_timeout_ms() -> u64 {
    60_000
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_parallel() -> usize {
    4
}

impl BackendConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.timeout_ms == 0 {
            return Err(BackendError::InvalidConfig("timeout must be positive".into()));
        }
        if self.max_parallel == 0 {
            return Err(BackendError::InvalidConfig("max_parallel must be at least 1".into()));
        }
        Ok(())
    }
}

/// Decoding parameters for one request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f32,
    pub max_new_tokens: u32,
}

impl Decoding {
    /// Greedy defaults: short answers everywhere except chain-of-thought,
    /// which needs room to emit its reasoning before the label.
    pub fn for_strategy(strategy: PromptStrategy) -> Decoding {
        let max_new_tokens = match strategy {
            PromptStrategy::ChainOfThought => 256,
            _ => 16,
        };
        Decoding { temperature: 0.0, max_new_tokens }
    }
}

#[derive(Debug, Clone)]
pub struct ChatResponse {
    pub content: String,
    pub latency: Duration,
    pub attempt_count: u32,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("request rejected by endpoint: {0}")]
    BadRequest(String),
    #[error("backend unavailable after {attempts} attempt(s): {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    #[error("stub could not locate a tweet in the prompt")]
    StubUnextractable,
    #[error("scripted backend ran out of responses")]
    ScriptExhausted,
    #[error("prompt must be non-empty and start with a system message")]
    MalformedPrompt,
}

/// Anything that can answer a chat conversation.
pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        messages: &[ChatMessage],
        decoding: &Decoding,
    ) -> Result<ChatResponse, BackendError>;

    fn model_name(&self) -> &str;
}

fn check_prompt(messages: &[ChatMessage]) -> Result<(), BackendError> {
    match messages.first() {
        Some(m) if m.role == Role::System => Ok(()),
        _ => Err(BackendError::MalformedPrompt),
    }
}

// ---------------------------------------------------------------------------
// Retry machinery
// ---------------------------------------------------------------------------

/// Outcome of a single transport attempt.
pub(crate) enum AttemptError {
    Retryable(String),
    Auth(String),
    BadRequest(String),
}

/// Exponential backoff, capped; non-decreasing in the attempt index.
pub fn backoff_delay(attempt: u32) -> Duration {
    let base = Duration::from_millis(200);
    let capped = attempt.min(5);
    (base * 2u32.pow(capped)).min(Duration::from_secs(5))
}

pub(crate) fn run_with_retries(
    max_retries: u32,
    mut attempt: impl FnMut(u32) -> Result<String, AttemptError>,
    mut sleep: impl FnMut(Duration),
) -> Result<(String, u32), BackendError> {
    let mut last_error = String::new();
    for i in 0..=max_retries {
        match attempt(i) {
            Ok(content) => return Ok((content, i + 1)),
            Err(AttemptError::Auth(msg)) => return Err(BackendError::Auth(msg)),
            Err(AttemptError::BadRequest(msg)) => return Err(BackendError::BadRequest(msg)),
            Err(AttemptError::Retryable(msg)) => {
                last_error = msg;
                if i < max_retries {
                    sleep(backoff_delay(i));
                }
            }
        }
    }
    Err(BackendError::Unavailable { attempts: max_retries + 1, last_error })
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

/// Counting semaphore bounding in-flight requests.
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits), cv: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { sem: self }
    }
}

struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.sem.permits.lock().unwrap() += 1;
        self.sem.cv.notify_one();
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f32,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatCompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    limiter: Semaphore,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
        let limiter = Semaphore::new(config.max_parallel);
        Ok(Self { config, client, limiter })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn endpoint_url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn send_once(&self, body: &ChatRequest<'_>, api_key: &str) -> Result<String, AttemptError> {
        let response = self
            .client
            .post(self.endpoint_url())
            .bearer_auth(api_key)
            .json(body)
            .send()
            .map_err(|e| AttemptError::Retryable(e.to_string()))?;

        let status = response.status();
        if status.is_success() {
            let parsed: ChatCompletionBody = response
                .json()
                .map_err(|e| AttemptError::BadRequest(format!("malformed response body: {e}")))?;
            return parsed
                .choices
                .first()
                .map(|c| c.message.content.clone())
                .ok_or_else(|| AttemptError::BadRequest("response has no choices".into()));
        }

        let text = response.text().unwrap_or_default();
        let msg = format!("{status}: {text}");
        match status.as_u16() {
            401 | 403 => Err(AttemptError::Auth(msg)),
            408 | 429 | 500..=599 => Err(AttemptError::Retryable(msg)),
            _ => Err(AttemptError::BadRequest(msg)),
        }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        decoding: &Decoding,
    ) -> Result<ChatResponse, BackendError> {
        check_prompt(messages)?;
        let api_key = std::env::var(&self.config.api_key_ref).map_err(|_| {
            BackendError::Auth(format!(
                "credential environment variable {} is not set",
                self.config.api_key_ref
            ))
        })?;
        let body = ChatRequest {
            model: &self.config.model_name,
            messages,
            temperature: decoding.temperature,
            max_tokens: decoding.max_new_tokens,
        };

        let _permit = self.limiter.acquire();
        let start = Instant::now();
        let (content, attempt_count) = run_with_retries(
            self.config.max_retries,
            |_| self.send_once(&body, &api_key),
            std::thread::sleep,
        )?;
        Ok(ChatResponse { content, latency: start.elapsed(), attempt_count })
    }

    fn model_name(&self) -> &str {
        &self.config.model_name
    }
}

// ---------------------------------------------------------------------------
// Deterministic keyword stub
// ---------------------------------------------------------------------------

/// Keyword rule the stub answers with: label 1 iff a first-person possessive
/// is followed later in the text by a family term, and a condition term
/// appears anywhere.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StubRule {
    pub possessive_terms: Vec<String>,
    pub family_terms: Vec<String>,
    pub condition_terms: Vec<String>,
}

impl Default for StubRule {
    fn default() -> Self {
        Self {
            possessive_terms: vec!["my".into(), "our".into()],
            family_terms: [
                "mom", "dad", "mother", "father", "grandma", "grandpa", "grandmother",
                "grandfather", "wife", "husband", "sister", "brother",
            ]
            .map(String::from)
            .to_vec(),
            condition_terms: vec!["dementia".into(), "alzheimer".into()],
        }
    }
}

impl StubRule {
    pub fn empty() -> Self {
        Self { possessive_terms: vec![], family_terms: vec![], condition_terms: vec![] }
    }

    pub fn mentions_condition(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        self.condition_terms.iter().any(|t| lower.contains(t.as_str()))
    }

    pub fn mentions_family_relation(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        let tokens: Vec<&str> =
            lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).collect();
        let first_possessive =
            tokens.iter().position(|t| self.possessive_terms.iter().any(|p| p == t));
        match first_possessive {
            Some(i) => tokens[i + 1..]
                .iter()
                .any(|t| self.family_terms.iter().any(|f| f == t)),
            None => false,
        }
    }

    /// The full label rule.
    pub fn matches(&self, text: &str) -> bool {
        self.mentions_condition(text) && self.mentions_family_relation(text)
    }
}

/// In-process deterministic backend for tests and dry runs. Answers by
/// extracting the tweet back out of the rendered prompt and applying the rule.
pub struct StubBackend {
    pub rule: StubRule,
}

impl StubBackend {
    pub fn new(rule: StubRule) -> Self {
        Self { rule }
    }

    fn find_tweet<'a>(&self, messages: &'a [ChatMessage]) -> Option<&'a str> {
        // permissive templates last: zero-shot's tweet region is
        // suffix-free, so it would also swallow chain-of-thought scaffolds
        const ORDER: [PromptStrategy; 4] = [
            PromptStrategy::FewShot,
            PromptStrategy::ChainOfThought,
            PromptStrategy::Cascade,
            PromptStrategy::ZeroShot,
        ];
        messages.iter().filter(|m| m.role == Role::User).find_map(|m| {
            ORDER.iter().find_map(|s| extract_input_text(*s, &m.content))
        })
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

impl ChatBackend for StubBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        decoding: &Decoding,
    ) -> Result<ChatResponse, BackendError> {
        check_prompt(messages)?;
        let response = stub_complete(&self.rule, messages, decoding)?;
        Ok(response)
    }

    fn model_name(&self) -> &str {
        "stub"
    }
}

/// Pure stub completion: label prompts get "0"/"1", cascade step prompts get
/// "Yes"/"No", chain-of-thought prompts get a scaffolded completion.
pub fn stub_complete(
    rule: &StubRule,
    messages: &[ChatMessage],
    _decoding: &Decoding,
) -> Result<ChatResponse, BackendError> {
    let stub = StubBackend { rule: rule.clone() };
    let tweet = stub.find_tweet(messages).ok_or(BackendError::StubUnextractable)?;
    let last_user = messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .ok_or(BackendError::MalformedPrompt)?;

    let is_cot = messages
        .iter()
        .any(|m| m.role == Role::User && extract_input_text(PromptStrategy::ChainOfThought, &m.content).is_some());

    let content = if last_user.content == cascade_step2_prompt() {
        yes_no(rule.matches(tweet)).to_string()
    } else if last_user.content == cascade_label_prompt() {
        if rule.matches(tweet) { "1" } else { "0" }.to_string()
    } else if extract_input_text(PromptStrategy::Cascade, &last_user.content).is_some() {
        yes_no(rule.mentions_condition(tweet)).to_string()
    } else if is_cot {
        let label = if rule.matches(tweet) { "1" } else { "0" };
        format!("Reasoning: keyword scan of the tweet.\nConclusion: rule-based.\nLabel: {label}")
    } else if rule.matches(tweet) {
        "1".to_string()
    } else {
        "0".to_string()
    };

    Ok(ChatResponse { content, latency: Duration::ZERO, attempt_count: 1 })
}

/// Decides cascade step answers the same way `stub_complete` does; useful as
/// an independent oracle in tests.
pub fn stub_yes_no(rule: &StubRule, tweet: &str, step: u8) -> YesNo {
    let hit = match step {
        1 => rule.mentions_condition(tweet),
        _ => rule.matches(tweet),
    };
    if hit {
        YesNo::Yes
    } else {
        YesNo::No
    }
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// Replays a fixed sequence of completions and counts calls. For protocol
/// tests that need exact control over model answers.
pub struct ScriptedBackend {
    responses: Mutex<std::collections::VecDeque<String>>,
    calls: Mutex<u32>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
            calls: Mutex::new(0),
        }
    }

    pub fn call_count(&self) -> u32 {
        *self.calls.lock().unwrap()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        _decoding: &Decoding,
    ) -> Result<ChatResponse, BackendError> {
        check_prompt(messages)?;
        *self.calls.lock().unwrap() += 1;
        let content = self
            .responses
            .lock()
            .unwrap()
            .pop_front()
            .ok_or(BackendError::ScriptExhausted)?;
        Ok(ChatResponse { content, latency: Duration::ZERO, attempt_count: 1 })
    }

    fn model_name(&self) -> &str {
        "scripted"
    }
}
