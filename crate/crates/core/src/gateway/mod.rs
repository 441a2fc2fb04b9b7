//! Language-model access.
//!
//! All pipeline stages talk to a model through [`LanguageModel`]. Three
//! backends implement it: [`HttpBackend`] for live chat-completions
//! endpoints, [`MockBackend`] for scripted replies, and [`ReplayBackend`]
//! which serves replies from a cassette recorded by [`Recorder`].

mod cassette;
mod http;
mod mock;
mod parse;

use std::fmt;
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{read_cassette, CassetteRecord, Recorder, ReplayBackend};
pub use http::{HttpBackend, RetryPolicy, API_KEY_ENV, BASE_URL_ENV};
pub use mock::{MockBackend, MockRule, MockScript};
pub use parse::{
    extract_json_payload, parse_boolean_answer, parse_component_answer, ComponentAnswer,
    ComponentEntry, ParseError,
};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("no cassette record for fingerprint {fingerprint}")]
    CassetteMiss { fingerprint: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request rejected with status {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("cassette i/o: {0}")]
    Cassette(String),
}

impl GatewayError {
    /// Errors that degraded continuation cannot recover from: bad
    /// credentials, and a replay diverging from its recording.
    pub fn is_fatal(&self) -> bool {
        matches!(self, GatewayError::Auth(_) | GatewayError::CassetteMiss { .. })
    }
}

/// One request to a model. Field order here is the canonical order used
/// for fingerprinting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub model_name: String,
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Prompt {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.user_text.trim().is_empty() {
            return Err(GatewayError::InvalidPrompt("user_text is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidPrompt(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidPrompt(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical JSON encoding of the prompt.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("prompt serializes");
        hex::encode(Sha256::digest(canonical))
    }
}

/// Per-run request settings stamped onto every prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSettings {
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for RequestSettings {
    fn default() -> Self {
        RequestSettings {
            model_name: "anthropic/claude-3.7-sonnet".into(),
            temperature: 0.0,
            max_output_tokens: 2048,
        }
    }
}

impl RequestSettings {
    pub fn prompt(&self, system_text: impl Into<String>, user_text: impl Into<String>) -> Prompt {
        Prompt {
            model_name: self.model_name.clone(),
            system_text: system_text.into(),
            user_text: user_text.into(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelReply {
    pub raw_text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub request_fingerprint: String,
}

/// A model endpoint. Implementations must tolerate concurrent `send` calls.
pub trait LanguageModel: Send + Sync {
    fn backend_id(&self) -> &str;

    fn send(&self, prompt: &Prompt) -> Result<ModelReply, GatewayError>;
}

impl<T: LanguageModel + ?Sized> LanguageModel for std::sync::Arc<T> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn send(&self, prompt: &Prompt) -> Result<ModelReply, GatewayError> {
        (**self).send(prompt)
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for Box<T> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn send(&self, prompt: &Prompt) -> Result<ModelReply, GatewayError> {
        (**self).send(prompt)
    }
}

/// Counting semaphore bounding in-flight requests.
pub(crate) struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

pub(crate) struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub(crate) fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().expect("semaphore poisoned");
        while *n == 0 {
            n = self.freed.wait(n).expect("semaphore poisoned");
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore poisoned") += 1;
        self.0.freed.notify_one();
    }
}

impl fmt::Debug for Semaphore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Semaphore").finish_non_exhaustive()
    }
}


/// What a pipeline stage needs to issue prompts: a model, the request
/// settings stamped on every prompt, and the concurrency bound.
#[derive(Clone, Copy)]
pub struct Session<'a> {
    pub model: &'a dyn LanguageModel,
    pub settings: &'a RequestSettings,
    pub concurrency: usize,
}

impl<'a> Session<'a> {
    pub fn new(model: &'a dyn LanguageModel, settings: &'a RequestSettings) -> Self {
        Session {
            model,
            settings,
            concurrency: 4,
        }
    }

    pub fn with_concurrency(mut self, limit: usize) -> Self {
        self.concurrency = limit.max(1);
        self
    }
}

impl fmt::Debug for Session<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("backend", &self.model.backend_id())
            .field("settings", self.settings)
            .field("concurrency", &self.concurrency)
            .finish()
    }
}
