//! Chat-completions client over HTTPS with bearer auth.

use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{GatewayError, LanguageModel, ModelReply, Prompt, Semaphore};

pub const API_KEY_ENV: &str = "EVE_API_KEY";
pub const BASE_URL_ENV: &str = "EVE_BASE_URL";

/// Exponential backoff for transport failures, 429 and 5xx.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.initial_delay.saturating_mul(1 << retry.min(16))
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
    retry: RetryPolicy,
    in_flight: Semaphore,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Retry(GatewayError),
    Fail(GatewayError),
}

impl HttpBackend {
    pub fn new(
        base_url: &str,
        api_key: impl Into<String>,
        concurrency_limit: usize,
        retry: RetryPolicy,
    ) -> Result<Self, GatewayError> {
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(GatewayError::Auth(format!("{API_KEY_ENV} is empty")));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            retry,
            in_flight: Semaphore::new(concurrency_limit),
        })
    }

    /// Reads the credential from `EVE_API_KEY`.
    pub fn from_env(base_url: &str, concurrency_limit: usize) -> Result<Self, GatewayError> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| GatewayError::Auth(format!("{API_KEY_ENV} is not set")))?;
        Self::new(base_url, key, concurrency_limit, RetryPolicy::default())
    }

    pub fn request_body(prompt: &Prompt) -> serde_json::Value {
        let mut messages = Vec::with_capacity(2);
        if !prompt.system_text.is_empty() {
            messages.push(json!({"role": "system", "content": prompt.system_text}));
        }
        messages.push(json!({"role": "user", "content": prompt.user_text}));
        json!({
            "model": prompt.model_name,
            "messages": messages,
            "temperature": prompt.temperature,
            "max_tokens": prompt.max_output_tokens,
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Attempt {
        let response = match self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
        {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(GatewayError::Transport(e.to_string())),
        };
        let status = response.status();
        let text = response.text().unwrap_or_default();
        match status.as_u16() {
            200..=299 => match serde_json::from_str::<CompletionResponse>(&text) {
                Ok(parsed) => match parsed.choices.into_iter().next() {
                    Some(choice) => Attempt::Done(choice.message.content.unwrap_or_default()),
                    None => Attempt::Fail(GatewayError::Transport("response has no choices".into())),
                },
                Err(e) => Attempt::Fail(GatewayError::Transport(format!("malformed response: {e}"))),
            },
            401 | 403 => Attempt::Fail(GatewayError::Auth(format!("status {status}: {text}"))),
            429 => Attempt::Retry(GatewayError::RateLimited { attempts: 0 }),
            500..=599 => Attempt::Retry(GatewayError::Rejected {
                status: status.as_u16(),
                message: text,
            }),
            code => Attempt::Fail(GatewayError::Rejected {
                status: code,
                message: text,
            }),
        }
    }
}

impl LanguageModel for HttpBackend {
    fn backend_id(&self) -> &str {
        "http"
    }

    fn send(&self, prompt: &Prompt) -> Result<ModelReply, GatewayError> {
        prompt.validate()?;
        let body = Self::request_body(prompt);
        let _permit = self.in_flight.acquire();
        let started = Instant::now();
        let mut retry = 0;
        loop {
            match self.attempt(&body) {
                Attempt::Done(raw_text) => {
                    return Ok(ModelReply {
                        raw_text,
                        backend_id: self.backend_id().to_string(),
                        latency_ms: started.elapsed().as_millis() as u64,
                        request_fingerprint: prompt.fingerprint(),
                    })
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    if retry >= self.retry.max_retries {
                        return Err(match e {
                            GatewayError::RateLimited { .. } => {
                                GatewayError::RateLimited { attempts: retry + 1 }
                            }
                            other => other,
                        });
                    }
                    log::warn!("request failed ({e}); retry {} of {}", retry + 1, self.retry.max_retries);
                    std::thread::sleep(self.retry.delay(retry));
                    retry += 1;
                }
            }
        }
    }
}
