use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{GatewayError, LanguageModel, ModelReply, Prompt};

type Responder = Box<dyn Fn(&Prompt) -> Result<String, GatewayError> + Send + Sync>;

/// A substring rule: replies with `reply` when the prompt's user text
/// contains every string in `contains`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub contains: Vec<String>,
    pub reply: String,
}

/// On-disk description of a mock backend.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub replies: HashMap<String, String>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default: Option<String>,
}

/// Scripted backend. Lookup order: exact fingerprint, responder closure,
/// first matching rule, default reply.
pub struct MockBackend {
    script: MockScript,
    responder: Option<Responder>,
    calls: AtomicUsize,
}

impl std::fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockBackend")
            .field("script", &self.script)
            .field("calls", &self.calls)
            .finish_non_exhaustive()
    }
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        MockBackend {
            script,
            responder: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| GatewayError::Transport(format!("mock script {}: {e}", path.display())))?;
        let script: MockScript = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Transport(format!("mock script {}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    /// Backend answering every prompt through `f`.
    pub fn with_responder<F>(f: F) -> Self
    where
        F: Fn(&Prompt) -> Result<String, GatewayError> + Send + Sync + 'static,
    {
        MockBackend {
            script: MockScript::default(),
            responder: Some(Box::new(f)),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn insert(&mut self, prompt: &Prompt, reply: impl Into<String>) {
        self.script.replies.insert(prompt.fingerprint(), reply.into());
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn lookup(&self, prompt: &Prompt, fingerprint: &str) -> Result<String, GatewayError> {
        if let Some(reply) = self.script.replies.get(fingerprint) {
            return Ok(reply.clone());
        }
        if let Some(responder) = &self.responder {
            return responder(prompt);
        }
        let haystack = format!("{}\n{}", prompt.system_text, prompt.user_text);
        if let Some(rule) = self
            .script
            .rules
            .iter()
            .find(|r| r.contains.iter().all(|needle| haystack.contains(needle.as_str())))
        {
            return Ok(rule.reply.clone());
        }
        self.script
            .default
            .clone()
            .ok_or_else(|| GatewayError::Transport("mock backend has no scripted reply".into()))
    }
}

impl LanguageModel for MockBackend {
    fn backend_id(&self) -> &str {
        "mock"
    }

    fn send(&self, prompt: &Prompt) -> Result<ModelReply, GatewayError> {
        prompt.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let fingerprint = prompt.fingerprint();
        let raw_text = self.lookup(prompt, &fingerprint)?;
        Ok(ModelReply {
            raw_text,
            backend_id: self.backend_id().to_string(),
            latency_ms: 0,
            request_fingerprint: fingerprint,
        })
    }
}
