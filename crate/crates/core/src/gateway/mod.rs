//! Prompt rendering and chat completion with live, record and replay modes.
//!
//! Replay mode answers from a [`ReplayStore`] keyed by the digest of the
//! exact prompt text and never falls through to a live call, so fixture
//! responses go stale as soon as a prompt changes. Response parsing is left
//! to the consuming modules.

mod replay;
mod templates;

use std::env;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{self, HttpError};

pub use replay::ReplayStore;
pub use templates::{render_prompt, PromptTemplate, TemplateId};

pub const DEFAULT_MAX_TOKENS: u32 = 4096;
pub const DEFAULT_MODEL: &str = "gpt-5";
pub const ENV_URL: &str = "SDVGUARD_LLM_URL";
pub const ENV_KEY: &str = "SDVGUARD_LLM_KEY";
pub const ENV_MODEL: &str = "SDVGUARD_LLM_MODEL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
    #[error("template {template} is missing a binding for `{placeholder}`")]
    MissingBinding { template: TemplateId, placeholder: String },
    #[error("chat endpoint failed: {0}")]
    Endpoint(#[from] HttpError),
    #[error("chat endpoint response has no choices")]
    EmptyResponse,
    #[error("no recorded completion for prompt digest {digest}")]
    ReplayMiss { digest: String },
    #[error("replay store: {0}")]
    Store(String),
    #[error("gateway configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub model: String,
    /// `None` leaves the endpoint default in place.
    pub temperature: Option<f64>,
    pub max_tokens: u32,
}

/// Something that answers a single-turn chat request.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &CompletionRequest) -> Result<String, GatewayError>;
}

impl<F> ChatBackend for F
where
    F: Fn(&CompletionRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn chat(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        self(request)
    }
}

/// OpenAI-compatible chat completions endpoint. A single user-role message is
/// sent; no system prompt.
#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    pub url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl HttpChatBackend {
    /// `base_url` may be an API root (`…/v1`) or the full
    /// `…/chat/completions` URL.
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let trimmed = base_url.trim_end_matches('/');
        let url = if trimmed.ends_with("/chat/completions") {
            trimmed.to_owned()
        } else {
            format!("{trimmed}/chat/completions")
        };
        HttpChatBackend { url, api_key, timeout }
    }

    /// Reads `SDVGUARD_LLM_URL` (required) and `SDVGUARD_LLM_KEY` (optional).
    pub fn from_env(timeout: Duration) -> Result<Self, GatewayError> {
        let url = env::var(ENV_URL).map_err(|_| GatewayError::Config(format!("{ENV_URL} is not set")))?;
        Ok(Self::new(&url, env::var(ENV_KEY).ok(), timeout))
    }
}

impl ChatBackend for HttpChatBackend {
    fn chat(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let body = ChatBody {
            model: &request.model,
            messages: [ChatMessage { role: "user", content: &request.prompt }],
            max_tokens: request.max_tokens,
            temperature: request.temperature,
        };
        let response: ChatResponse = http::post_json(&self.url, self.api_key.as_deref(), &body, self.timeout)?;
        response
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or(GatewayError::EmptyResponse)
    }
}

pub struct Gateway {
    mode: GatewayMode,
    backend: Option<Box<dyn ChatBackend>>,
    store: Mutex<ReplayStore>,
    store_path: Option<PathBuf>,
    pub model: String,
    pub temperature: Option<f64>,
    pub max_tokens: u32,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("store_path", &self.store_path)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    fn with(mode: GatewayMode, backend: Option<Box<dyn ChatBackend>>, store: ReplayStore, store_path: Option<PathBuf>) -> Self {
        Gateway {
            mode,
            backend,
            store: Mutex::new(store),
            store_path,
            model: env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.to_owned()),
            temperature: None,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn live(backend: impl ChatBackend + 'static) -> Self {
        Self::with(GatewayMode::Live, Some(Box::new(backend)), ReplayStore::new(), None)
    }

    /// Live calls, each appended to the store at `path` (existing recordings
    /// are kept).
    pub fn record(backend: impl ChatBackend + 'static, path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = path.into();
        let store = if path.exists() { ReplayStore::load(&path)? } else { ReplayStore::new() };
        Ok(Self::with(GatewayMode::Record, Some(Box::new(backend)), store, Some(path)))
    }

    /// Record into memory only; see [`Gateway::recorded`].
    pub fn record_in_memory(backend: impl ChatBackend + 'static) -> Self {
        Self::with(GatewayMode::Record, Some(Box::new(backend)), ReplayStore::new(), None)
    }

    pub fn replay(store: ReplayStore) -> Self {
        Self::with(GatewayMode::Replay, None, store, None)
    }

    pub fn replay_file(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::replay(ReplayStore::load(path)?))
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    /// Snapshot of everything recorded (or loaded) so far.
    pub fn recorded(&self) -> ReplayStore {
        self.store.lock().expect("replay store lock").clone()
    }

    pub fn request(&self, prompt: &str) -> CompletionRequest {
        CompletionRequest {
            prompt: prompt.to_owned(),
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }

    pub fn complete(&self, prompt: &str) -> Result<String, GatewayError> {
        self.complete_request(&self.request(prompt))
    }

    pub fn complete_request(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        match self.mode {
            GatewayMode::Replay => {
                let store = self.store.lock().expect("replay store lock");
                store
                    .get(&request.prompt)
                    .map(str::to_owned)
                    .ok_or_else(|| GatewayError::ReplayMiss { digest: ReplayStore::digest(&request.prompt) })
            }
            GatewayMode::Live => self.backend().chat(request),
            GatewayMode::Record => {
                let content = self.backend().chat(request)?;
                let mut store = self.store.lock().expect("replay store lock");
                store.insert(&request.prompt, content.clone());
                if let Some(path) = &self.store_path {
                    store.save(path)?;
                }
                Ok(content)
            }
        }
    }

    fn backend(&self) -> &dyn ChatBackend {
        self.backend.as_deref().expect("live and record gateways own a backend")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_hit_and_miss() {
        let mut store = ReplayStore::new();
        store.insert("p", "ok");
        let gw = Gateway::replay(store);
        assert_eq!(gw.complete("p").unwrap(), "ok");
        assert_eq!(gw.complete("p").unwrap(), "ok");
        assert_eq!(
            gw.complete("q").unwrap_err(),
            GatewayError::ReplayMiss { digest: ReplayStore::digest("q") }
        );
    }

    #[test]
    fn defaults_follow_evaluation_settings() {
        let gw = Gateway::replay(ReplayStore::new());
        let req = gw.request("x");
        assert_eq!(req.max_tokens, 4096);
        assert_eq!(req.temperature, None);
    }

    #[test]
    fn record_then_replay_in_memory() {
        let backend = |req: &CompletionRequest| Ok(format!("echo:{}", req.prompt.len()));
        let gw = Gateway::record_in_memory(backend);
        let first = gw.complete("hello").unwrap();
        let replay = Gateway::replay(gw.recorded());
        assert_eq!(replay.complete("hello").unwrap(), first);
    }

    #[test]
    fn store_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/store.json");
        let mut store = ReplayStore::new();
        store.insert("b", "two");
        store.insert("a", "one\nline");
        store.save(&path).unwrap();
        let loaded = ReplayStore::load(&path).unwrap();
        assert_eq!(loaded, store);
        let text = std::fs::read_to_string(&path).unwrap();
        let keys: Vec<_> = store.digests().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(text.ends_with("}\n"));
        assert!(matches!(ReplayStore::parse("[1]"), Err(GatewayError::Store(_))));
    }

    #[test]
    fn chat_url_normalization() {
        let b = HttpChatBackend::new("http://h:1/v1/", None, Duration::from_secs(1));
        assert_eq!(b.url, "http://h:1/v1/chat/completions");
        let b = HttpChatBackend::new("http://h:1/v1/chat/completions", None, Duration::from_secs(1));
        assert_eq!(b.url, "http://h:1/v1/chat/completions");
    }
}
