use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{read_text, PipelineError};
use crate::gateway::{CompletionRequest, Gateway, GatewayError, GatewayMode, HttpChatBackend, DEFAULT_MAX_TOKENS, ENV_KEY, ENV_URL};
use crate::retrieval::{
    Bm25, CrossEncoderEndpoint, EmbeddingEndpoint, FirstStageScorer, PairScorer, Retriever, TokenOverlap,
    DEFAULT_POOL_FACTOR, DEFAULT_TOP_K,
};

pub const DEFAULT_TOKEN_BUDGET: usize = 4096;
pub const DEFAULT_MAX_ITERATIONS: usize = 3;
pub const ENV_EMBED_URL: &str = "SDVGUARD_EMBED_URL";

/// Chat endpoint and replay store settings. The API key is only ever read
/// from `SDVGUARD_LLM_KEY`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySettings {
    pub mode: GatewayMode,
    /// Replay store read in `replay` mode and appended to in `record` mode.
    pub store: Option<PathBuf>,
    /// Falls back to `SDVGUARD_LLM_URL`.
    pub url: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: u32,
    pub timeout_secs: u64,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            mode: GatewayMode::Live,
            store: None,
            url: None,
            model: None,
            temperature: None,
            max_tokens: DEFAULT_MAX_TOKENS,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub vss_catalog: Option<PathBuf>,
    pub can_catalog: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub metamodel: Option<PathBuf>,
    pub constraints: Option<PathBuf>,
    pub top_k: usize,
    pub token_budget: usize,
    /// Stage-one embedding service; falls back to `SDVGUARD_EMBED_URL`, then BM25.
    pub embedding_url: Option<String>,
    /// Stage-two cross-encoder service; token overlap when unset.
    pub cross_encoder_url: Option<String>,
    /// Automated re-extractions after catalog validation rejects entries.
    pub extraction_retries: usize,
    /// Upper bound on correction iterations when `auto_correct` is set.
    pub max_iterations: usize,
    pub auto_correct: bool,
    pub out_dir: PathBuf,
    pub gateway: GatewaySettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            vss_catalog: None,
            can_catalog: None,
            rules: None,
            metamodel: None,
            constraints: None,
            top_k: DEFAULT_TOP_K,
            token_budget: DEFAULT_TOKEN_BUDGET,
            embedding_url: None,
            cross_encoder_url: None,
            extraction_retries: 1,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            auto_correct: false,
            out_dir: PathBuf::from("sdv-guard-out"),
            gateway: GatewaySettings::default(),
        }
    }
}

fn rebase(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path.as_mut().filter(|p| p.is_relative()) {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Parses TOML. Relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut config: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        for p in [
            &mut config.vss_catalog,
            &mut config.can_catalog,
            &mut config.rules,
            &mut config.metamodel,
            &mut config.constraints,
            &mut config.gateway.store,
        ] {
            rebase(base, p);
        }
        if config.out_dir.is_relative() {
            config.out_dir = base.join(&config.out_dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&read_text(path)?, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.token_budget == 0 {
            return Err(PipelineError::Config("token_budget must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(PipelineError::Config("top_k must be at least 1".into()));
        }
        if self.gateway.mode != GatewayMode::Live && self.gateway.store.is_none() {
            return Err(PipelineError::Config(format!(
                "gateway mode {:?} needs a replay store path",
                self.gateway.mode
            )));
        }
        Ok(())
    }

    /// The shortlisting retriever: configured scoring services, otherwise
    /// BM25 and token overlap.
    pub fn retriever(&self) -> Retriever {
        let timeout = Duration::from_secs(self.gateway.timeout_secs);
        let first: Box<dyn FirstStageScorer> = match self.embedding_url.clone().or_else(|| std::env::var(ENV_EMBED_URL).ok()) {
            Some(url) => Box::new(EmbeddingEndpoint::new(url, timeout)),
            None => Box::new(Bm25::default()),
        };
        let second: Box<dyn PairScorer> = match &self.cross_encoder_url {
            Some(url) => Box::new(CrossEncoderEndpoint::new(url.clone(), timeout)),
            None => Box::new(TokenOverlap),
        };
        Retriever::new(first, second, DEFAULT_POOL_FACTOR)
    }

    /// Builds the gateway described by `gateway`. A live gateway without an
    /// endpoint fails on its first call.
    pub fn build_gateway(&self) -> Result<Gateway, PipelineError> {
        self.validate()?;
        let g = &self.gateway;
        let missing = format!("no chat endpoint: set gateway.url or {ENV_URL}");
        let backend = g
            .url
            .clone()
            .or_else(|| std::env::var(ENV_URL).ok())
            .map(|url| HttpChatBackend::new(&url, std::env::var(ENV_KEY).ok(), Duration::from_secs(g.timeout_secs)));
        let mut gateway = match (g.mode, backend) {
            (GatewayMode::Replay, _) => Gateway::replay_file(g.store.as_deref().expect("validated"))?,
            (GatewayMode::Record, Some(b)) => Gateway::record(b, g.store.clone().expect("validated"))?,
            (GatewayMode::Record, None) => return Err(PipelineError::Config(missing)),
            (GatewayMode::Live, Some(b)) => Gateway::live(b),
            // Workflows that never call the model still run without an endpoint.
            (GatewayMode::Live, None) => {
                Gateway::live(move |_: &CompletionRequest| Err(GatewayError::Config(missing.clone())))
            }
        };
        if let Some(model) = &g.model {
            gateway.model = model.clone();
        }
        gateway.temperature = g.temperature;
        gateway.max_tokens = g.max_tokens;
        Ok(gateway)
    }
}
