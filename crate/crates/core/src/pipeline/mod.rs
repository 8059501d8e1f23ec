//! End-to-end workflows: configuration, artifact persistence and run
//! records, the safety and topology pipelines, the evaluation harness and
//! deployment.

mod config;
mod deploy;
mod harness;
mod record;
mod safety;
mod topology;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::catalog::CatalogError;
use crate::eventchain::EventChainError;
use crate::extraction::ExtractionError;
use crate::gateway::GatewayError;
use crate::retrieval::RetrievalError;
use crate::rules::RulesError;
use crate::topology::TopologyError;

pub use config::{GatewaySettings, PipelineConfig, DEFAULT_MAX_ITERATIONS, DEFAULT_TOKEN_BUDGET, ENV_EMBED_URL};
pub use deploy::{deploy_stub, verify_receipt, DeployTarget, Receipt};
pub use harness::{
    load_manifest, run_eval_harness, ExpectedEntry, FaultInjection, HarnessManifest, HarnessResult, ScenarioKind,
    ScenarioResult, ScenarioSpec,
};
pub use record::{ArtifactRef, InputRef, RunRecord, RunVerdict, StageRecord};
pub use safety::{
    build_chain, check_chain, extract_signals, load_catalogs, load_chain, run_safety_pipeline, strip_code_fence, Catalogs,
    ChainBuild, SafetyRun, SignalExtraction,
};
pub use topology::{load_model, run_topology_pipeline, ConstraintSource, ModelSource, TopologyRun};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: String, source: Box<PipelineError> },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Extraction(#[from] ExtractionError),
    #[error(transparent)]
    Chain(#[from] EventChainError),
    #[error(transparent)]
    Rules(#[from] RulesError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("deployment: {0}")]
    Deploy(String),
    #[error("receipt check failed: {0}")]
    Tampered(String),
}

impl PipelineError {
    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &PipelineError {
        match self {
            PipelineError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) fn read_text(path: &std::path::Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_owned(), source })
}

pub(crate) fn write_text(path: &std::path::Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| PipelineError::Io { path: parent.to_owned(), source })?;
    }
    std::fs::write(path, text).map_err(|source| PipelineError::Io { path: path.to_owned(), source })
}

#[cfg(test)]
mod tests;
