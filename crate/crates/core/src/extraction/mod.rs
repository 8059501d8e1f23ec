//! Signal/message extraction from code through the extraction prompt, and
//! validation of every extracted entry against the catalogs.

mod parse;
mod validate;

use std::collections::HashSet;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Protocol;
use crate::gateway::{render_prompt, Gateway, GatewayError, TemplateId};
use crate::retrieval::Chunk;

pub use parse::parse_extraction_response;
pub use validate::{resolve, type_compatible, validate_entries, AcceptedEntry, RejectReason, RejectedEntry, Resolution};

/// One signal or message usage reported by the model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtractedEntry {
    pub name: String,
    #[serde(rename = "type")]
    pub declared_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub protocol: Protocol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_digest: Option<String>,
    pub accepted: Vec<AcceptedEntry>,
    pub rejected: Vec<RejectedEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ExtractionReport {
    pub fn is_clean(&self) -> bool {
        self.rejected.is_empty()
    }

    /// Human-readable rejection list, used as retry feedback.
    pub fn rejection_feedback(&self) -> String {
        self.rejected
            .iter()
            .map(|r| format!("- {} ({}): {} {}", r.entry.name, r.entry.protocol, r.reason, r.detail))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Accepted entries rendered for the event-chain prompt.
    pub fn relevant_context(&self) -> String {
        relevant_context(&self.accepted)
    }
}

pub fn relevant_context(accepted: &[AcceptedEntry]) -> String {
    if accepted.is_empty() {
        return "no validated signals or messages".to_owned();
    }
    accepted
        .iter()
        .map(|a| {
            let mut line = format!("{} ({}, {})", a.resolved_key, a.protocol, a.datatype);
            if let Some(v) = &a.entry.value {
                line.push_str(&format!(" = {v}"));
            }
            line
        })
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error, PartialEq)]
pub enum ExtractionError {
    #[error("extraction response is not an entry list: {message}")]
    Format { message: String, raw: String },
    #[error("extraction needs at least one catalog chunk")]
    NoChunks,
    #[error("source code is empty")]
    EmptyCode,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

const RESPONSE_FORMAT: &str = "Answer with a JSON array of objects with the fields \"name\", \"type\", \
\"value\" and \"protocol\" (\"VSS\" or \"CAN\"). Use only names from the catalog entries above.";

/// The extraction prompt for one chunk: the rendered template followed by the
/// chunk's catalog context, the expected answer format and, on a retry, the
/// rejections of the previous attempt.
pub fn extraction_prompt(code: &str, chunk: &Chunk, feedback: Option<&str>) -> Result<String, ExtractionError> {
    let mut prompt = render_prompt(TemplateId::PC1, &[("code", code)])?;
    prompt.push_str("\n\nCatalog entries:\n");
    prompt.push_str(&chunk.context());
    prompt.push_str("\n\n");
    prompt.push_str(RESPONSE_FORMAT);
    if let Some(feedback) = feedback.filter(|f| !f.trim().is_empty()) {
        prompt.push_str("\n\nThe previous answer contained entries that failed catalog validation:\n");
        prompt.push_str(feedback);
    }
    Ok(prompt)
}

/// One prompt per chunk; results are unioned in chunk order. Exact repeats
/// of (name, protocol, value) collapse to the first occurrence; differing
/// values for the same name are kept so validation can flag the conflict.
pub fn extract_entries(
    code: &str,
    chunks: &[Chunk],
    gateway: &Gateway,
    feedback: Option<&str>,
) -> Result<Vec<ExtractedEntry>, ExtractionError> {
    if code.trim().is_empty() {
        return Err(ExtractionError::EmptyCode);
    }
    if chunks.is_empty() {
        return Err(ExtractionError::NoChunks);
    }
    let prompts = chunks
        .iter()
        .map(|c| extraction_prompt(code, c, feedback))
        .collect::<Result<Vec<_>, _>>()?;
    let responses: Vec<Result<Vec<ExtractedEntry>, ExtractionError>> = if prompts.len() == 1 {
        vec![complete_and_parse(gateway, &prompts[0])]
    } else {
        thread::scope(|s| {
            let handles: Vec<_> = prompts.iter().map(|p| s.spawn(move || complete_and_parse(gateway, p))).collect();
            handles.into_iter().map(|h| h.join().expect("extraction worker panicked")).collect()
        })
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for response in responses {
        for entry in response? {
            if seen.insert((entry.name.clone(), entry.protocol, entry.value.clone())) {
                out.push(entry);
            }
        }
    }
    Ok(out)
}

fn complete_and_parse(gateway: &Gateway, prompt: &str) -> Result<Vec<ExtractedEntry>, ExtractionError> {
    let text = gateway.complete(prompt)?;
    parse_extraction_response(&text)
}
