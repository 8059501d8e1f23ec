use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::digest::sha256_hex;
use crate::http::post_bytes;

/// A directory to copy into, or an HTTP endpoint to POST to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "location")]
pub enum DeployTarget {
    Directory(PathBuf),
    Endpoint(String),
}

impl DeployTarget {
    /// `http://` and `https://` descriptors are endpoints; anything else is
    /// a directory.
    pub fn parse(descriptor: &str) -> Self {
        let d = descriptor.trim();
        if d.starts_with("http://") || d.starts_with("https://") {
            DeployTarget::Endpoint(d.to_owned())
        } else {
            DeployTarget::Directory(PathBuf::from(d))
        }
    }
}

impl fmt::Display for DeployTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeployTarget::Directory(p) => write!(f, "{}", p.display()),
            DeployTarget::Endpoint(u) => f.write_str(u),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub artifact: PathBuf,
    pub sha256: String,
    pub bytes: u64,
    pub target: DeployTarget,
    /// Copied file for directory targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<PathBuf>,
    /// Endpoint response body for HTTP targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    pub deployed_at: String,
}

impl Receipt {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("receipt serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("receipt: {e}")))
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(|source| PipelineError::Io { path: path.to_owned(), source })
}

/// Hands an artifact to a target; nothing is executed there.
pub fn deploy_stub(artifact: &Path, target: &DeployTarget, timeout: Duration) -> Result<Receipt, PipelineError> {
    let bytes = read_bytes(artifact)?;
    let file_name = artifact
        .file_name()
        .ok_or_else(|| PipelineError::Deploy(format!("{} has no file name", artifact.display())))?;
    let (destination, response) = match target {
        DeployTarget::Directory(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| PipelineError::Deploy(format!("{}: {e}", dir.display())))?;
            let dest = dir.join(file_name);
            std::fs::write(&dest, &bytes).map_err(|e| PipelineError::Deploy(format!("{}: {e}", dest.display())))?;
            (Some(dest), None)
        }
        DeployTarget::Endpoint(url) => {
            let body = post_bytes(url, &bytes, timeout).map_err(|e| PipelineError::Deploy(e.to_string()))?;
            (None, Some(body))
        }
    };
    Ok(Receipt {
        artifact: artifact.to_owned(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
        target: target.clone(),
        destination,
        response,
        deployed_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
    })
}

/// Recomputes the digests of the source artifact and, for directory
/// targets, of the deployed copy.
pub fn verify_receipt(receipt: &Receipt) -> Result<(), PipelineError> {
    let mut files = vec![&receipt.artifact];
    files.extend(&receipt.destination);
    for file in files {
        let actual = sha256_hex(read_bytes(file)?);
        if actual != receipt.sha256 {
            return Err(PipelineError::Tampered(format!(
                "{} has digest {actual}, receipt records {}",
                file.display(),
                receipt.sha256
            )));
        }
    }
    Ok(())
}

