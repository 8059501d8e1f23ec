use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::GatewayError;
use crate::digest::sha256_hex;

/// Digest-keyed recorded completions. On disk: a JSON object mapping the hex
/// SHA-256 of the exact prompt text to the completion text, keys sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayStore {
    entries: BTreeMap<String, String>,
}

impl ReplayStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn digest(prompt: &str) -> String {
        sha256_hex(prompt)
    }

    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let entries: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| GatewayError::Store(format!("malformed replay store: {e}")))?;
        Ok(ReplayStore { entries })
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path)
            .map_err(|e| GatewayError::Store(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.entries).expect("store serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| GatewayError::Store(format!("cannot create {}: {e}", dir.display())))?;
        }
        fs::write(path, self.to_json()).map_err(|e| GatewayError::Store(format!("cannot write {}: {e}", path.display())))
    }

    pub fn get(&self, prompt: &str) -> Option<&str> {
        self.entries.get(&Self::digest(prompt)).map(String::as_str)
    }

    pub fn get_digest(&self, digest: &str) -> Option<&str> {
        self.entries.get(digest).map(String::as_str)
    }

    pub fn insert(&mut self, prompt: &str, completion: impl Into<String>) -> String {
        let digest = Self::digest(prompt);
        self.entries.insert(digest.clone(), completion.into());
        digest
    }

    /// Merges `other` into `self`; `other` wins on conflicts.
    pub fn extend(&mut self, other: ReplayStore) {
        self.entries.extend(other.entries);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn digests(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
