//! Ground-truth signal and message catalogs.
//!
//! Two document formats are supported: a nested VSS tree ([`SignalCatalog`])
//! and a flat list of CAN messages ([`MessageCatalog`]). Both flatten into
//! [`CatalogEntry`] records, which are what retrieval indexes and what the
//! extraction validator resolves names against. Lookup is exact and
//! case-sensitive; naming tolerance lives in the extraction layer.

mod can;
mod doc;
mod vss;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use can::{CanMessage, CanSignal, MessageCatalog};
pub use vss::{SignalCatalog, SignalKind, VssSignal};

/// Which catalog an entry (or an extracted usage) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "VSS")]
    Vss,
    #[serde(rename = "CAN")]
    Can,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Vss => "VSS",
            Protocol::Can => "CAN",
        }
    }

    /// Accepts `VSS`, `CAN`, `CAN-FD` and `CANFD` in any case.
    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "vss" => Some(Protocol::Vss),
            "can" | "can-fd" | "canfd" | "can fd" => Some(Protocol::Can),
            _ => None,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Value type of a catalog leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Boolean,
    Int,
    Float,
    String,
    Enum,
}

impl DataType {
    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Boolean => "boolean",
            DataType::Int => "int",
            DataType::Float => "float",
            DataType::String => "string",
            DataType::Enum => "enum",
        }
    }

    /// Maps the usual spellings (`bool`, `uint8`, `double`, ...) onto a
    /// datatype class.
    pub fn parse(text: &str) -> Option<Self> {
        let t = text.trim().to_ascii_lowercase();
        let t = t.trim_end_matches("[]");
        match t {
            "boolean" | "bool" => Some(DataType::Boolean),
            "int" | "integer" | "int8" | "int16" | "int32" | "int64" | "uint8" | "uint16"
            | "uint32" | "uint64" | "long" | "short" => Some(DataType::Int),
            "float" | "double" | "real" | "number" | "float32" | "float64" => Some(DataType::Float),
            "string" | "str" | "text" => Some(DataType::String),
            "enum" => Some(DataType::Enum),
            _ => None,
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inclusive numeric bounds; either side may be open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl Bounds {
    pub fn is_open(&self) -> bool {
        self.min.is_none() && self.max.is_none()
    }
}

/// One searchable, validatable record: a VSS leaf or a CAN message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub key: String,
    pub protocol: Protocol,
    pub datatype: DataType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    /// Flattened description used for retrieval and prompt context.
    pub text: String,
    #[serde(default, skip_serializing_if = "Bounds::is_open")]
    pub bounds: Bounds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed: Option<Vec<String>>,
}

impl CatalogEntry {
    /// A single context line suitable for prompts and reports.
    pub fn context_line(&self) -> String {
        let mut line = format!("{} [{}] {}", self.key, self.protocol, self.datatype);
        if let Some(unit) = &self.unit {
            line.push_str(&format!(" unit={unit}"));
        }
        if let Some(min) = self.bounds.min {
            line.push_str(&format!(" min={min}"));
        }
        if let Some(max) = self.bounds.max {
            line.push_str(&format!(" max={max}"));
        }
        if let Some(allowed) = &self.allowed {
            line.push_str(&format!(" allowed={}", allowed.join("|")));
        }
        line
    }
}

/// Read access shared by both catalog kinds.
pub trait Catalog {
    fn protocol(&self) -> Protocol;
    fn entries(&self) -> &[CatalogEntry];
    /// Exact, case-sensitive lookup of a flattened entry.
    fn lookup(&self, key: &str) -> Option<&CatalogEntry>;
}

/// Outcome of checking a literal against an entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum ValueVerdict {
    Ok,
    TypeMismatch { expected: DataType },
    BelowMin { min: f64 },
    AboveMax { max: f64 },
    NotAllowed { allowed: Vec<String> },
}

impl ValueVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, ValueVerdict::Ok)
    }
}

/// Checks `value` against the entry's datatype, inclusive bounds and allowed
/// set.
pub fn validate_value(entry: &CatalogEntry, value: &str) -> ValueVerdict {
    let value = value.trim();
    let numeric = match entry.datatype {
        DataType::Boolean => {
            if value.eq_ignore_ascii_case("true") || value.eq_ignore_ascii_case("false") {
                None
            } else {
                return ValueVerdict::TypeMismatch { expected: DataType::Boolean };
            }
        }
        DataType::Int => match value.parse::<i64>() {
            Ok(v) => Some(v as f64),
            Err(_) => return ValueVerdict::TypeMismatch { expected: DataType::Int },
        },
        DataType::Float => match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => return ValueVerdict::TypeMismatch { expected: DataType::Float },
        },
        DataType::String | DataType::Enum => None,
    };
    if let Some(v) = numeric {
        if let Some(min) = entry.bounds.min {
            if v < min {
                return ValueVerdict::BelowMin { min };
            }
        }
        if let Some(max) = entry.bounds.max {
            if v > max {
                return ValueVerdict::AboveMax { max };
            }
        }
    }
    if let Some(allowed) = &entry.allowed {
        if !allowed.iter().any(|a| a == value) {
            return ValueVerdict::NotAllowed { allowed: allowed.clone() };
        }
    }
    ValueVerdict::Ok
}

#[derive(Debug, Error, PartialEq)]
pub enum CatalogError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("duplicate signal path `{0}`")]
    DuplicatePath(String),
    #[error("duplicate CAN frame id {0:#x}")]
    DuplicateFrameId(u32),
    #[error("duplicate CAN message name `{0}`")]
    DuplicateMessageName(String),
    #[error("schema error in `{context}`: {message}")]
    Schema { context: String, message: String },
}

impl CatalogError {
    pub(crate) fn schema(context: impl Into<String>, message: impl Into<String>) -> Self {
        CatalogError::Schema { context: context.into(), message: message.into() }
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        CatalogError::Parse { line: err.line(), column: err.column(), message: err.to_string() }
    }
}
