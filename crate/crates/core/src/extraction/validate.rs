use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ExtractedEntry, ExtractionReport};
use crate::catalog::{validate_value, Catalog, CatalogEntry, DataType, MessageCatalog, Protocol, SignalCatalog, ValueVerdict};
use crate::names::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    UnknownName,
    TypeMismatch,
    ValueOutOfRange,
    ProtocolMismatch,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::UnknownName => "unknown-name",
            RejectReason::TypeMismatch => "type-mismatch",
            RejectReason::ValueOutOfRange => "value-out-of-range",
            RejectReason::ProtocolMismatch => "protocol-mismatch",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedEntry {
    pub entry: ExtractedEntry,
    pub resolved_key: String,
    pub protocol: Protocol,
    pub datatype: DataType,
    /// True when the name only matched after normalization.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub via_alias: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedEntry {
    pub entry: ExtractedEntry,
    pub reason: RejectReason,
    pub detail: String,
}

/// Outcome of looking a name up in one catalog.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolution<'a> {
    Exact(&'a CatalogEntry),
    Alias(&'a CatalogEntry),
    Ambiguous(Vec<&'a str>),
    Missing,
}

impl<'a> Resolution<'a> {
    fn entry(&self) -> Option<&'a CatalogEntry> {
        match self {
            Resolution::Exact(e) | Resolution::Alias(e) => Some(e),
            _ => None,
        }
    }
}

/// Exact lookup, then a unique match on normalized names.
pub fn resolve<'a>(catalog: &'a dyn Catalog, name: &str) -> Resolution<'a> {
    if let Some(entry) = catalog.lookup(name) {
        return Resolution::Exact(entry);
    }
    let wanted = normalize(name);
    if wanted.is_empty() {
        return Resolution::Missing;
    }
    let matches: Vec<&CatalogEntry> = catalog.entries().iter().filter(|e| normalize(&e.key) == wanted).collect();
    match matches.as_slice() {
        [] => Resolution::Missing,
        [only] => Resolution::Alias(only),
        many => Resolution::Ambiguous(many.iter().map(|e| e.key.as_str()).collect()),
    }
}

/// Whether a declared type text is acceptable for a catalog datatype. Empty
/// text is not checked; integers widen to float; string and enum are
/// interchangeable.
pub fn type_compatible(declared: &str, catalog: DataType) -> bool {
    if declared.trim().is_empty() {
        return true;
    }
    match (DataType::parse(declared), catalog) {
        (None, _) => false,
        (Some(d), c) if d == c => true,
        (Some(DataType::Int), DataType::Float) => true,
        (Some(DataType::String), DataType::Enum) | (Some(DataType::Enum), DataType::String) => true,
        _ => false,
    }
}

pub fn validate_entries(entries: &[ExtractedEntry], signals: &SignalCatalog, messages: &MessageCatalog) -> ExtractionReport {
    let mut report = ExtractionReport { source_digest: None, accepted: Vec::new(), rejected: Vec::new(), notes: Vec::new() };
    for entry in entries {
        match check_entry(entry, signals, messages) {
            Ok(accepted) => report.accepted.push(accepted),
            Err((reason, detail)) => report.rejected.push(RejectedEntry { entry: entry.clone(), reason, detail }),
        }
    }
    let mut values: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for a in &report.accepted {
        if let Some(v) = &a.entry.value {
            let seen = values.entry(a.resolved_key.as_str()).or_default();
            if !seen.contains(&v.as_str()) {
                seen.push(v);
            }
        }
    }
    report.notes = values
        .into_iter()
        .filter(|(_, vs)| vs.len() > 1)
        .map(|(key, vs)| format!("conflicting values for {key}: {}", vs.join(", ")))
        .collect();
    report
}

fn check_entry(
    entry: &ExtractedEntry,
    signals: &SignalCatalog,
    messages: &MessageCatalog,
) -> Result<AcceptedEntry, (RejectReason, String)> {
    let (own, other): (&dyn Catalog, &dyn Catalog) = match entry.protocol {
        Protocol::Vss => (signals, messages),
        Protocol::Can => (messages, signals),
    };
    let resolution = resolve(own, &entry.name);
    let catalog_entry = match &resolution {
        Resolution::Ambiguous(keys) => {
            return Err((RejectReason::UnknownName, format!("ambiguous name, matches {}", keys.join(", "))));
        }
        Resolution::Missing => {
            return Err(match resolve(other, &entry.name).entry() {
                Some(found) => (
                    RejectReason::ProtocolMismatch,
                    format!("declared {} but `{}` is a {} entry", entry.protocol, found.key, found.protocol),
                ),
                None => (RejectReason::UnknownName, format!("no {} entry named `{}`", entry.protocol, entry.name)),
            });
        }
        Resolution::Exact(e) | Resolution::Alias(e) => *e,
    };
    if !type_compatible(&entry.declared_type, catalog_entry.datatype) {
        return Err((
            RejectReason::TypeMismatch,
            format!("declared `{}` but `{}` is {}", entry.declared_type, catalog_entry.key, catalog_entry.datatype),
        ));
    }
    if let Some(value) = &entry.value {
        match validate_value(catalog_entry, value) {
            ValueVerdict::Ok => {}
            ValueVerdict::TypeMismatch { expected } => {
                return Err((RejectReason::TypeMismatch, format!("value `{value}` is not a valid {expected}")));
            }
            ValueVerdict::BelowMin { min } => {
                return Err((RejectReason::ValueOutOfRange, format!("value {value} is below min {min}")));
            }
            ValueVerdict::AboveMax { max } => {
                return Err((RejectReason::ValueOutOfRange, format!("value {value} is above max {max}")));
            }
            ValueVerdict::NotAllowed { allowed } => {
                return Err((
                    RejectReason::ValueOutOfRange,
                    format!("value `{value}` is not one of {}", allowed.join("|")),
                ));
            }
        }
    }
    Ok(AcceptedEntry {
        entry: entry.clone(),
        resolved_key: catalog_entry.key.clone(),
        protocol: catalog_entry.protocol,
        datatype: catalog_entry.datatype,
        via_alias: matches!(resolution, Resolution::Alias(_)),
    })
}
