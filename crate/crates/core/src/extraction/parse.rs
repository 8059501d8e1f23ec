use serde_json::{Map, Value};

use super::{ExtractedEntry, ExtractionError};
use crate::catalog::Protocol;

/// Finds the first JSON array whose elements are all objects and reads the
/// entries from it. Fences and surrounding prose are skipped because the scan
/// starts at every `[` until one parses.
pub fn parse_extraction_response(text: &str) -> Result<Vec<ExtractedEntry>, ExtractionError> {
    for (offset, _) in text.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&text[offset..]).into_iter::<Value>();
        let Some(Ok(Value::Array(items))) = stream.next() else {
            continue;
        };
        if !items.iter().all(Value::is_object) {
            continue;
        }
        return items
            .iter()
            .enumerate()
            .map(|(i, item)| entry_from_object(i, item.as_object().expect("checked above")))
            .collect::<Result<Vec<_>, String>>()
            .map_err(|message| format_error(message, text));
    }
    Err(format_error("no JSON array of entry objects found".to_owned(), text))
}

fn format_error(message: String, raw: &str) -> ExtractionError {
    ExtractionError::Format { message, raw: raw.to_owned() }
}

fn entry_from_object(index: usize, obj: &Map<String, Value>) -> Result<ExtractedEntry, String> {
    let field = |name: &str| -> Result<String, String> {
        match obj.get(name) {
            Some(Value::String(s)) => Ok(s.trim().to_owned()),
            Some(Value::Null) | None => Err(format!("entry {index}: missing field `{name}`")),
            Some(other) => Err(format!("entry {index}: field `{name}` must be a string, got {other}")),
        }
    };
    let name = field("name")?;
    if name.is_empty() {
        return Err(format!("entry {index}: field `name` is empty"));
    }
    let declared_type = field("type")?;
    let protocol_text = field("protocol")?;
    let protocol = Protocol::parse(&protocol_text)
        .ok_or_else(|| format!("entry {index}: unknown protocol `{protocol_text}`"))?;
    let value = match obj.get("value") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.trim().to_owned()),
        Some(v @ (Value::Number(_) | Value::Bool(_))) => Some(v.to_string()),
        Some(other) => return Err(format!("entry {index}: field `value` must be a scalar, got {other}")),
    };
    Ok(ExtractedEntry { name, declared_type, value, protocol })
}
