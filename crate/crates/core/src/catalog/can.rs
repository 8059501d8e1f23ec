use std::collections::HashMap;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use super::{Bounds, Catalog, CatalogEntry, CatalogError, DataType, Protocol};

/// Largest extended (29-bit) CAN identifier.
pub const MAX_FRAME_ID: u32 = 0x1FFF_FFFF;
/// Largest CAN-FD payload in bytes.
pub const MAX_DLC: u8 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanSignal {
    pub name: String,
    pub start_bit: u32,
    pub bit_length: u32,
    pub scale: f64,
    pub offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanMessage {
    #[serde(deserialize_with = "de_frame_id", serialize_with = "ser_frame_id")]
    pub frame_id: u32,
    pub name: String,
    pub dlc: u8,
    #[serde(default)]
    pub signals: Vec<CanSignal>,
}

impl CanMessage {
    fn check(&self) -> Result<(), CatalogError> {
        let ctx = &self.name;
        if self.name.trim().is_empty() {
            return Err(CatalogError::schema(format!("{:#x}", self.frame_id), "message name is empty"));
        }
        if self.frame_id > MAX_FRAME_ID {
            return Err(CatalogError::schema(ctx, format!("frame id {:#x} exceeds 29 bits", self.frame_id)));
        }
        if self.dlc > MAX_DLC {
            return Err(CatalogError::schema(ctx, format!("dlc {} exceeds {MAX_DLC} bytes", self.dlc)));
        }
        let payload_bits = u64::from(self.dlc) * 8;
        let mut seen = HashMap::new();
        for sig in &self.signals {
            let sctx = format!("{}.{}", self.name, sig.name);
            if seen.insert(sig.name.as_str(), ()).is_some() {
                return Err(CatalogError::schema(&sctx, "duplicate signal name"));
            }
            if sig.bit_length == 0 {
                return Err(CatalogError::schema(&sctx, "bit_length must be at least 1"));
            }
            let end = u64::from(sig.start_bit) + u64::from(sig.bit_length);
            if end > payload_bits {
                return Err(CatalogError::schema(
                    &sctx,
                    format!(
                        "start_bit {} + bit_length {} = {end} exceeds payload of {payload_bits} bits",
                        sig.start_bit, sig.bit_length
                    ),
                ));
            }
            if sig.scale == 0.0 || !sig.scale.is_finite() {
                return Err(CatalogError::schema(&sctx, "scale must be finite and non-zero"));
            }
            if let (Some(lo), Some(hi)) = (sig.min, sig.max) {
                if lo > hi {
                    return Err(CatalogError::schema(&sctx, format!("min {lo} exceeds max {hi}")));
                }
            }
        }
        Ok(())
    }

    /// One entry per message. The value range is the envelope of the signal
    /// ranges, and only exists when every signal is bounded on both sides.
    fn to_entry(&self) -> CatalogEntry {
        let bounds = if !self.signals.is_empty() && self.signals.iter().all(|s| s.min.is_some() && s.max.is_some()) {
            Bounds {
                min: self.signals.iter().filter_map(|s| s.min).reduce(f64::min),
                max: self.signals.iter().filter_map(|s| s.max).reduce(f64::max),
            }
        } else {
            Bounds::default()
        };
        let unit = match self.signals.as_slice() {
            [only] => only.unit.clone(),
            _ => None,
        };
        let mut text = vec![self.name.clone(), format!("{:#x}", self.frame_id), "can message".to_owned()];
        for sig in &self.signals {
            text.push(sig.name.clone());
            text.extend(sig.unit.clone());
        }
        CatalogEntry {
            key: self.name.clone(),
            protocol: Protocol::Can,
            datatype: DataType::Float,
            unit,
            text: text.join(" "),
            bounds,
            allowed: None,
        }
    }
}

fn de_frame_id<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(u64),
        Text(String),
    }
    let raw = Raw::deserialize(d)?;
    let value = match raw {
        Raw::Num(n) => n,
        Raw::Text(s) => {
            let t = s.trim();
            let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
                Some(hex) => u64::from_str_radix(hex, 16),
                None => t.parse::<u64>(),
            };
            parsed.map_err(|_| de::Error::custom(format!("invalid frame_id `{s}`")))?
        }
    };
    u32::try_from(value).map_err(|_| de::Error::custom(format!("frame_id {value} out of range")))
}

fn ser_frame_id<S: Serializer>(id: &u32, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{id:#x}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageCatalog {
    messages: Vec<CanMessage>,
    by_name: HashMap<String, usize>,
    by_id: HashMap<u32, usize>,
    entries: Vec<CatalogEntry>,
}

impl MessageCatalog {
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let messages: Vec<CanMessage> = serde_json::from_str(text).map_err(CatalogError::from_json)?;
        Self::from_messages(messages)
    }

    pub fn from_messages(messages: Vec<CanMessage>) -> Result<Self, CatalogError> {
        let mut by_name = HashMap::with_capacity(messages.len());
        let mut by_id = HashMap::with_capacity(messages.len());
        for (i, msg) in messages.iter().enumerate() {
            msg.check()?;
            if by_id.insert(msg.frame_id, i).is_some() {
                return Err(CatalogError::DuplicateFrameId(msg.frame_id));
            }
            if by_name.insert(msg.name.clone(), i).is_some() {
                return Err(CatalogError::DuplicateMessageName(msg.name.clone()));
            }
        }
        let entries = messages.iter().map(CanMessage::to_entry).collect();
        Ok(MessageCatalog { messages, by_name, by_id, entries })
    }

    pub fn messages(&self) -> &[CanMessage] {
        &self.messages
    }

    pub fn message(&self, name: &str) -> Option<&CanMessage> {
        self.by_name.get(name).map(|&i| &self.messages[i])
    }

    pub fn by_frame_id(&self, id: u32) -> Option<&CanMessage> {
        self.by_id.get(&id).map(|&i| &self.messages[i])
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(&self.messages).expect("catalog serializes")
    }
}

impl Catalog for MessageCatalog {
    fn protocol(&self) -> Protocol {
        Protocol::Can
    }

    fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    fn lookup(&self, key: &str) -> Option<&CatalogEntry> {
        self.by_name.get(key).map(|&i| &self.entries[i])
    }
}
