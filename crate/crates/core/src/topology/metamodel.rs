use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::TopologyError;

/// The metamodel shipped with the crate.
pub const DEFAULT_METAMODEL: &str = include_str!("../../data/default-metamodel.json");

/// Attribute kind: `string`, `real`, `int`, `bool`, `enum(E)` or `ref(C)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Kind {
    String,
    Real,
    Int,
    Bool,
    Enum(String),
    Ref(String),
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::String => f.write_str("string"),
            Kind::Real => f.write_str("real"),
            Kind::Int => f.write_str("int"),
            Kind::Bool => f.write_str("bool"),
            Kind::Enum(e) => write!(f, "enum({e})"),
            Kind::Ref(c) => write!(f, "ref({c})"),
        }
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let wrapped = |prefix: &str| {
            s.strip_prefix(prefix)
                .and_then(|r| r.strip_suffix(')'))
                .map(str::trim)
                .filter(|inner| !inner.is_empty())
                .map(str::to_owned)
        };
        match s {
            "string" => Ok(Kind::String),
            "real" => Ok(Kind::Real),
            "int" => Ok(Kind::Int),
            "bool" => Ok(Kind::Bool),
            _ => wrapped("enum(")
                .map(Kind::Enum)
                .or_else(|| wrapped("ref(").map(Kind::Ref))
                .ok_or_else(|| format!("unknown attribute kind `{s}`")),
        }
    }
}

impl Serialize for Kind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Kind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attribute {
    pub name: String,
    pub kind: Kind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Class {
    pub name: String,
    #[serde(default, rename = "abstract", skip_serializing_if = "std::ops::Not::not")]
    pub is_abstract: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<Attribute>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumDef {
    pub name: String,
    pub literals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metamodel {
    pub name: String,
    #[serde(default)]
    pub enums: Vec<EnumDef>,
    pub classes: Vec<Class>,
}

fn mm_err(message: impl Into<String>) -> TopologyError {
    TopologyError::Metamodel(message.into())
}

pub fn parse_metamodel(text: &str) -> Result<Metamodel, TopologyError> {
    let mm: Metamodel = serde_json::from_str(text).map_err(|e| mm_err(e.to_string()))?;
    mm.validate()?;
    Ok(mm)
}

pub fn default_metamodel() -> Metamodel {
    parse_metamodel(DEFAULT_METAMODEL).expect("shipped metamodel is valid")
}

impl Metamodel {
    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.name.trim().is_empty() {
            return Err(mm_err("metamodel name is empty"));
        }
        if self.classes.is_empty() {
            return Err(mm_err("metamodel declares no classes"));
        }
        let mut enums = HashMap::new();
        for e in &self.enums {
            if enums.insert(e.name.as_str(), e).is_some() {
                return Err(mm_err(format!("enum `{}` declared twice", e.name)));
            }
            if e.literals.is_empty() {
                return Err(mm_err(format!("enum `{}` has no literals", e.name)));
            }
            let mut seen = BTreeSet::new();
            for l in &e.literals {
                if l.is_empty() || !l.chars().all(|c| c.is_alphanumeric() || c == '-' || c == '_') {
                    return Err(mm_err(format!("enum `{}` has invalid literal `{l}`", e.name)));
                }
                if !seen.insert(l) {
                    return Err(mm_err(format!("enum `{}` repeats literal `{l}`", e.name)));
                }
            }
        }
        let mut classes = HashMap::new();
        for c in &self.classes {
            if c.name.is_empty() || !c.name.chars().all(|ch| ch.is_alphanumeric() || ch == '_') {
                return Err(mm_err(format!("invalid class name `{}`", c.name)));
            }
            if enums.contains_key(c.name.as_str()) || classes.insert(c.name.as_str(), c).is_some() {
                return Err(mm_err(format!("class `{}` declared twice", c.name)));
            }
        }
        for c in &self.classes {
            if let Some(p) = &c.parent {
                if !classes.contains_key(p.as_str()) {
                    return Err(mm_err(format!("class `{}` has unknown parent `{p}`", c.name)));
                }
            }
            let mut steps = 0;
            let mut cur = c.parent.as_deref();
            while let Some(p) = cur {
                steps += 1;
                if p == c.name || steps > self.classes.len() {
                    return Err(mm_err(format!("inheritance cycle through `{}`", c.name)));
                }
                cur = classes[p].parent.as_deref();
            }
            for a in &c.attributes {
                match &a.kind {
                    Kind::Enum(e) if !enums.contains_key(e.as_str()) => {
                        return Err(mm_err(format!("`{}.{}` uses unknown enum `{e}`", c.name, a.name)))
                    }
                    Kind::Ref(t) if !classes.contains_key(t.as_str()) => {
                        return Err(mm_err(format!("`{}.{}` references unknown class `{t}`", c.name, a.name)))
                    }
                    _ => {}
                }
            }
        }
        for c in &self.classes {
            let mut names = BTreeSet::new();
            for a in self.all_attributes(&c.name) {
                if !names.insert(a.name.as_str()) {
                    return Err(mm_err(format!("attribute `{}` declared twice on `{}`", a.name, c.name)));
                }
            }
        }
        Ok(())
    }

    pub fn class(&self, name: &str) -> Option<&Class> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn enum_def(&self, name: &str) -> Option<&EnumDef> {
        self.enums.iter().find(|e| e.name == name)
    }

    /// Whether `class` is `ancestor` or one of its descendants.
    pub fn conforms(&self, class: &str, ancestor: &str) -> bool {
        let mut cur = Some(class);
        let mut steps = 0;
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            steps += 1;
            if steps > self.classes.len() {
                return false;
            }
            cur = self.class(c).and_then(|k| k.parent.as_deref());
        }
        false
    }

    /// Inherited attributes first, then the class's own.
    pub fn all_attributes(&self, class: &str) -> Vec<&Attribute> {
        let mut chain = Vec::new();
        let mut cur = self.class(class);
        while let Some(c) = cur {
            if chain.len() > self.classes.len() {
                break;
            }
            chain.push(c);
            cur = c.parent.as_deref().and_then(|p| self.class(p));
        }
        chain.iter().rev().flat_map(|c| c.attributes.iter()).collect()
    }

    pub fn attribute(&self, class: &str, name: &str) -> Option<&Attribute> {
        self.all_attributes(class).into_iter().find(|a| a.name == name)
    }

    /// Compact textual form used in prompts.
    pub fn describe(&self) -> String {
        let mut out = Vec::new();
        for e in &self.enums {
            out.push(format!("enum {} {{ {} }}", e.name, e.literals.join(", ")));
        }
        for c in &self.classes {
            let mut line = String::new();
            if c.is_abstract {
                line.push_str("abstract ");
            }
            line.push_str(&format!("class {}", c.name));
            if let Some(p) = &c.parent {
                line.push_str(&format!(" extends {p}"));
            }
            if !c.attributes.is_empty() {
                let attrs: Vec<String> = c.attributes.iter().map(|a| format!("{}: {}", a.name, a.kind)).collect();
                line.push_str(&format!(" {{ {} }}", attrs.join("; ")));
            }
            out.push(line);
        }
        out.join("\n")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metamodel serializes")
    }
}
