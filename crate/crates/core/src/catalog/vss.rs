use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::doc::{self, Doc};
use super::{Bounds, Catalog, CatalogEntry, CatalogError, DataType, Protocol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Sensor,
    Actuator,
    Attribute,
    Branch,
}

impl SignalKind {
    fn as_str(self) -> &'static str {
        match self {
            SignalKind::Sensor => "sensor",
            SignalKind::Actuator => "actuator",
            SignalKind::Attribute => "attribute",
            SignalKind::Branch => "branch",
        }
    }
}

/// A node of the VSS tree. Branches carry no datatype.
#[derive(Debug, Clone, PartialEq)]
pub struct VssSignal {
    pub path: String,
    pub kind: SignalKind,
    pub datatype: Option<DataType>,
    pub unit: Option<String>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub allowed: Option<Vec<String>>,
    pub description: Option<String>,
}

impl VssSignal {
    pub fn is_leaf(&self) -> bool {
        self.kind != SignalKind::Branch
    }

    pub fn name(&self) -> &str {
        self.path.rsplit('.').next().unwrap_or(&self.path)
    }

    fn parent_path(&self) -> Option<&str> {
        self.path.rsplit_once('.').map(|(parent, _)| parent)
    }

    fn to_entry(&self) -> CatalogEntry {
        let datatype = self.datatype.expect("leaf has a datatype");
        let mut text = vec![self.path.clone(), datatype.as_str().to_owned()];
        text.extend(self.unit.clone());
        text.extend(self.description.clone());
        CatalogEntry {
            key: self.path.clone(),
            protocol: Protocol::Vss,
            datatype,
            unit: self.unit.clone(),
            text: text.join(" "),
            bounds: Bounds { min: self.min, max: self.max },
            allowed: self.allowed.clone(),
        }
    }
}

/// Parsed VSS tree: every node indexed by path, leaves flattened into entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalCatalog {
    /// Preorder, document order.
    nodes: Vec<VssSignal>,
    by_path: HashMap<String, usize>,
    entries: Vec<CatalogEntry>,
    entry_by_key: HashMap<String, usize>,
}

const LEAF_KEYS: [&str; 7] = ["type", "datatype", "unit", "min", "max", "allowed", "description"];

impl SignalCatalog {
    /// Parses a VSS tree document.
    ///
    /// A node is a branch when it has `children` or `type: "branch"`; a node
    /// with any leaf field (`type`, `datatype`, `unit`, ...) is a leaf and must
    /// carry `datatype`; a node with none of these keys is shorthand for a
    /// branch whose members are its children.
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let root: Doc = serde_json::from_str(text).map_err(CatalogError::from_json)?;
        let members = root
            .as_object()
            .ok_or_else(|| CatalogError::schema("<root>", "expected an object of top-level branches"))?;
        let mut nodes = Vec::new();
        for (name, node) in members {
            walk(None, name, node, &mut nodes)?;
        }
        Self::from_nodes(nodes)
    }

    fn from_nodes(nodes: Vec<VssSignal>) -> Result<Self, CatalogError> {
        let mut by_path = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if by_path.insert(node.path.clone(), i).is_some() {
                return Err(CatalogError::DuplicatePath(node.path.clone()));
            }
        }
        let entries: Vec<CatalogEntry> =
            nodes.iter().filter(|n| n.is_leaf()).map(VssSignal::to_entry).collect();
        let entry_by_key = entries.iter().enumerate().map(|(i, e)| (e.key.clone(), i)).collect();
        Ok(SignalCatalog { nodes, by_path, entries, entry_by_key })
    }

    /// All nodes, branches included, in document preorder.
    pub fn nodes(&self) -> &[VssSignal] {
        &self.nodes
    }

    pub fn leaves(&self) -> impl Iterator<Item = &VssSignal> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// Any node (branch or leaf) by path.
    pub fn node(&self, path: &str) -> Option<&VssSignal> {
        self.by_path.get(path).map(|&i| &self.nodes[i])
    }

    /// Canonical tree form: explicit `type` on every node and `children` on
    /// every branch, members in document order.
    pub fn to_canonical_json(&self) -> String {
        let mut root = Map::new();
        for node in self.nodes.iter().filter(|n| n.parent_path().is_none()) {
            root.insert(node.name().to_owned(), self.node_value(node));
        }
        serde_json::to_string_pretty(&Value::Object(root)).expect("catalog serializes")
    }

    fn node_value(&self, node: &VssSignal) -> Value {
        let mut obj = Map::new();
        obj.insert("type".into(), node.kind.as_str().into());
        if let Some(dt) = node.datatype {
            obj.insert("datatype".into(), dt.as_str().into());
        }
        if let Some(unit) = &node.unit {
            obj.insert("unit".into(), unit.clone().into());
        }
        if let Some(min) = node.min {
            obj.insert("min".into(), min.into());
        }
        if let Some(max) = node.max {
            obj.insert("max".into(), max.into());
        }
        if let Some(allowed) = &node.allowed {
            obj.insert("allowed".into(), allowed.clone().into());
        }
        if let Some(description) = &node.description {
            obj.insert("description".into(), description.clone().into());
        }
        if !node.is_leaf() {
            let mut children = Map::new();
            for child in self.nodes.iter().filter(|c| c.parent_path() == Some(node.path.as_str())) {
                children.insert(child.name().to_owned(), self.node_value(child));
            }
            obj.insert("children".into(), Value::Object(children));
        }
        Value::Object(obj)
    }
}

impl Catalog for SignalCatalog {
    fn protocol(&self) -> Protocol {
        Protocol::Vss
    }

    fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    fn lookup(&self, key: &str) -> Option<&CatalogEntry> {
        self.entry_by_key.get(key).map(|&i| &self.entries[i])
    }
}

fn walk(parent: Option<&str>, name: &str, node: &Doc, out: &mut Vec<VssSignal>) -> Result<(), CatalogError> {
    let path = match parent {
        Some(p) => format!("{p}.{name}"),
        None => name.to_owned(),
    };
    if name.is_empty() || name.contains('.') {
        return Err(CatalogError::schema(&path, "node names must be non-empty and contain no '.'"));
    }
    let members = node
        .as_object()
        .ok_or_else(|| CatalogError::schema(&path, format!("expected an object, found {}", node.kind())))?;

    let children = doc::get(members, "children");
    let declared_type = match doc::get(members, "type") {
        Some(Doc::String(t)) => Some(t.as_str()),
        Some(other) => return Err(CatalogError::schema(&path, format!("`type` must be a string, found {}", other.kind()))),
        None => None,
    };
    let has_leaf_keys = members.iter().any(|(k, _)| LEAF_KEYS.contains(&k.as_str()));

    if children.is_some() || declared_type == Some("branch") {
        if doc::get(members, "datatype").is_some() {
            return Err(CatalogError::schema(&path, "branch nodes cannot declare a datatype"));
        }
        out.push(VssSignal {
            path: path.clone(),
            kind: SignalKind::Branch,
            datatype: None,
            unit: None,
            min: None,
            max: None,
            allowed: None,
            description: opt_string(members, "description", &path)?,
        });
        match children {
            Some(Doc::Object(kids)) => {
                for (child_name, child) in kids {
                    walk(Some(&path), child_name, child, out)?;
                }
            }
            Some(other) => {
                return Err(CatalogError::schema(&path, format!("`children` must be an object, found {}", other.kind())))
            }
            None => {}
        }
        return Ok(());
    }

    if !has_leaf_keys {
        // Shorthand branch: every member is a child node.
        out.push(VssSignal {
            path: path.clone(),
            kind: SignalKind::Branch,
            datatype: None,
            unit: None,
            min: None,
            max: None,
            allowed: None,
            description: None,
        });
        for (child_name, child) in members {
            if child.as_object().is_none() {
                return Err(CatalogError::schema(format!("{path}.{child_name}"), "leaf is missing `datatype`"));
            }
            walk(Some(&path), child_name, child, out)?;
        }
        return Ok(());
    }

    let kind = match declared_type {
        None | Some("sensor") => SignalKind::Sensor,
        Some("actuator") => SignalKind::Actuator,
        Some("attribute") => SignalKind::Attribute,
        Some(other) => return Err(CatalogError::schema(&path, format!("unknown node type `{other}`"))),
    };
    let datatype = match doc::get(members, "datatype") {
        Some(Doc::String(dt)) => DataType::parse(dt)
            .ok_or_else(|| CatalogError::schema(&path, format!("unknown datatype `{dt}`")))?,
        Some(other) => {
            return Err(CatalogError::schema(&path, format!("`datatype` must be a string, found {}", other.kind())))
        }
        None => return Err(CatalogError::schema(&path, "leaf is missing `datatype`")),
    };
    let min = opt_number(members, "min", &path)?;
    let max = opt_number(members, "max", &path)?;
    if let (Some(lo), Some(hi)) = (min, max) {
        if lo > hi {
            return Err(CatalogError::schema(&path, format!("min {lo} exceeds max {hi}")));
        }
    }
    let allowed = match doc::get(members, "allowed") {
        None => None,
        Some(Doc::Array(items)) => Some(
            items
                .iter()
                .map(|item| match item {
                    Doc::String(s) => Ok(s.clone()),
                    other => Err(CatalogError::schema(&path, format!("`allowed` items must be strings, found {}", other.kind()))),
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Some(other) => {
            return Err(CatalogError::schema(&path, format!("`allowed` must be an array, found {}", other.kind())))
        }
    };
    if datatype == DataType::Enum && allowed.as_ref().is_none_or(|a| a.is_empty()) {
        return Err(CatalogError::schema(&path, "enum leaf needs a non-empty `allowed` list"));
    }
    out.push(VssSignal {
        path: path.clone(),
        kind,
        datatype: Some(datatype),
        unit: opt_string(members, "unit", &path)?,
        min,
        max,
        allowed,
        description: opt_string(members, "description", &path)?,
    });
    Ok(())
}

fn opt_string(members: &[(String, Doc)], key: &str, path: &str) -> Result<Option<String>, CatalogError> {
    match doc::get(members, key) {
        None | Some(Doc::Null) => Ok(None),
        Some(Doc::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(CatalogError::schema(path, format!("`{key}` must be a string, found {}", other.kind()))),
    }
}

fn opt_number(members: &[(String, Doc)], key: &str, path: &str) -> Result<Option<f64>, CatalogError> {
    match doc::get(members, key) {
        None | Some(Doc::Null) => Ok(None),
        Some(Doc::Number(n)) => Ok(Some(*n)),
        Some(other) => Err(CatalogError::schema(path, format!("`{key}` must be a number, found {}", other.kind()))),
    }
}
