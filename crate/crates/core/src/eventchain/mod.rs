//! Event chains: PlantUML activity diagrams parsed into a validated graph,
//! converted into a JSON chain document with normalized event names, and
//! unrolled into the event sequence of every start-to-stop path.

mod plantuml;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::extraction::AcceptedEntry;
use crate::gateway::{render_prompt, Gateway, GatewayError, TemplateId};
use crate::names::normalize;

pub use plantuml::{extract_uml_block, parse_activity_diagram};

/// Upper bound on enumerated paths before giving up.
pub const MAX_PATHS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Start,
    Stop,
    Action,
    Decision,
    Merge,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_format: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
    /// Normalized event name; set on action nodes of a chain document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<Notes>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

/// One structural defect of a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StructureIssue {
    NoStart,
    MultipleStarts(Vec<String>),
    NoStop,
    DuplicateNodeId(String),
    DanglingEdge { from: String, to: String },
    Unreachable(Vec<String>),
    CannotReachStop(Vec<String>),
    ActionOutDegree { node: String, count: usize },
    DecisionOutDegree { node: String, count: usize },
    DuplicateGuard { node: String, guard: String },
    StopHasSuccessor(String),
}

impl fmt::Display for StructureIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureIssue::NoStart => write!(f, "no start node"),
            StructureIssue::MultipleStarts(ids) => write!(f, "several start nodes: {}", ids.join(", ")),
            StructureIssue::NoStop => write!(f, "no stop node"),
            StructureIssue::DuplicateNodeId(id) => write!(f, "duplicate node id {id}"),
            StructureIssue::DanglingEdge { from, to } => write!(f, "edge {from} -> {to} references an unknown node"),
            StructureIssue::Unreachable(ids) => write!(f, "unreachable from start: {}", ids.join(", ")),
            StructureIssue::CannotReachStop(ids) => write!(f, "cannot reach a stop: {}", ids.join(", ")),
            StructureIssue::ActionOutDegree { node, count } => {
                write!(f, "action {node} has {count} outgoing edges, expected 1")
            }
            StructureIssue::DecisionOutDegree { node, count } => {
                write!(f, "decision {node} has {count} outgoing edges, expected at least 2")
            }
            StructureIssue::DuplicateGuard { node, guard } => write!(f, "decision {node} repeats guard `{guard}`"),
            StructureIssue::StopHasSuccessor(id) => write!(f, "stop {id} has outgoing edges"),
        }
    }
}

fn join_issues(issues: &[StructureIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error, PartialEq)]
pub enum EventChainError {
    #[error("diagram line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid chain structure: {}", join_issues(.0))]
    Structure(Vec<StructureIssue>),
    #[error("action {node} has no usable label")]
    EmptyLabel { node: String },
    #[error("node {node} has an event but is not an action")]
    StrayEvent { node: String },
    #[error("cycle through node {node}; cyclic chains are not supported")]
    Cycle { node: String },
    #[error("more than {MAX_PATHS} paths")]
    TooManyPaths,
    #[error("chain document: {0}")]
    Json(String),
    #[error("generated diagram does not parse: {error}")]
    Generation { raw: String, error: Box<EventChainError> },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl ActivityGraph {
    fn index(&self) -> HashMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect()
    }

    /// Successor indices per node, in edge declaration order.
    fn successors(&self) -> Vec<Vec<(usize, usize)>> {
        let index = self.index();
        let mut succ = vec![Vec::new(); self.nodes.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            if let (Some(&a), Some(&b)) = (index.get(edge.from.as_str()), index.get(edge.to.as_str())) {
                succ[a].push((b, e));
            }
        }
        succ
    }

    pub fn start(&self) -> Option<&Node> {
        self.nodes.iter().find(|n| n.kind == NodeKind::Start)
    }

    pub fn actions(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Action)
    }

    pub fn validate(&self) -> Result<(), EventChainError> {
        let mut issues = Vec::new();
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                issues.push(StructureIssue::DuplicateNodeId(n.id.clone()));
            }
        }
        let index = self.index();
        for e in &self.edges {
            if !index.contains_key(e.from.as_str()) || !index.contains_key(e.to.as_str()) {
                issues.push(StructureIssue::DanglingEdge { from: e.from.clone(), to: e.to.clone() });
            }
        }
        let starts: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i].kind == NodeKind::Start).collect();
        match starts.len() {
            0 => issues.push(StructureIssue::NoStart),
            1 => {}
            _ => issues.push(StructureIssue::MultipleStarts(starts.iter().map(|&i| self.nodes[i].id.clone()).collect())),
        }
        if !self.nodes.iter().any(|n| n.kind == NodeKind::Stop) {
            issues.push(StructureIssue::NoStop);
        }
        let succ = self.successors();
        for (i, n) in self.nodes.iter().enumerate() {
            let count = succ[i].len();
            match n.kind {
                NodeKind::Action if count != 1 => {
                    issues.push(StructureIssue::ActionOutDegree { node: n.id.clone(), count })
                }
                NodeKind::Decision => {
                    if count < 2 {
                        issues.push(StructureIssue::DecisionOutDegree { node: n.id.clone(), count });
                    }
                    let mut guards = BTreeSet::new();
                    for &(_, e) in &succ[i] {
                        let guard = self.edges[e].guard.clone().unwrap_or_default();
                        if !guards.insert(guard.clone()) {
                            issues.push(StructureIssue::DuplicateGuard { node: n.id.clone(), guard });
                        }
                    }
                }
                NodeKind::Stop if count > 0 => issues.push(StructureIssue::StopHasSuccessor(n.id.clone())),
                _ => {}
            }
        }
        if let [start] = starts.as_slice() {
            let mut seen = vec![false; self.nodes.len()];
            let mut stack = vec![*start];
            while let Some(i) = stack.pop() {
                if std::mem::replace(&mut seen[i], true) {
                    continue;
                }
                stack.extend(succ[i].iter().map(|&(j, _)| j));
            }
            let unreachable: Vec<String> =
                (0..self.nodes.len()).filter(|&i| !seen[i]).map(|i| self.nodes[i].id.clone()).collect();
            if !unreachable.is_empty() {
                issues.push(StructureIssue::Unreachable(unreachable));
            }
        }
        let mut pred = vec![Vec::new(); self.nodes.len()];
        for (i, s) in succ.iter().enumerate() {
            for &(j, _) in s {
                pred[j].push(i);
            }
        }
        let mut reaches = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i].kind == NodeKind::Stop).collect();
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut reaches[i], true) {
                continue;
            }
            stack.extend(pred[i].iter().copied());
        }
        let stuck: Vec<String> =
            (0..self.nodes.len()).filter(|&i| !reaches[i]).map(|i| self.nodes[i].id.clone()).collect();
        if !stuck.is_empty() && self.nodes.iter().any(|n| n.kind == NodeKind::Stop) {
            issues.push(StructureIssue::CannotReachStop(stuck));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(EventChainError::Structure(issues))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
}

/// A validated graph whose action nodes carry normalized event names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainDocument {
    #[serde(flatten)]
    pub graph: ActivityGraph,
    #[serde(default)]
    pub metadata: ChainMetadata,
}

pub fn to_chain_document(graph: &ActivityGraph) -> Result<ChainDocument, EventChainError> {
    graph.validate()?;
    let mut graph = graph.clone();
    for node in &mut graph.nodes {
        node.event = None;
        if node.kind == NodeKind::Action {
            let event = normalize(&node.label);
            if event.is_empty() {
                return Err(EventChainError::EmptyLabel { node: node.id.clone() });
            }
            node.event = Some(event);
        }
    }
    Ok(ChainDocument { graph, metadata: ChainMetadata::default() })
}

impl ChainDocument {
    /// Parses a diagram and converts it in one step.
    pub fn from_plantuml(text: &str) -> Result<Self, EventChainError> {
        to_chain_document(&parse_activity_diagram(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain document serializes")
    }

    /// Reads a canonical document and re-checks its structure and events.
    pub fn from_json(text: &str) -> Result<Self, EventChainError> {
        let doc: ChainDocument = serde_json::from_str(text).map_err(|e| EventChainError::Json(e.to_string()))?;
        doc.check()?;
        Ok(doc)
    }

    pub fn check(&self) -> Result<(), EventChainError> {
        self.graph.validate()?;
        for node in &self.graph.nodes {
            match (node.kind, &node.event) {
                (NodeKind::Action, Some(e)) if !e.is_empty() && normalize(e) == *e => {}
                (NodeKind::Action, _) => return Err(EventChainError::EmptyLabel { node: node.id.clone() }),
                (_, Some(_)) => return Err(EventChainError::StrayEvent { node: node.id.clone() }),
                (_, None) => {}
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_json())
    }

    pub fn events(&self) -> impl Iterator<Item = &str> {
        self.graph.nodes.iter().filter_map(|n| n.event.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceStep {
    pub position: usize,
    pub event: String,
    pub node: String,
}

/// Action events along one start-to-stop path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSequence {
    pub steps: Vec<SequenceStep>,
}

impl EventSequence {
    pub fn from_events<S: AsRef<str>>(events: &[S]) -> Self {
        EventSequence {
            steps: events
                .iter()
                .enumerate()
                .map(|(position, e)| SequenceStep { position, event: e.as_ref().to_owned(), node: format!("e{position}") })
                .collect(),
        }
    }

    pub fn events(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.event.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Every maximal start-to-stop path, exploring edges in declaration order.
pub fn enumerate_paths(document: &ChainDocument) -> Result<Vec<EventSequence>, EventChainError> {
    let graph = &document.graph;
    graph.validate()?;
    let start = graph.nodes.iter().position(|n| n.kind == NodeKind::Start).expect("validated");
    let succ = graph.successors();
    let mut paths = Vec::new();
    let mut on_path = vec![false; graph.nodes.len()];
    let mut trail = Vec::new();
    walk(graph, &succ, start, &mut on_path, &mut trail, &mut paths)?;
    Ok(paths)
}

fn walk(
    graph: &ActivityGraph,
    succ: &[Vec<(usize, usize)>],
    node: usize,
    on_path: &mut [bool],
    trail: &mut Vec<usize>,
    paths: &mut Vec<EventSequence>,
) -> Result<(), EventChainError> {
    if on_path[node] {
        return Err(EventChainError::Cycle { node: graph.nodes[node].id.clone() });
    }
    on_path[node] = true;
    trail.push(node);
    if graph.nodes[node].kind == NodeKind::Stop {
        if paths.len() >= MAX_PATHS {
            return Err(EventChainError::TooManyPaths);
        }
        let steps = trail
            .iter()
            .filter_map(|&i| {
                let n = &graph.nodes[i];
                let event = n.event.clone().or_else(|| (n.kind == NodeKind::Action).then(|| normalize(&n.label)))?;
                Some((event, n.id.clone()))
            })
            .enumerate()
            .map(|(position, (event, node))| SequenceStep { position, event, node })
            .collect();
        paths.push(EventSequence { steps });
    }
    for &(next, _) in &succ[node] {
        walk(graph, succ, next, on_path, trail, paths)?;
    }
    trail.pop();
    on_path[node] = false;
    Ok(())
}

/// A diagram returned by the model, already re-parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedChain {
    pub diagram: String,
    pub document: ChainDocument,
}

/// Bound into the prompt when there is no diagram yet.
pub const EMPTY_CHAIN: &str = "@startuml\n@enduml";

pub fn chain_prompt(code: &str, current_chain: &str, relevant: &[AcceptedEntry]) -> Result<String, EventChainError> {
    let current = if current_chain.trim().is_empty() { EMPTY_CHAIN } else { current_chain.trim() };
    let context = crate::extraction::relevant_context(relevant);
    Ok(render_prompt(
        TemplateId::PC2,
        &[("current-event-chain", current), ("code", code), ("relevant messages/signals", context.as_str())],
    )?)
}

/// Renders the chain prompt, keeps only the `@startuml` block of the
/// completion and requires it to parse.
pub fn generate_chain(
    code: &str,
    current_chain: &str,
    relevant: &[AcceptedEntry],
    gateway: &Gateway,
) -> Result<GeneratedChain, EventChainError> {
    let prompt = chain_prompt(code, current_chain, relevant)?;
    let raw = gateway.complete(&prompt)?;
    let generation = |error: EventChainError| EventChainError::Generation { raw: raw.clone(), error: Box::new(error) };
    let block = extract_uml_block(&raw).ok_or_else(|| generation(EventChainError::Parse { line: 1, message: "no @startuml block".into() }))?;
    let mut document = ChainDocument::from_plantuml(block).map_err(generation)?;
    document.metadata = ChainMetadata { source_digest: Some(sha256_hex(code)), prompt_digest: Some(sha256_hex(&prompt)) };
    Ok(GeneratedChain { diagram: format!("{block}\n"), document })
}

#[cfg(test)]
mod tests;
