//! Before/after temporal rules over event chains.
//!
//! `A before B` holds on a path when every occurrence of `B` has an
//! occurrence of `A` at a strictly earlier position; `A after B` holds when
//! every `A` has an earlier `B`. A `require` rule must be true on every path
//! of a chain and a `forbid` rule must be false on every path.

mod parse;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventchain::{enumerate_paths, ChainDocument, EventChainError, EventSequence};
use crate::gateway::{render_prompt, Gateway, GatewayError, TemplateId};

pub use parse::parse_rules;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalOp {
    Before,
    After,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleAtom {
    pub left: String,
    pub op: TemporalOp,
    pub right: String,
}

impl fmt::Display for RuleAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            TemporalOp::Before => "before",
            TemporalOp::After => "after",
        };
        write!(f, "{} {op} {}", self.left, self.right)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleExpr {
    Atom(RuleAtom),
    And(Vec<RuleExpr>),
    Or(Vec<RuleExpr>),
    Not(Box<RuleExpr>),
}

impl RuleExpr {
    pub fn atoms(&self) -> Vec<&RuleAtom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a RuleAtom>) {
        match self {
            RuleExpr::Atom(a) => out.push(a),
            RuleExpr::And(xs) | RuleExpr::Or(xs) => xs.iter().for_each(|x| x.collect_atoms(out)),
            RuleExpr::Not(x) => x.collect_atoms(out),
        }
    }
}

impl fmt::Display for RuleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, xs: &[RuleExpr], sep: &str| -> fmt::Result {
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                match x {
                    RuleExpr::And(_) | RuleExpr::Or(_) => write!(f, "({x})")?,
                    _ => write!(f, "{x}")?,
                }
            }
            Ok(())
        };
        match self {
            RuleExpr::Atom(a) => write!(f, "{a}"),
            RuleExpr::And(xs) => join(f, xs, "and"),
            RuleExpr::Or(xs) => join(f, xs, "or"),
            RuleExpr::Not(x) => match **x {
                RuleExpr::Atom(_) | RuleExpr::Not(_) => write!(f, "not {x}"),
                _ => write!(f, "not ({x})"),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Require,
    Forbid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyRule {
    pub name: String,
    pub mode: Mode,
    pub expr: RuleExpr,
    /// Rule event name to extra chain event patterns (`*` matches any run).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aliases: BTreeMap<String, Vec<String>>,
}

impl SafetyRule {
    /// Whether a chain event counts as the rule event `name`.
    pub fn matches(&self, name: &str, chain_event: &str) -> bool {
        name == chain_event
            || self.aliases.get(name).is_some_and(|ps| ps.iter().any(|p| glob_match(p, chain_event)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<SafetyRule>,
}

impl RuleSet {
    pub fn get(&self, name: &str) -> Option<&SafetyRule> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Concatenates rule sets, rejecting repeated names.
    pub fn merge(mut self, other: RuleSet) -> Result<RuleSet, RulesError> {
        for rule in other.rules {
            if self.get(&rule.name).is_some() {
                return Err(RulesError::DuplicateRule(rule.name));
            }
            self.rules.push(rule);
        }
        Ok(self)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RulesError {
    #[error("rule syntax error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("rule `{0}` is defined twice")]
    DuplicateRule(String),
    #[error(transparent)]
    Chain(#[from] EventChainError),
    #[error("the report has no violations to correct")]
    NoViolations,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    // reachable[j]: pattern prefix consumed so far matches text prefix of length j
    let mut reachable = vec![false; t.len() + 1];
    reachable[0] = true;
    for &pc in &p {
        let mut next = vec![false; t.len() + 1];
        if pc == '*' {
            let mut any = false;
            for j in 0..=t.len() {
                any |= reachable[j];
                next[j] = any;
            }
        } else {
            for j in 0..t.len() {
                next[j + 1] = reachable[j] && t[j] == pc;
            }
        }
        reachable = next;
    }
    reachable[t.len()]
}

fn first_position(rule: &SafetyRule, sequence: &EventSequence, event: &str) -> Option<usize> {
    sequence.steps.iter().find(|s| rule.matches(event, &s.event)).map(|s| s.position)
}

/// Atom value on one sequence, with the owning rule's aliases applied.
pub fn eval_atom_with(rule: &SafetyRule, sequence: &EventSequence, atom: &RuleAtom) -> bool {
    let (earlier, later) = match atom.op {
        TemporalOp::Before => (&atom.left, &atom.right),
        TemporalOp::After => (&atom.right, &atom.left),
    };
    // Every `later` has an earlier `earlier` iff the first `later` does.
    match first_position(rule, sequence, later) {
        None => true,
        Some(l) => first_position(rule, sequence, earlier).is_some_and(|e| e < l),
    }
}

/// Atom value on one sequence with exact event matching.
pub fn eval_atom(sequence: &EventSequence, atom: &RuleAtom) -> bool {
    let bare = SafetyRule { name: String::new(), mode: Mode::Require, expr: RuleExpr::Atom(atom.clone()), aliases: BTreeMap::new() };
    eval_atom_with(&bare, sequence, atom)
}

pub fn eval_expr(rule: &SafetyRule, sequence: &EventSequence, expr: &RuleExpr) -> bool {
    match expr {
        RuleExpr::Atom(a) => eval_atom_with(rule, sequence, a),
        RuleExpr::And(xs) => xs.iter().all(|x| eval_expr(rule, sequence, x)),
        RuleExpr::Or(xs) => xs.iter().any(|x| eval_expr(rule, sequence, x)),
        RuleExpr::Not(x) => !eval_expr(rule, sequence, x),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomValue {
    pub atom: String,
    pub value: bool,
}

/// A path on which a rule fails, with the value of each atom on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub path: Vec<String>,
    pub nodes: Vec<String>,
    pub expr_value: bool,
    pub atoms: Vec<AtomValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleResult {
    pub rule: String,
    pub mode: Mode,
    pub expr: String,
    pub verdict: Verdict,
    pub paths_checked: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<Witness>,
}

impl RuleResult {
    pub fn is_violated(&self) -> bool {
        self.verdict == Verdict::Violated
    }
}

/// Verdict of a rule over already-enumerated paths.
pub fn eval_rule_on_paths(paths: &[EventSequence], rule: &SafetyRule) -> RuleResult {
    let atoms = rule.expr.atoms();
    let mut witnesses = Vec::new();
    for path in paths {
        let value = eval_expr(rule, path, &rule.expr);
        let fails = match rule.mode {
            Mode::Require => !value,
            Mode::Forbid => value,
        };
        if fails {
            witnesses.push(Witness {
                path: path.events().iter().map(|e| e.to_string()).collect(),
                nodes: path.steps.iter().map(|s| s.node.clone()).collect(),
                expr_value: value,
                atoms: atoms
                    .iter()
                    .map(|a| AtomValue { atom: a.to_string(), value: eval_atom_with(rule, path, a) })
                    .collect(),
            });
        }
    }
    RuleResult {
        rule: rule.name.clone(),
        mode: rule.mode,
        expr: rule.expr.to_string(),
        verdict: if witnesses.is_empty() { Verdict::Pass } else { Verdict::Violated },
        paths_checked: paths.len(),
        witnesses,
    }
}

pub fn eval_rule(document: &ChainDocument, rule: &SafetyRule) -> Result<RuleResult, RulesError> {
    Ok(eval_rule_on_paths(&enumerate_paths(document)?, rule))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub chain_digest: String,
    pub verdict: Verdict,
    pub rules: Vec<RuleResult>,
}

impl SafetyReport {
    pub fn is_pass(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn violations(&self) -> impl Iterator<Item = &RuleResult> {
        self.rules.iter().filter(|r| r.is_violated())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per rule, e.g. `brake-after-detection: violated (1 of 2 paths)`.
    pub fn summary(&self) -> String {
        self.rules
            .iter()
            .map(|r| match r.verdict {
                Verdict::Pass => format!("{}: pass", r.rule),
                Verdict::Violated => format!("{}: violated ({} of {} paths)", r.rule, r.witnesses.len(), r.paths_checked),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn check(document: &ChainDocument, rules: &RuleSet) -> Result<SafetyReport, RulesError> {
    let paths = enumerate_paths(document)?;
    let results: Vec<RuleResult> = rules.rules.iter().map(|r| eval_rule_on_paths(&paths, r)).collect();
    let verdict = if results.iter().any(RuleResult::is_violated) { Verdict::Violated } else { Verdict::Pass };
    Ok(SafetyReport { chain_digest: document.digest(), verdict, rules: results })
}

pub fn correction_prompt(code: &str, report: &SafetyReport) -> Result<String, RulesError> {
    Ok(render_prompt(TemplateId::PC2b, &[("result", report.to_json().as_str()), ("code", code)])?)
}

/// Asks for corrected code; the completion is returned unchanged.
pub fn suggest_correction(code: &str, report: &SafetyReport, gateway: &Gateway) -> Result<String, RulesError> {
    if report.violations().next().is_none() {
        return Err(RulesError::NoViolations);
    }
    Ok(gateway.complete(&correction_prompt(code, report)?)?)
}
