use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{typecheck_all, BinOp, Constraint, ConstraintSet, Expr};
use crate::topology::instance::{conform, InstanceModel, Literal};
use crate::topology::metamodel::{Kind, Metamodel};
use crate::topology::TopologyError;

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
    Enum(String),
    Obj(usize),
}

impl Value {
    fn number(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }
}

type Fault = String;

struct Env<'a> {
    mm: &'a Metamodel,
    model: &'a InstanceModel,
    index: HashMap<&'a str, usize>,
    scope: Vec<(String, Value)>,
}

impl Env<'_> {
    fn nav(&self, obj: usize, attribute: &str) -> Result<Value, Fault> {
        let o = &self.model.objects[obj];
        if let Some(target) = o.references.get(attribute) {
            return self.index.get(target.as_str()).map(|&i| Value::Obj(i)).ok_or_else(|| {
                format!("`{}.{attribute}` points to missing `{target}`", o.id)
            });
        }
        let lit = o.attributes.get(attribute).ok_or_else(|| format!("`{}` has no value for `{attribute}`", o.id))?;
        let kind = self.mm.attribute(&o.class, attribute).map(|a| &a.kind);
        Ok(match (kind, lit) {
            (Some(Kind::Enum(_)), Literal::Str(s)) => Value::Enum(s.clone()),
            (Some(Kind::Real), Literal::Int(i)) => Value::Real(*i as f64),
            (_, Literal::Bool(b)) => Value::Bool(*b),
            (_, Literal::Int(i)) => Value::Int(*i),
            (_, Literal::Real(r)) => Value::Real(*r),
            (_, Literal::Str(s)) => Value::Str(s.clone()),
        })
    }

    fn boolean(&mut self, e: &Expr) -> Result<bool, Fault> {
        match self.eval(e)? {
            Value::Bool(b) => Ok(b),
            other => Err(format!("expected a Boolean, found {other:?}")),
        }
    }

    fn eval(&mut self, e: &Expr) -> Result<Value, Fault> {
        Ok(match e {
            Expr::Bool { value } => Value::Bool(*value),
            Expr::Int { value } => Value::Int(*value),
            Expr::Real { value } => Value::Real(*value),
            Expr::Str { value } => Value::Str(value.clone()),
            Expr::EnumLit { literal, .. } => Value::Enum(literal.clone()),
            Expr::Var { name } => self
                .scope
                .iter()
                .rev()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| format!("unbound `{name}`"))?,
            Expr::Nav { target, attribute } => match self.eval(target)? {
                Value::Obj(i) => self.nav(i, attribute)?,
                other => return Err(format!("cannot navigate `.{attribute}` on {other:?}")),
            },
            Expr::Call { target, operation, argument } => {
                let v = self.eval(target)?;
                match (operation.as_str(), v) {
                    ("oclIsTypeOf", Value::Obj(i)) => {
                        Value::Bool(Some(self.model.objects[i].class.as_str()) == argument.as_deref())
                    }
                    ("toReal", Value::Str(s)) => match s.trim().parse::<f64>() {
                        Ok(r) if r.is_finite() => Value::Real(r),
                        _ => return Err(format!("`{s}` is not a real number")),
                    },
                    ("toReal", v @ (Value::Int(_) | Value::Real(_))) => Value::Real(v.number().unwrap_or_default()),
                    (op, v) => return Err(format!("cannot apply {op} to {v:?}")),
                }
            }
            Expr::Neg { operand } => match self.eval(operand)? {
                Value::Int(i) => Value::Int(-i),
                Value::Real(r) => Value::Real(-r),
                other => return Err(format!("cannot negate {other:?}")),
            },
            Expr::Not { operand } => Value::Bool(!self.boolean(operand)?),
            Expr::Binary { op, left, right } if !op.is_comparison() => {
                let l = self.boolean(left);
                let r = self.boolean(right);
                Value::Bool(match op {
                    BinOp::And => match (l, r) {
                        (Ok(false), _) | (_, Ok(false)) => false,
                        (Err(f), _) | (_, Err(f)) => return Err(f),
                        _ => true,
                    },
                    BinOp::Or => match (l, r) {
                        (Ok(true), _) | (_, Ok(true)) => true,
                        (Err(f), _) | (_, Err(f)) => return Err(f),
                        _ => false,
                    },
                    _ => match (l, r) {
                        (Ok(false), _) | (_, Ok(true)) => true,
                        (Err(f), _) | (_, Err(f)) => return Err(f),
                        _ => false,
                    },
                })
            }
            Expr::Binary { op, left, right } => {
                let (l, r) = (self.eval(left)?, self.eval(right)?);
                let ordering = match (&l, &r) {
                    (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
                    _ => match (l.number(), r.number()) {
                        (Some(a), Some(b)) => a.partial_cmp(&b),
                        _ => None,
                    },
                };
                Value::Bool(match (op, ordering) {
                    (BinOp::Eq, Some(o)) => o.is_eq(),
                    (BinOp::Ne, Some(o)) => o.is_ne(),
                    (BinOp::Eq, None) => l == r,
                    (BinOp::Ne, None) => l != r,
                    (BinOp::Lt, Some(o)) => o.is_lt(),
                    (BinOp::Le, Some(o)) => o.is_le(),
                    (BinOp::Gt, Some(o)) => o.is_gt(),
                    (BinOp::Ge, Some(o)) => o.is_ge(),
                    _ => return Err(format!("cannot order {l:?} and {r:?}")),
                })
            }
            Expr::Let { name, value, body, .. } => {
                let v = self.eval(value)?;
                self.scope.push((name.clone(), v));
                let out = self.eval(body);
                self.scope.pop();
                out?
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OclVerdict {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for OclVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OclVerdict::Pass => "pass",
            OclVerdict::Fail => "fail",
            OclVerdict::NotApplicable => "not-applicable",
        })
    }
}

/// Verdict of one constraint on one object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub constraint: String,
    pub object: String,
    pub class: String,
    pub verdict: OclVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub verdict: OclVerdict,
    pub outcomes: Vec<Outcome>,
}

impl TopologyReport {
    pub fn passed(&self) -> bool {
        self.verdict == OclVerdict::Pass
    }

    pub fn failing(&self) -> impl Iterator<Item = &Outcome> {
        self.outcomes.iter().filter(|o| o.verdict == OclVerdict::Fail)
    }

    pub fn count(&self, verdict: OclVerdict) -> usize {
        self.outcomes.iter().filter(|o| o.verdict == verdict).count()
    }

    pub fn outcome(&self, constraint: &str, object: &str) -> Option<&Outcome> {
        self.outcomes.iter().find(|o| o.constraint == constraint && o.object == object)
    }

    /// One line per applicable (constraint, object) pair.
    pub fn pass_fail_list(&self) -> String {
        let mut out = String::new();
        for o in self.outcomes.iter().filter(|o| o.verdict != OclVerdict::NotApplicable) {
            out.push_str(&format!("{} {} ({}): {}", o.constraint, o.object, o.class, o.verdict));
            if let Some(r) = &o.reason {
                out.push_str(&format!(" - {r}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn evaluate(c: &Constraint, env: &mut Env<'_>, obj: usize) -> (OclVerdict, Option<String>) {
    env.scope.clear();
    env.scope.push(("self".into(), Value::Obj(obj)));
    match env.boolean(&c.body) {
        Ok(true) => (OclVerdict::Pass, None),
        Ok(false) => (OclVerdict::Fail, Some("invariant is false".into())),
        Err(fault) => (OclVerdict::Fail, Some(fault)),
    }
}

/// Evaluates every constraint on every object. Objects whose class is not
/// the context class or one of its descendants are not applicable.
pub fn eval_constraints(
    instance: &InstanceModel,
    mm: &Metamodel,
    constraints: &ConstraintSet,
) -> Result<TopologyReport, TopologyError> {
    let conformance = conform(instance, mm);
    if !conformance.is_conformant() {
        return Err(TopologyError::NotConformant(conformance));
    }
    typecheck_all(constraints, mm)?;
    let mut env = Env {
        mm,
        model: instance,
        index: instance.objects.iter().enumerate().map(|(i, o)| (o.id.as_str(), i)).collect(),
        scope: Vec::new(),
    };
    let mut outcomes = Vec::with_capacity(constraints.len() * instance.objects.len());
    for c in &constraints.constraints {
        for (i, o) in instance.objects.iter().enumerate() {
            let (verdict, reason) = if mm.conforms(&o.class, &c.context) {
                evaluate(c, &mut env, i)
            } else {
                (OclVerdict::NotApplicable, None)
            };
            outcomes.push(Outcome { constraint: c.name.clone(), object: o.id.clone(), class: o.class.clone(), verdict, reason });
        }
    }
    let verdict = if outcomes.iter().any(|o| o.verdict == OclVerdict::Fail) { OclVerdict::Fail } else { OclVerdict::Pass };
    Ok(TopologyReport { verdict, outcomes })
}
