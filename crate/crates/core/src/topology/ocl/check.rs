use std::fmt;

use super::{BinOp, Constraint, ConstraintSet, Expr};
use crate::topology::metamodel::{Kind, Metamodel};
use crate::topology::TopologyError;

/// Static type of an expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ty {
    Bool,
    Int,
    Real,
    Str,
    Enum(String),
    Obj(String),
}

impl Ty {
    fn numeric(&self) -> bool {
        matches!(self, Ty::Int | Ty::Real)
    }

    fn from_kind(kind: &Kind) -> Ty {
        match kind {
            Kind::String => Ty::Str,
            Kind::Real => Ty::Real,
            Kind::Int => Ty::Int,
            Kind::Bool => Ty::Bool,
            Kind::Enum(e) => Ty::Enum(e.clone()),
            Kind::Ref(c) => Ty::Obj(c.clone()),
        }
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Bool => f.write_str("Boolean"),
            Ty::Int => f.write_str("Integer"),
            Ty::Real => f.write_str("Real"),
            Ty::Str => f.write_str("String"),
            Ty::Enum(e) | Ty::Obj(e) => f.write_str(e),
        }
    }
}

struct Checker<'a> {
    mm: &'a Metamodel,
    scope: Vec<(String, Ty)>,
}

impl Checker<'_> {
    fn type_name(&self, name: &str) -> Result<Ty, String> {
        match name {
            "Boolean" => Ok(Ty::Bool),
            "Integer" => Ok(Ty::Int),
            "Real" => Ok(Ty::Real),
            "String" => Ok(Ty::Str),
            _ if self.mm.enum_def(name).is_some() => Ok(Ty::Enum(name.to_owned())),
            _ if self.mm.class(name).is_some() => Ok(Ty::Obj(name.to_owned())),
            _ => Err(format!("unknown type `{name}`")),
        }
    }

    fn assignable(&self, from: &Ty, to: &Ty) -> bool {
        match (from, to) {
            (Ty::Int, Ty::Real) => true,
            (Ty::Obj(a), Ty::Obj(b)) => self.mm.conforms(a, b),
            _ => from == to,
        }
    }

    fn bool_operand(&mut self, e: &Expr, what: &str) -> Result<(), String> {
        match self.ty(e)? {
            Ty::Bool => Ok(()),
            t => Err(format!("{what} expects Boolean, found {t} in `{e}`")),
        }
    }

    fn ty(&mut self, e: &Expr) -> Result<Ty, String> {
        Ok(match e {
            Expr::Bool { .. } => Ty::Bool,
            Expr::Int { .. } => Ty::Int,
            Expr::Real { .. } => Ty::Real,
            Expr::Str { .. } => Ty::Str,
            Expr::EnumLit { enumeration, literal } => {
                let def = self.mm.enum_def(enumeration).ok_or_else(|| format!("unknown enumeration `{enumeration}`"))?;
                if !def.literals.contains(literal) {
                    return Err(format!("`{literal}` is not a literal of {enumeration}"));
                }
                Ty::Enum(enumeration.clone())
            }
            Expr::Var { name } => self
                .scope
                .iter()
                .rev()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| format!("unknown symbol `{name}`"))?,
            Expr::Nav { target, attribute } => match self.ty(target)? {
                Ty::Obj(class) => {
                    let a = self
                        .mm
                        .attribute(&class, attribute)
                        .ok_or_else(|| format!("`{class}` has no attribute `{attribute}`"))?;
                    Ty::from_kind(&a.kind)
                }
                t => return Err(format!("cannot navigate `.{attribute}` on {t}")),
            },
            Expr::Call { target, operation, argument } => {
                let t = self.ty(target)?;
                match (operation.as_str(), argument) {
                    ("oclIsTypeOf", Some(class)) => {
                        if !matches!(t, Ty::Obj(_)) {
                            return Err(format!("oclIsTypeOf needs an object, found {t}"));
                        }
                        if self.mm.class(class).is_none() {
                            return Err(format!("unknown class `{class}`"));
                        }
                        Ty::Bool
                    }
                    ("toReal", None) => {
                        if !matches!(t, Ty::Str | Ty::Int | Ty::Real) {
                            return Err(format!("toReal() needs a String or number, found {t}"));
                        }
                        Ty::Real
                    }
                    ("oclIsTypeOf", None) => return Err("oclIsTypeOf needs a class argument".into()),
                    ("toReal", Some(_)) => return Err("toReal() takes no argument".into()),
                    (op, _) => return Err(format!("unknown operation `{op}`")),
                }
            }
            Expr::Neg { operand } => {
                let t = self.ty(operand)?;
                if !t.numeric() {
                    return Err(format!("cannot negate {t}"));
                }
                t
            }
            Expr::Not { operand } => {
                self.bool_operand(operand, "not")?;
                Ty::Bool
            }
            Expr::Binary { op, left, right } if !op.is_comparison() => {
                let word = match op {
                    BinOp::Implies => "implies",
                    BinOp::Or => "or",
                    _ => "and",
                };
                self.bool_operand(left, word)?;
                self.bool_operand(right, word)?;
                Ty::Bool
            }
            Expr::Binary { op, left, right } => {
                let (l, r) = (self.ty(left)?, self.ty(right)?);
                let ok = match op {
                    BinOp::Eq | BinOp::Ne => {
                        (l.numeric() && r.numeric()) || l == r || matches!((&l, &r), (Ty::Obj(_), Ty::Obj(_)))
                    }
                    _ => l.numeric() && r.numeric(),
                };
                if !ok {
                    return Err(format!("cannot compare {l} with {r} in `{e}`"));
                }
                Ty::Bool
            }
            Expr::Let { name, declared, value, body } => {
                let vt = self.ty(value)?;
                let bound = match declared {
                    Some(t) => {
                        let dt = self.type_name(t)?;
                        if !self.assignable(&vt, &dt) {
                            return Err(format!("`{name}` is declared {dt} but bound to {vt}"));
                        }
                        dt
                    }
                    None => vt,
                };
                self.scope.push((name.clone(), bound));
                let t = self.ty(body);
                self.scope.pop();
                t?
            }
        })
    }
}

/// Checks a constraint against the metamodel; the body must be Boolean.
pub fn typecheck(c: &Constraint, mm: &Metamodel) -> Result<(), TopologyError> {
    let fail = |message: String| TopologyError::Constraint { constraint: c.name.clone(), message };
    if mm.class(&c.context).is_none() {
        return Err(fail(format!("unknown context class `{}`", c.context)));
    }
    let mut checker = Checker { mm, scope: vec![("self".into(), Ty::Obj(c.context.clone()))] };
    match checker.ty(&c.body).map_err(fail)? {
        Ty::Bool => Ok(()),
        t => Err(TopologyError::Constraint {
            constraint: c.name.clone(),
            message: format!("invariant must be Boolean, found {t}"),
        }),
    }
}

pub fn typecheck_all(set: &ConstraintSet, mm: &Metamodel) -> Result<(), TopologyError> {
    set.constraints.iter().try_for_each(|c| typecheck(c, mm))
}
