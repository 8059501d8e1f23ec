//! The OCL subset used for topology constraints: `context C inv N: expr`
//! with `implies`, `or`, `and`, `not`, comparisons, `let x : T = e in e`,
//! navigation, `oclIsTypeOf(T)`, `toReal()`, literals and `Enum::literal`
//! (literals may contain hyphens). `--` starts a comment.

mod check;
mod eval;

use std::fmt;

use serde::{Deserialize, Serialize};

use super::TopologyError;

pub use check::{typecheck, typecheck_all, Ty};
pub use eval::{eval_constraints, OclVerdict, Outcome, TopologyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinOp {
    Implies,
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Implies => "implies",
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Eq => "=",
            BinOp::Ne => "<>",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }

    pub(crate) fn is_comparison(self) -> bool {
        !matches!(self, BinOp::Implies | BinOp::Or | BinOp::And)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "node")]
pub enum Expr {
    Bool { value: bool },
    Int { value: i64 },
    Real { value: f64 },
    Str { value: String },
    EnumLit { enumeration: String, literal: String },
    Var { name: String },
    Nav { target: Box<Expr>, attribute: String },
    Call { target: Box<Expr>, operation: String, argument: Option<String> },
    Neg { operand: Box<Expr> },
    Not { operand: Box<Expr> },
    Binary { op: BinOp, left: Box<Expr>, right: Box<Expr> },
    Let { name: String, declared: Option<String>, value: Box<Expr>, body: Box<Expr> },
}

impl Expr {
    fn binary(op: BinOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary { op, left: Box::new(left), right: Box::new(right) }
    }

    fn needs_parens(&self) -> bool {
        matches!(self, Expr::Binary { .. } | Expr::Let { .. } | Expr::Not { .. } | Expr::Neg { .. })
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    if e.needs_parens() {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Bool { value } => write!(f, "{value}"),
            Expr::Int { value } => write!(f, "{value}"),
            Expr::Real { value } => write!(f, "{value:?}"),
            Expr::Str { value } => write!(f, "'{}'", value.replace('\\', "\\\\").replace('\'', "\\'")),
            Expr::EnumLit { enumeration, literal } => write!(f, "{enumeration}::{literal}"),
            Expr::Var { name } => f.write_str(name),
            Expr::Nav { target, attribute } => {
                write_operand(f, target)?;
                write!(f, ".{attribute}")
            }
            Expr::Call { target, operation, argument } => {
                write_operand(f, target)?;
                write!(f, ".{operation}({})", argument.as_deref().unwrap_or(""))
            }
            Expr::Neg { operand } => {
                f.write_str("-")?;
                write_operand(f, operand)
            }
            Expr::Not { operand } => {
                f.write_str("not ")?;
                write_operand(f, operand)
            }
            Expr::Binary { op, left, right } => {
                write_operand(f, left)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, right)
            }
            Expr::Let { name, declared, value, body } => {
                write!(f, "let {name}")?;
                if let Some(t) = declared {
                    write!(f, " : {t}")?;
                }
                f.write_str(" = ")?;
                write_operand(f, value)?;
                f.write_str(" in ")?;
                write!(f, "{body}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub context: String,
    pub body: Expr,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "context {}\ninv {}:\n  {}", self.context, self.name, self.body)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn get(&self, name: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.name == name)
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Constraint file text that parses back to an equal set.
    pub fn to_ocl(&self) -> String {
        self.constraints.iter().map(|c| format!("{c}\n")).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    Str(String),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> TopologyError {
    TopologyError::Ocl { line, column, message: message.into() }
}

const SYMBOLS: [&str; 13] = ["::", "<>", "<=", ">=", "(", ")", ".", ",", ":", "=", "<", ">", "-"];

fn lex(text: &str) -> Result<Vec<Token>, TopologyError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens: Vec<Token> = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        let after_scope = matches!(tokens.last(), Some(Token { tok: Tok::Sym("::"), .. }));
        if after_scope && (c.is_alphanumeric() || c == '_') {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '-') {
                advance(&mut i, &mut line, &mut col, 1);
            }
            tokens.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: tl, column: tc });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                advance(&mut i, &mut line, &mut col, 1);
            }
            tokens.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: tl, column: tc });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let mut real = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(&mut i, &mut line, &mut col, 1);
            }
            if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                real = true;
                advance(&mut i, &mut line, &mut col, 1);
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(&mut i, &mut line, &mut col, 1);
                }
            }
            if matches!(chars.get(i), Some('e' | 'E')) {
                let sign = usize::from(matches!(chars.get(i + 1), Some('+' | '-')));
                if chars.get(i + 1 + sign).is_some_and(|d| d.is_ascii_digit()) {
                    real = true;
                    advance(&mut i, &mut line, &mut col, 1 + sign);
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        advance(&mut i, &mut line, &mut col, 1);
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if real {
                Tok::Real(text.parse().map_err(|_| syntax(tl, tc, format!("bad number `{text}`")))?)
            } else {
                Tok::Int(text.parse().map_err(|_| syntax(tl, tc, format!("integer `{text}` out of range")))?)
            };
            tokens.push(Token { tok, line: tl, column: tc });
            continue;
        }
        if c == '\'' {
            advance(&mut i, &mut line, &mut col, 1);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(syntax(tl, tc, "unterminated string")),
                    Some('\'') => {
                        advance(&mut i, &mut line, &mut col, 1);
                        break;
                    }
                    Some('\\') => {
                        let next = *chars.get(i + 1).ok_or_else(|| syntax(tl, tc, "unterminated string"))?;
                        s.push(match next {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        advance(&mut i, &mut line, &mut col, 2);
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(&mut i, &mut line, &mut col, 1);
                    }
                }
            }
            tokens.push(Token { tok: Tok::Str(s), line: tl, column: tc });
            continue;
        }
        let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                advance(&mut i, &mut line, &mut col, sym.len());
                tokens.push(Token { tok: Tok::Sym(sym), line: tl, column: tc });
            }
            None => return Err(syntax(tl, tc, format!("unexpected character `{c}`"))),
        }
    }
    Ok(tokens)
}

const RESERVED: [&str; 9] = ["context", "inv", "implies", "and", "or", "not", "let", "in", "xor"];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn fail(&self, message: impl Into<String>) -> TopologyError {
        let (line, column) = self.tokens.get(self.pos).map(|t| (t.line, t.column)).unwrap_or(self.end);
        syntax(line, column, message)
    }

    fn found(&self) -> String {
        match self.peek() {
            None => "end of input".into(),
            Some(Tok::Ident(s)) => format!("`{s}`"),
            Some(Tok::Int(i)) => format!("`{i}`"),
            Some(Tok::Real(r)) => format!("`{r}`"),
            Some(Tok::Str(s)) => format!("'{s}'"),
            Some(Tok::Sym(s)) => format!("`{s}`"),
        }
    }

    fn is_word(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == word)
    }

    fn is_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym)
    }

    fn expect_word(&mut self, word: &str) -> Result<(), TopologyError> {
        if self.is_word(word) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.fail(format!("expected `{word}`, found {}", self.found())))
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), TopologyError> {
        if self.is_sym(sym) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.fail(format!("expected `{sym}`, found {}", self.found())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, TopologyError> {
        match self.peek() {
            Some(Tok::Ident(w)) if !RESERVED.contains(&w.as_str()) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => Err(self.fail(format!("expected {what}, found {}", self.found()))),
        }
    }

    fn constraints(&mut self) -> Result<ConstraintSet, TopologyError> {
        let mut set = ConstraintSet::default();
        while self.peek().is_some() {
            self.expect_word("context")?;
            let context = self.ident("a class name")?;
            if !self.is_word("inv") {
                return Err(self.fail(format!("expected `inv`, found {}", self.found())));
            }
            while self.is_word("inv") {
                self.pos += 1;
                let name = self.ident("an invariant name")?;
                self.expect_sym(":")?;
                let body = self.expr()?;
                if set.get(&name).is_some() {
                    return Err(TopologyError::Constraint { constraint: name, message: "defined twice".into() });
                }
                set.constraints.push(Constraint { name, context: context.clone(), body });
            }
            if self.peek().is_some() && !self.is_word("context") {
                return Err(self.fail(format!("unexpected {}", self.found())));
            }
        }
        Ok(set)
    }

    fn expr(&mut self) -> Result<Expr, TopologyError> {
        let mut left = self.or()?;
        while self.is_word("implies") {
            self.pos += 1;
            left = Expr::binary(BinOp::Implies, left, self.or()?);
        }
        Ok(left)
    }

    fn or(&mut self) -> Result<Expr, TopologyError> {
        let mut left = self.and()?;
        while self.is_word("or") {
            self.pos += 1;
            left = Expr::binary(BinOp::Or, left, self.and()?);
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<Expr, TopologyError> {
        let mut left = self.not()?;
        while self.is_word("and") {
            self.pos += 1;
            left = Expr::binary(BinOp::And, left, self.not()?);
        }
        Ok(left)
    }

    fn not(&mut self) -> Result<Expr, TopologyError> {
        if self.is_word("not") {
            self.pos += 1;
            return Ok(Expr::Not { operand: Box::new(self.not()?) });
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, TopologyError> {
        let left = self.unary()?;
        let op = match self.peek() {
            Some(Tok::Sym("=")) => BinOp::Eq,
            Some(Tok::Sym("<>")) => BinOp::Ne,
            Some(Tok::Sym("<")) => BinOp::Lt,
            Some(Tok::Sym("<=")) => BinOp::Le,
            Some(Tok::Sym(">")) => BinOp::Gt,
            Some(Tok::Sym(">=")) => BinOp::Ge,
            _ => return Ok(left),
        };
        self.pos += 1;
        let right = self.unary()?;
        if let Some(Tok::Sym(s)) = self.peek() {
            if ["=", "<>", "<", "<=", ">", ">="].contains(s) {
                return Err(self.fail("comparisons cannot be chained; add parentheses"));
            }
        }
        Ok(Expr::binary(op, left, right))
    }

    fn unary(&mut self) -> Result<Expr, TopologyError> {
        if self.is_sym("-") {
            self.pos += 1;
            return Ok(match self.unary()? {
                Expr::Int { value } => Expr::Int { value: -value },
                Expr::Real { value } => Expr::Real { value: -value },
                other => Expr::Neg { operand: Box::new(other) },
            });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, TopologyError> {
        let mut e = self.primary()?;
        while self.is_sym(".") {
            self.pos += 1;
            let name = self.ident("an attribute or operation name")?;
            if self.is_sym("(") {
                self.pos += 1;
                let argument = if self.is_sym(")") { None } else { Some(self.ident("a type name")?) };
                self.expect_sym(")")?;
                e = Expr::Call { target: Box::new(e), operation: name, argument };
            } else {
                e = Expr::Nav { target: Box::new(e), attribute: name };
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, TopologyError> {
        let tok = self.peek().cloned();
        match tok {
            Some(Tok::Int(value)) => {
                self.pos += 1;
                Ok(Expr::Int { value })
            }
            Some(Tok::Real(value)) => {
                self.pos += 1;
                Ok(Expr::Real { value })
            }
            Some(Tok::Str(value)) => {
                self.pos += 1;
                Ok(Expr::Str { value })
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            Some(Tok::Ident(w)) if w == "true" || w == "false" => {
                self.pos += 1;
                Ok(Expr::Bool { value: w == "true" })
            }
            Some(Tok::Ident(w)) if w == "let" => {
                self.pos += 1;
                let name = self.ident("a variable name")?;
                let declared = if self.is_sym(":") {
                    self.pos += 1;
                    Some(self.ident("a type name")?)
                } else {
                    None
                };
                self.expect_sym("=")?;
                let value = self.expr()?;
                self.expect_word("in")?;
                let body = self.expr()?;
                Ok(Expr::Let { name, declared, value: Box::new(value), body: Box::new(body) })
            }
            Some(Tok::Ident(_)) => {
                let name = self.ident("an expression")?;
                if self.is_sym("::") {
                    self.pos += 1;
                    let literal = match self.peek() {
                        Some(Tok::Ident(l)) => l.clone(),
                        _ => return Err(self.fail(format!("expected an enum literal, found {}", self.found()))),
                    };
                    self.pos += 1;
                    return Ok(Expr::EnumLit { enumeration: name, literal });
                }
                Ok(Expr::Var { name })
            }
            _ => Err(self.fail(format!("expected an expression, found {}", self.found()))),
        }
    }
}

fn end_position(text: &str) -> (usize, usize) {
    let line = text.lines().count().max(1);
    let column = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
    (line, column)
}

/// Parses a constraint file. Names are checked against a metamodel
/// separately by [`typecheck`].
pub fn parse_constraints(text: &str) -> Result<ConstraintSet, TopologyError> {
    let mut p = Parser { tokens: lex(text)?, pos: 0, end: end_position(text) };
    p.constraints()
}

/// Parses a single expression.
pub fn parse_expr(text: &str) -> Result<Expr, TopologyError> {
    let mut p = Parser { tokens: lex(text)?, pos: 0, end: end_position(text) };
    let e = p.expr()?;
    if p.peek().is_some() {
        return Err(p.fail(format!("unexpected {}", p.found())));
    }
    Ok(e)
}
