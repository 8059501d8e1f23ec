use std::collections::BTreeMap;

use super::{Mode, RuleAtom, RuleExpr, RuleSet, RulesError, SafetyRule, TemporalOp};
use crate::names::normalize;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Word(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

const KEYWORDS: [&str; 5] = ["and", "or", "not", "before", "after"];

fn is_keyword(word: &str, kw: &str) -> bool {
    word.eq_ignore_ascii_case(kw)
}

fn err(line: usize, column: usize, message: impl Into<String>) -> RulesError {
    RulesError::Parse { line, column, message: message.into() }
}

fn lex(text: &str, line: usize, first_column: usize, out: &mut Vec<Token>) -> Result<(), RulesError> {
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let column = first_column + text[..i].chars().count();
        match c {
            '(' => out.push(Token { tok: Tok::Open, line, column }),
            ')' => out.push(Token { tok: Tok::Close, line, column }),
            c if c.is_whitespace() => {}
            c if c.is_alphanumeric() || c == '-' || c == '_' || c == '.' => {
                let mut word = String::from(c);
                while let Some(&(_, n)) = chars.peek() {
                    if n.is_alphanumeric() || n == '-' || n == '_' || n == '.' {
                        word.push(n);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Token { tok: Tok::Word(word), line, column });
            }
            other => return Err(err(line, column, format!("unexpected character `{other}`"))),
        }
    }
    Ok(())
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Word(w), .. }) if is_keyword(w, kw))
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|t| (t.line, t.column)).unwrap_or(self.end)
    }

    fn fail(&self, message: impl Into<String>) -> RulesError {
        let (line, column) = self.here();
        err(line, column, message)
    }

    fn expr(&mut self) -> Result<RuleExpr, RulesError> {
        let mut terms = vec![self.term()?];
        while self.peek_keyword("or") {
            self.pos += 1;
            terms.push(self.term()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { RuleExpr::Or(terms) })
    }

    fn term(&mut self) -> Result<RuleExpr, RulesError> {
        let mut factors = vec![self.factor()?];
        while self.peek_keyword("and") {
            self.pos += 1;
            factors.push(self.factor()?);
        }
        Ok(if factors.len() == 1 { factors.pop().unwrap() } else { RuleExpr::And(factors) })
    }

    fn factor(&mut self) -> Result<RuleExpr, RulesError> {
        if self.peek_keyword("not") {
            self.pos += 1;
            return Ok(RuleExpr::Not(Box::new(self.factor()?)));
        }
        if matches!(self.peek(), Some(Token { tok: Tok::Open, .. })) {
            self.pos += 1;
            let inner = self.expr()?;
            match self.peek() {
                Some(Token { tok: Tok::Close, .. }) => {
                    self.pos += 1;
                    return Ok(inner);
                }
                _ => return Err(self.fail("expected `)`")),
            }
        }
        self.atom()
    }

    /// One or more non-keyword words, joined and normalized.
    fn event(&mut self) -> Result<String, RulesError> {
        let mut words = Vec::new();
        while let Some(Token { tok: Tok::Word(w), .. }) = self.peek() {
            if KEYWORDS.iter().any(|k| is_keyword(w, k)) {
                break;
            }
            words.push(w.clone());
            self.pos += 1;
        }
        if words.is_empty() {
            return Err(match self.peek() {
                Some(Token { tok: Tok::Word(w), .. }) => self.fail(format!("expected an event, found `{w}`")),
                Some(Token { tok: Tok::Close, .. }) => self.fail("expected an event, found `)`"),
                Some(Token { tok: Tok::Open, .. }) => self.fail("expected an event, found `(`"),
                None => self.fail("expected an event, found end of rule"),
            });
        }
        let event = normalize(&words.join(" "));
        if event.is_empty() {
            return Err(self.fail("event name has no letters or digits"));
        }
        Ok(event)
    }

    fn atom(&mut self) -> Result<RuleExpr, RulesError> {
        let left = self.event()?;
        let op = if self.peek_keyword("before") {
            TemporalOp::Before
        } else if self.peek_keyword("after") {
            TemporalOp::After
        } else {
            return Err(self.fail(format!("expected `before` or `after` after `{left}`")));
        };
        self.pos += 1;
        let right = self.event()?;
        Ok(RuleExpr::Atom(RuleAtom { left, op, right }))
    }
}

fn parse_expr(tokens: Vec<Token>, end: (usize, usize)) -> Result<RuleExpr, RulesError> {
    let mut p = Parser { tokens, pos: 0, end };
    let expr = p.expr()?;
    match p.peek() {
        None => Ok(expr),
        Some(Token { tok: Tok::Close, .. }) => Err(p.fail("unbalanced `)`")),
        Some(Token { tok: Tok::Word(w), .. }) => Err(p.fail(format!("unexpected `{w}`"))),
        Some(_) => Err(p.fail("unexpected `(`")),
    }
}

struct Pending {
    name: String,
    line: usize,
    tokens: Vec<Token>,
    aliases: BTreeMap<String, Vec<String>>,
    end: (usize, usize),
}

fn finish(p: Pending) -> Result<SafetyRule, RulesError> {
    let mut tokens = p.tokens;
    let mut mode = Mode::Require;
    if let Some(Token { tok: Tok::Word(w), .. }) = tokens.first() {
        if is_keyword(w, "require") || is_keyword(w, "forbid") {
            mode = if is_keyword(w, "forbid") { Mode::Forbid } else { Mode::Require };
            tokens.remove(0);
        }
    }
    if tokens.is_empty() {
        return Err(err(p.line, 1, format!("rule `{}` has no expression", p.name)));
    }
    let expr = parse_expr(tokens, p.end)?;
    Ok(SafetyRule { name: p.name, mode, expr, aliases: p.aliases })
}

fn rule_header(line: &str) -> Option<(&str, &str)> {
    let colon = line.find(':')?;
    let name = line[..colon].trim();
    let valid = !name.is_empty()
        && !line.starts_with(char::is_whitespace)
        && name.chars().all(|c| c.is_alphanumeric() || c == '-' || c == '_');
    valid.then(|| (name, &line[colon + 1..]))
}

/// Parses a rule file: `name: [require|forbid] expr` stanzas whose
/// expression may continue on following lines, `alias <event> = <pattern>, ...`
/// lines that apply to the rule above them, and `#` comments.
pub fn parse_rules(text: &str) -> Result<RuleSet, RulesError> {
    let mut rules: Vec<SafetyRule> = Vec::new();
    let mut current: Option<Pending> = None;
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }
        let trimmed = line.trim_start();
        let indent = line.len() - trimmed.len();
        if let Some(rest) = trimmed.strip_prefix("alias").filter(|r| r.starts_with(char::is_whitespace)) {
            let Some(pending) = current.as_mut() else {
                return Err(err(no, indent + 1, "alias line before any rule"));
            };
            let (event, patterns) =
                rest.split_once('=').ok_or_else(|| err(no, indent + 1, "alias needs `<event> = <pattern>`"))?;
            let event = normalize(event);
            if event.is_empty() {
                return Err(err(no, indent + 1, "alias event is empty"));
            }
            let patterns: Vec<String> = patterns.split(',').map(normalize_pattern).filter(|p| !p.is_empty()).collect();
            if patterns.is_empty() {
                return Err(err(no, indent + 1, format!("alias for `{event}` lists no patterns")));
            }
            pending.aliases.entry(event).or_default().extend(patterns);
            continue;
        }
        if let Some((name, body)) = rule_header(line) {
            if let Some(done) = current.take() {
                rules.push(finish(done)?);
            }
            if rules.iter().any(|r| r.name == name) {
                return Err(RulesError::DuplicateRule(name.to_owned()));
            }
            let body_col = line.len() - body.len() + 1;
            let mut tokens = Vec::new();
            lex(body, no, body_col, &mut tokens)?;
            current = Some(Pending {
                name: name.to_owned(),
                line: no,
                tokens,
                aliases: BTreeMap::new(),
                end: (no, line.chars().count() + 1),
            });
            continue;
        }
        let Some(pending) = current.as_mut() else {
            return Err(err(no, indent + 1, "expected `name: expression`"));
        };
        lex(line, no, 1, &mut pending.tokens)?;
        pending.end = (no, line.chars().count() + 1);
    }
    if let Some(done) = current.take() {
        rules.push(finish(done)?);
    }
    Ok(RuleSet { rules })
}

/// Normalizes each `*`-separated piece of a glob pattern.
fn normalize_pattern(pattern: &str) -> String {
    pattern.split('*').map(normalize).collect::<Vec<_>>().join("*")
}
