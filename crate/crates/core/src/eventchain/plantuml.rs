//! Activity-diagram subset: `start`, `stop`/`end`, `:label;` actions (optionally
//! `#color`-prefixed and spanning lines), `if (c) then (g) ... else (g) ... endif`,
//! `note left|right: key=value` and `note left|right ... end note` blocks,
//! and `'` comments. Anything else is rejected.

use super::{ActivityGraph, Edge, EventChainError, Node, NodeKind, Notes};

/// Returns the text from the first `@startuml` through the following
/// `@enduml`, ignoring fences and prose around it.
pub fn extract_uml_block(text: &str) -> Option<&str> {
    let start = text.find("@startuml")?;
    let end = text[start..].find("@enduml")? + start + "@enduml".len();
    Some(&text[start..end])
}

struct Frame {
    decision: usize,
    else_guard: String,
    ends: Vec<(usize, Option<String>)>,
    seen_else: bool,
    line: usize,
}

#[derive(Default)]
struct Builder {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    frontier: Vec<(usize, Option<String>)>,
    stack: Vec<Frame>,
    last_action: Option<usize>,
    else_guards: Vec<(usize, String)>,
}

impl Builder {
    fn add(&mut self, kind: NodeKind, label: String) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(Node { id: format!("n{idx}"), kind, label, event: None, notes: None });
        for (from, guard) in self.frontier.drain(..) {
            self.edges.push(Edge { from: format!("n{from}"), to: format!("n{idx}"), guard });
        }
        if kind != NodeKind::Stop {
            self.frontier.push((idx, None));
        }
        self.last_action = (kind == NodeKind::Action).then_some(idx);
        idx
    }
}

fn err(line: usize, message: impl Into<String>) -> EventChainError {
    EventChainError::Parse { line, message: message.into() }
}

/// Splits `(inner) rest` into `inner` and `rest`, honouring nested parens.
fn paren_group(text: &str, line: usize) -> Result<(&str, &str), EventChainError> {
    let text = text.trim_start();
    if !text.starts_with('(') {
        return Err(err(line, format!("expected `(` in `{text}`")));
    }
    let mut depth = 0usize;
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Ok((text[1..i].trim(), text[i + 1..].trim()));
                }
            }
            _ => {}
        }
    }
    Err(err(line, "unbalanced parenthesis"))
}

fn keyword<'a>(line: &'a str, word: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(word)?;
    (rest.is_empty() || rest.starts_with(|c: char| c.is_whitespace() || c == '(' || c == ':')).then_some(rest)
}

fn apply_note(notes: &mut Notes, content: &str, line: usize) -> Result<(), EventChainError> {
    let content = content.trim();
    if content.is_empty() {
        return Ok(());
    }
    let split = content.find('=').or_else(|| content.find(':'));
    let Some(at) = split else {
        return Err(err(line, format!("note line `{content}` is not key=value")));
    };
    let key = content[..at].trim().to_ascii_lowercase();
    let value = content[at + 1..].trim().to_owned();
    let slot = match key.as_str() {
        "input" => &mut notes.input,
        "input_format" => &mut notes.input_format,
        "output" => &mut notes.output,
        "output_format" => &mut notes.output_format,
        other => return Err(err(line, format!("unknown note key `{other}`"))),
    };
    if slot.is_some() {
        return Err(err(line, format!("note key `{key}` given twice")));
    }
    *slot = Some(value);
    Ok(())
}

pub fn parse_activity_diagram(text: &str) -> Result<ActivityGraph, EventChainError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut b = Builder::default();
    let mut in_block = false;
    let mut closed = false;
    while let Some((no, line)) = lines.next() {
        if !in_block {
            if line.starts_with("@startuml") {
                in_block = true;
            }
            continue;
        }
        if line.is_empty() || line.starts_with('\'') {
            continue;
        }
        if line.starts_with("@enduml") {
            closed = true;
            break;
        }
        let body = if line.starts_with('#') { line.find(':').map(|i| &line[i..]).unwrap_or(line) } else { line };
        if let Some(rest) = body.strip_prefix(':') {
            let mut label = rest.to_owned();
            while !label.trim_end().ends_with(';') {
                match lines.next() {
                    Some((_, more)) if !more.starts_with("@enduml") => {
                        label.push(' ');
                        label.push_str(more);
                    }
                    _ => return Err(err(no, "action is missing its closing `;`")),
                }
            }
            let label = label.trim_end().trim_end_matches(';').trim().to_owned();
            b.add(NodeKind::Action, label);
        } else if line == "start" {
            b.frontier.clear();
            b.add(NodeKind::Start, String::new());
        } else if line == "stop" || line == "end" {
            b.add(NodeKind::Stop, String::new());
        } else if line == "endif" || line == "end if" {
            let mut frame = b.stack.pop().ok_or_else(|| err(no, "`endif` without `if`"))?;
            frame.ends.append(&mut b.frontier);
            if !frame.seen_else {
                frame.ends.push((frame.decision, Some(frame.else_guard.clone())));
            }
            b.else_guards.push((frame.decision, frame.else_guard));
            if !frame.ends.is_empty() {
                b.frontier = frame.ends;
                b.add(NodeKind::Merge, String::new());
            }
        } else if let Some(rest) = keyword(line, "else") {
            let frame = b.stack.last_mut().ok_or_else(|| err(no, "`else` without `if`"))?;
            if frame.seen_else {
                return Err(err(no, "second `else` in one `if`"));
            }
            let guard = if rest.trim().is_empty() {
                frame.else_guard.clone()
            } else {
                let (g, tail) = paren_group(rest, no)?;
                if !tail.is_empty() {
                    return Err(err(no, format!("unexpected `{tail}` after else guard")));
                }
                g.to_owned()
            };
            frame.seen_else = true;
            frame.else_guard = guard.clone();
            let decision = frame.decision;
            frame.ends.append(&mut b.frontier);
            b.frontier = vec![(decision, Some(guard))];
        } else if let Some(rest) = keyword(line, "if") {
            let (cond, tail) = paren_group(rest, no)?;
            let tail = keyword(tail, "then").ok_or_else(|| err(no, "`if` without `then`"))?;
            let then_guard = if tail.trim().is_empty() {
                cond.to_owned()
            } else {
                let (g, extra) = paren_group(tail, no)?;
                if !extra.is_empty() {
                    return Err(err(no, format!("unexpected `{extra}` after then guard")));
                }
                g.to_owned()
            };
            let decision = b.add(NodeKind::Decision, cond.to_owned());
            b.stack.push(Frame { decision, else_guard: "else".into(), ends: Vec::new(), seen_else: false, line: no });
            b.frontier = vec![(decision, Some(then_guard))];
        } else if let Some(rest) = keyword(line, "note") {
            let target = b.last_action.ok_or_else(|| err(no, "note must directly follow an action"))?;
            let rest = rest.trim_start();
            let rest = keyword(rest, "right")
                .or_else(|| keyword(rest, "left"))
                .ok_or_else(|| err(no, "note position must be `left` or `right`"))?;
            let mut notes = b.nodes[target].notes.take().unwrap_or_default();
            if let Some(content) = rest.trim_start().strip_prefix(':') {
                apply_note(&mut notes, content, no)?;
            } else if rest.trim().is_empty() {
                loop {
                    match lines.next() {
                        Some((_, "end note" | "endnote")) => break,
                        Some((n, l)) if !l.starts_with("@enduml") => apply_note(&mut notes, l, n)?,
                        _ => return Err(err(no, "note block is missing `end note`")),
                    }
                }
            } else {
                return Err(err(no, format!("unexpected `{}` in note", rest.trim())));
            }
            b.nodes[target].notes = Some(notes);
            b.last_action = Some(target);
        } else {
            return Err(err(no, format!("unsupported directive `{line}`")));
        }
    }
    if !in_block {
        return Err(err(1, "no @startuml block"));
    }
    if !closed {
        return Err(err(text.lines().count().max(1), "missing @enduml"));
    }
    if let Some(frame) = b.stack.pop() {
        return Err(err(frame.line, "`if` without matching `endif`"));
    }
    // Canonical edge order: by source node, then-branch before else-branch.
    let mut edges = b.edges;
    let rank = |e: &Edge| {
        let from: usize = e.from[1..].parse().expect("generated id");
        let is_else = b.else_guards.iter().any(|(d, g)| *d == from && e.guard.as_deref() == Some(g.as_str()));
        (from, is_else)
    };
    edges.sort_by_key(rank);
    let graph = ActivityGraph { nodes: b.nodes, edges };
    graph.validate()?;
    Ok(graph)
}
