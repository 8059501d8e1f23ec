//! PlantUML object-diagram form of an instance model.
//!
//! ```text
//! @startuml
//! ' conforms-to: automotive-topology
//! object msg1 : Message {
//!   standard = "IEEE-1722"
//!   payloadValue = "0.0"
//! }
//! hpc1 : name = "HPC"
//! msg1 --> hpc1 : source
//! @enduml
//! ```
//!
//! Strings are double-quoted; unquoted values are integers, reals, booleans
//! or `Enum::literal`. An arrow `a --> b : r` sets reference `r` of `a`.

use std::collections::BTreeMap;

use super::instance::{InstanceModel, Literal, Object};
use super::TopologyError;

const CONFORMS_PREFIX: &str = "' conforms-to:";

fn err(line: usize, message: impl Into<String>) -> TopologyError {
    TopologyError::Diagram { line, message: message.into() }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_')
}

fn parse_value(text: &str, line: usize) -> Result<Literal, TopologyError> {
    let t = text.trim();
    if let Some(inner) = t.strip_prefix('"') {
        let inner = inner.strip_suffix('"').ok_or_else(|| err(line, format!("unterminated string `{t}`")))?;
        let mut out = String::new();
        let mut chars = inner.chars();
        while let Some(c) = chars.next() {
            match c {
                '\\' => match chars.next() {
                    Some('n') => out.push('\n'),
                    Some(c @ ('"' | '\\')) => out.push(c),
                    other => return Err(err(line, format!("bad escape `\\{}`", other.unwrap_or(' ')))),
                },
                '"' => return Err(err(line, "unescaped quote inside string")),
                c => out.push(c),
            }
        }
        return Ok(Literal::Str(out));
    }
    match t {
        "true" => return Ok(Literal::Bool(true)),
        "false" => return Ok(Literal::Bool(false)),
        _ => {}
    }
    if let Ok(i) = t.parse::<i64>() {
        return Ok(Literal::Int(i));
    }
    if let Ok(r) = t.parse::<f64>() {
        if r.is_finite() {
            return Ok(Literal::Real(r));
        }
    }
    if let Some((e, lit)) = t.split_once("::") {
        if is_ident(e) && !lit.is_empty() {
            return Ok(Literal::Str(lit.to_owned()));
        }
    }
    Err(err(line, format!("cannot read value `{t}`; quote strings")))
}

fn format_value(value: &Literal) -> String {
    match value {
        Literal::Str(s) => {
            let escaped = s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n");
            format!("\"{escaped}\"")
        }
        other => other.to_string(),
    }
}

fn assignment(text: &str, line: usize) -> Result<(String, Literal), TopologyError> {
    let (name, value) = text.split_once('=').ok_or_else(|| err(line, format!("expected `attr = value`, got `{text}`")))?;
    let name = name.trim();
    if !is_ident(name) {
        return Err(err(line, format!("invalid attribute name `{name}`")));
    }
    Ok((name.to_owned(), parse_value(value, line)?))
}

pub fn import_class_diagram(text: &str) -> Result<InstanceModel, TopologyError> {
    let mut model = InstanceModel::default();
    let mut arrows = Vec::new();
    let mut open: Option<usize> = None;
    let mut in_block = false;
    let mut closed = false;
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = raw.trim();
        if !in_block {
            in_block = line.starts_with("@startuml");
            continue;
        }
        if let Some(name) = line.strip_prefix(CONFORMS_PREFIX) {
            model.conforms_to = name.trim().to_owned();
            continue;
        }
        if line.is_empty() || line.starts_with('\'') {
            continue;
        }
        if line.starts_with("@enduml") {
            closed = true;
            break;
        }
        if let Some(obj) = open {
            if line == "}" {
                open = None;
            } else {
                let (name, value) = assignment(line, no)?;
                if model.objects[obj].attributes.insert(name.clone(), value).is_some() {
                    return Err(err(no, format!("attribute `{name}` set twice")));
                }
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("object ") {
            let (decl, opens) = match rest.trim_end().strip_suffix('{') {
                Some(d) => (d.trim(), true),
                None => (rest.trim(), false),
            };
            let (decl, inline_close) = match decl.strip_suffix('}').map(str::trim_end) {
                Some(d) => (d.strip_suffix('{').map(str::trim_end).unwrap_or(d), true),
                None => (decl, false),
            };
            let (id, class) = decl.split_once(':').ok_or_else(|| err(no, "expected `object id : Class`"))?;
            let (id, class) = (id.trim(), class.trim());
            if !is_ident(id) || !is_ident(class) {
                return Err(err(no, format!("invalid object declaration `{decl}`")));
            }
            if index.contains_key(id) {
                return Err(err(no, format!("duplicate object id `{id}`")));
            }
            index.insert(id.to_owned(), model.objects.len());
            model.objects.push(Object {
                id: id.to_owned(),
                class: class.to_owned(),
                attributes: BTreeMap::new(),
                references: BTreeMap::new(),
            });
            if opens && !inline_close {
                open = Some(model.objects.len() - 1);
            }
            continue;
        }
        let arrow = line.split_once("-->").or_else(|| line.split_once("->"));
        if let Some((src, rest)) = arrow.filter(|(src, _)| is_ident(src.trim())) {
            let (dst, label) = rest.split_once(':').unwrap_or((rest, ""));
            let (src, dst, label) = (src.trim(), dst.trim(), label.trim());
            if !is_ident(dst) || !is_ident(label) {
                return Err(err(no, format!("expected `source --> target : reference`, got `{line}`")));
            }
            arrows.push((no, src.to_owned(), dst.to_owned(), label.to_owned()));
            continue;
        }
        if let Some((id, rest)) = line.split_once(':') {
            let id = id.trim();
            if let Some(&obj) = index.get(id) {
                let (name, value) = assignment(rest, no)?;
                if model.objects[obj].attributes.insert(name.clone(), value).is_some() {
                    return Err(err(no, format!("attribute `{name}` set twice")));
                }
                continue;
            }
            if is_ident(id) {
                return Err(err(no, format!("attribute line for undeclared object `{id}`")));
            }
        }
        return Err(err(no, format!("unsupported line `{line}`")));
    }
    if !in_block {
        return Err(err(1, "no @startuml block"));
    }
    if let Some(obj) = open {
        return Err(err(text.lines().count(), format!("object `{}` block is not closed", model.objects[obj].id)));
    }
    if !closed {
        return Err(err(text.lines().count().max(1), "missing @enduml"));
    }
    for (no, src, dst, label) in arrows {
        let (Some(&s), true) = (index.get(&src), index.contains_key(&dst)) else {
            let missing = if index.contains_key(&src) { dst } else { src };
            return Err(err(no, format!("arrow uses undeclared object `{missing}`")));
        };
        if model.objects[s].references.insert(label.clone(), dst).is_some() {
            return Err(err(no, format!("reference `{src}.{label}` set twice")));
        }
    }
    Ok(model)
}

pub fn export_class_diagram(model: &InstanceModel) -> String {
    let mut out = String::from("@startuml\n");
    if !model.conforms_to.is_empty() {
        out.push_str(&format!("{CONFORMS_PREFIX} {}\n", model.conforms_to));
    }
    for o in &model.objects {
        if o.attributes.is_empty() {
            out.push_str(&format!("object {} : {}\n", o.id, o.class));
            continue;
        }
        out.push_str(&format!("object {} : {} {{\n", o.id, o.class));
        for (name, value) in &o.attributes {
            out.push_str(&format!("  {name} = {}\n", format_value(value)));
        }
        out.push_str("}\n");
    }
    for o in &model.objects {
        for (name, target) in &o.references {
            out.push_str(&format!("{} --> {target} : {name}\n", o.id));
        }
    }
    out.push_str("@enduml\n");
    out
}
