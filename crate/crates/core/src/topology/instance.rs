use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::metamodel::{Kind, Metamodel};
use super::TopologyError;

/// A scalar attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Real(r) => write!(f, "{r:?}"),
            Literal::Str(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Object {
    pub id: String,
    pub class: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, Literal>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub references: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceModel {
    #[serde(default)]
    pub conforms_to: String,
    pub objects: Vec<Object>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_alphanumeric() || c == '_')
}

pub fn parse_instance(text: &str) -> Result<InstanceModel, TopologyError> {
    let model: InstanceModel = serde_json::from_str(text).map_err(|e| TopologyError::Instance(e.to_string()))?;
    model.check_references()?;
    Ok(model)
}

impl InstanceModel {
    /// Ids are unique and well-formed and every reference names an object.
    pub fn check_references(&self) -> Result<(), TopologyError> {
        let mut ids = HashSet::new();
        for o in &self.objects {
            if !valid_id(&o.id) {
                return Err(TopologyError::Instance(format!("invalid object id `{}`", o.id)));
            }
            if !ids.insert(o.id.as_str()) {
                return Err(TopologyError::Instance(format!("duplicate object id `{}`", o.id)));
            }
        }
        for o in &self.objects {
            for (name, target) in &o.references {
                if !ids.contains(target.as_str()) {
                    return Err(TopologyError::Instance(format!("`{}.{name}` references unknown object `{target}`", o.id)));
                }
            }
        }
        Ok(())
    }

    pub fn object(&self, id: &str) -> Option<&Object> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_mut(&mut self, id: &str) -> Option<&mut Object> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    MetamodelMismatch,
    UnknownClass,
    AbstractClass,
    UnknownAttribute,
    MissingAttribute,
    KindMismatch,
    DanglingReference,
    IllTypedReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceIssue {
    pub object: String,
    pub kind: IssueKind,
    pub detail: String,
}

impl fmt::Display for ConformanceIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.object, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub issues: Vec<ConformanceIssue>,
}

impl ConformanceReport {
    pub fn is_conformant(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

fn literal_fits(mm: &Metamodel, kind: &Kind, value: &Literal) -> Result<(), String> {
    match (kind, value) {
        (Kind::String, Literal::Str(_)) | (Kind::Bool, Literal::Bool(_)) | (Kind::Int, Literal::Int(_)) => Ok(()),
        (Kind::Real, Literal::Real(_) | Literal::Int(_)) => Ok(()),
        (Kind::Enum(e), Literal::Str(s)) => {
            let def = mm.enum_def(e).expect("validated metamodel");
            if def.literals.iter().any(|l| l == s) {
                Ok(())
            } else {
                Err(format!("`{s}` is not a literal of {e} ({})", def.literals.join(", ")))
            }
        }
        (kind, value) => Err(format!("expected {kind}, found `{value}`")),
    }
}

/// Checks every object against the metamodel. All declared attributes and
/// references are required.
pub fn conform(instance: &InstanceModel, mm: &Metamodel) -> ConformanceReport {
    let mut issues = Vec::new();
    let mut push = |object: &str, kind, detail: String| issues.push(ConformanceIssue { object: object.to_owned(), kind, detail });
    if !instance.conforms_to.is_empty() && instance.conforms_to != mm.name {
        push("", IssueKind::MetamodelMismatch, format!("model targets `{}`, not `{}`", instance.conforms_to, mm.name));
    }
    for o in &instance.objects {
        let Some(class) = mm.class(&o.class) else {
            push(&o.id, IssueKind::UnknownClass, format!("unknown class `{}`", o.class));
            continue;
        };
        if class.is_abstract {
            push(&o.id, IssueKind::AbstractClass, format!("class `{}` is abstract", o.class));
        }
        let declared = mm.all_attributes(&o.class);
        for (name, value) in &o.attributes {
            match declared.iter().find(|a| &a.name == name) {
                None => push(&o.id, IssueKind::UnknownAttribute, format!("`{}` has no attribute `{name}`", o.class)),
                Some(a) if matches!(a.kind, Kind::Ref(_)) => {
                    push(&o.id, IssueKind::KindMismatch, format!("`{name}` is a reference, not a value"))
                }
                Some(a) => {
                    if let Err(why) = literal_fits(mm, &a.kind, value) {
                        push(&o.id, IssueKind::KindMismatch, format!("`{name}`: {why}"));
                    }
                }
            }
        }
        for (name, target) in &o.references {
            match declared.iter().find(|a| &a.name == name) {
                None => push(&o.id, IssueKind::UnknownAttribute, format!("`{}` has no reference `{name}`", o.class)),
                Some(a) => match &a.kind {
                    Kind::Ref(wanted) => match instance.object(target) {
                        None => push(&o.id, IssueKind::DanglingReference, format!("`{name}` points to missing `{target}`")),
                        Some(t) if !mm.conforms(&t.class, wanted) => push(
                            &o.id,
                            IssueKind::IllTypedReference,
                            format!("`{name}` must reference a {wanted}, but `{target}` is a {}", t.class),
                        ),
                        Some(_) => {}
                    },
                    kind => push(&o.id, IssueKind::KindMismatch, format!("`{name}` is {kind}, not a reference")),
                },
            }
        }
        for a in declared {
            let present = match a.kind {
                Kind::Ref(_) => o.references.contains_key(&a.name) || o.attributes.contains_key(&a.name),
                _ => o.attributes.contains_key(&a.name) || o.references.contains_key(&a.name),
            };
            if !present {
                push(&o.id, IssueKind::MissingAttribute, format!("missing `{}` ({})", a.name, a.kind));
            }
        }
    }
    ConformanceReport { issues }
}
