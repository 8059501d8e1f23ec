//! Model-assisted instance generation, constraint generation and instance
//! correction. Each accepts one retry with the rejection appended.

use crate::eventchain::extract_uml_block;
use crate::gateway::{render_prompt, Gateway, TemplateId};

use super::diagram::{export_class_diagram, import_class_diagram};
use super::instance::{conform, InstanceModel};
use super::metamodel::Metamodel;
use super::ocl::{eval_constraints, parse_constraints, typecheck_all, ConstraintSet, OclVerdict, TopologyReport};
use super::TopologyError;

const RETRY_NOTE: &str = "\n\nYour previous answer was rejected:\n";

fn empty_model(mm: &Metamodel) -> InstanceModel {
    InstanceModel { conforms_to: mm.name.clone(), objects: Vec::new() }
}

fn accept_instance(raw: &str, mm: &Metamodel) -> Result<InstanceModel, String> {
    let block = extract_uml_block(raw).ok_or("no @startuml block in the answer")?;
    let mut model = import_class_diagram(block).map_err(|e| e.to_string())?;
    if model.conforms_to.is_empty() {
        model.conforms_to = mm.name.clone();
    }
    let report = conform(&model, mm);
    if !report.is_conformant() {
        return Err(format!("the model does not conform to the metamodel:\n{report}"));
    }
    Ok(model)
}

fn constraint_text(raw: &str) -> &str {
    let start = raw
        .match_indices("context")
        .map(|(i, _)| i)
        .find(|&i| i == 0 || raw[..i].ends_with(['\n', ' ', '\t']))
        .unwrap_or(0);
    let text = &raw[start..];
    text.find("```").map_or(text, |end| &text[..end])
}

fn accept_constraints(raw: &str, mm: &Metamodel) -> Result<ConstraintSet, String> {
    let set = parse_constraints(constraint_text(raw)).map_err(|e| e.to_string())?;
    if set.is_empty() {
        return Err("no `context ... inv ...` constraints in the answer".into());
    }
    typecheck_all(&set, mm).map_err(|e| e.to_string())?;
    Ok(set)
}

fn with_retry<T>(
    prompt: &str,
    gateway: &Gateway,
    accept: impl Fn(&str) -> Result<T, String>,
) -> Result<T, TopologyError> {
    let (mut raws, mut errors) = (Vec::new(), Vec::new());
    let mut current = prompt.to_owned();
    for _ in 0..2 {
        let raw = gateway.complete(&current)?;
        match accept(&raw) {
            Ok(value) => return Ok(value),
            Err(e) => {
                current = format!("{prompt}{RETRY_NOTE}{e}");
                raws.push(raw);
                errors.push(e);
            }
        }
    }
    Err(TopologyError::Generation { raw: raws, errors })
}

pub fn instance_prompt(requirements: &str, mm: &Metamodel, current: Option<&InstanceModel>) -> Result<String, TopologyError> {
    let current = export_class_diagram(current.unwrap_or(&empty_model(mm)));
    Ok(render_prompt(
        TemplateId::PC3,
        &[("current system", current.as_str()), ("metamodel", mm.describe().as_str()), ("user input", requirements)],
    )?)
}

/// Creates or updates an instance model from requirements. Empty
/// requirements keep the current model.
pub fn generate_instance(
    requirements: &str,
    mm: &Metamodel,
    current: Option<&InstanceModel>,
    gateway: &Gateway,
) -> Result<InstanceModel, TopologyError> {
    if requirements.trim().is_empty() {
        return current.cloned().ok_or(TopologyError::EmptyRequirements);
    }
    with_retry(&instance_prompt(requirements, mm, current)?, gateway, |raw| accept_instance(raw, mm))
}

pub fn constraints_prompt(guidelines: &str, mm: &Metamodel) -> Result<String, TopologyError> {
    Ok(render_prompt(TemplateId::PC4, &[("metamodel", mm.describe().as_str()), ("security guidelines", guidelines)])?)
}

/// Turns security guidelines into type-checked constraints. Empty
/// guidelines give an empty set.
pub fn generate_constraints(guidelines: &str, mm: &Metamodel, gateway: &Gateway) -> Result<ConstraintSet, TopologyError> {
    if guidelines.trim().is_empty() {
        return Ok(ConstraintSet::default());
    }
    with_retry(&constraints_prompt(guidelines, mm)?, gateway, |raw| accept_constraints(raw, mm))
}

pub fn correction_prompt(current: &InstanceModel, report: &TopologyReport, mm: &Metamodel) -> Result<String, TopologyError> {
    Ok(render_prompt(
        TemplateId::PC4b,
        &[
            ("metamodel", mm.describe().as_str()),
            ("current system", export_class_diagram(current).as_str()),
            ("OCL pass/fail list", report.pass_fail_list().as_str()),
        ],
    )?)
}

/// A corrected model and its re-evaluation, whatever the verdict.
#[derive(Debug, Clone)]
pub struct Correction {
    pub model: InstanceModel,
    pub report: TopologyReport,
}

pub fn correct_instance(
    current: &InstanceModel,
    report: &TopologyReport,
    mm: &Metamodel,
    constraints: &ConstraintSet,
    gateway: &Gateway,
) -> Result<Correction, TopologyError> {
    if report.count(OclVerdict::Fail) == 0 {
        return Err(TopologyError::NoFailures);
    }
    let model = with_retry(&correction_prompt(current, report, mm)?, gateway, |raw| accept_instance(raw, mm))?;
    let report = eval_constraints(&model, mm, constraints)?;
    Ok(Correction { model, report })
}
