use std::path::{Path, PathBuf};
use std::time::Instant;

use super::record::{attempt, Recorder, RunRecord, RunVerdict};
use super::{read_text, PipelineConfig, PipelineError};
use crate::gateway::Gateway;
use crate::topology::{
    conform, correct_instance, default_metamodel, eval_constraints, export_class_diagram, generate_constraints,
    generate_instance, import_class_diagram, parse_constraints, parse_instance, parse_metamodel, ConstraintSet,
    InstanceModel, Metamodel, TopologyError, TopologyReport,
};

/// Where the instance model comes from: a stored model, requirements to
/// generate one from, or both (requirements update the stored model).
#[derive(Debug, Clone, Default)]
pub struct ModelSource {
    pub model: Option<PathBuf>,
    pub requirements: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum ConstraintSource {
    Constraints(PathBuf),
    Guidelines(PathBuf),
}

#[derive(Debug, Clone)]
pub struct TopologyRun {
    pub record: RunRecord,
    pub model: InstanceModel,
    pub constraints: ConstraintSet,
    pub report: TopologyReport,
}

/// Reads a model stored as JSON or as a PlantUML object diagram.
pub fn load_model(path: &Path, text: &str) -> Result<InstanceModel, TopologyError> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        parse_instance(text)
    } else {
        import_class_diagram(text)
    }
}

fn check_exists(p: &Path) -> Result<(), PipelineError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(PipelineError::Config(format!("{} does not exist", p.display())))
    }
}

/// Load or generate the instance model, check conformance, load or generate
/// constraints and evaluate them, then run up to `max_iterations`
/// corrections when `auto_correct` is set. Every model revision is also
/// written as a PlantUML diagram.
pub fn run_topology_pipeline(
    config: &PipelineConfig,
    source: &ModelSource,
    constraints: &ConstraintSource,
    gateway: &Gateway,
) -> Result<TopologyRun, PipelineError> {
    config.validate()?;
    if source.model.is_none() && source.requirements.is_none() {
        return Err(PipelineError::Config("give a model, requirements or both".into()));
    }
    let constraint_path = match constraints {
        ConstraintSource::Constraints(p) | ConstraintSource::Guidelines(p) => p,
    };
    for p in source.model.iter().chain(&source.requirements).chain([constraint_path]).chain(&config.metamodel) {
        check_exists(p)?;
    }
    let mut rec = Recorder::new(&config.out_dir, "topology");
    let rec = &mut rec;

    let t = Instant::now();
    let mm: Metamodel = match &config.metamodel {
        Some(p) => {
            let text = attempt(rec, "inputs", read_text(p))?;
            let mm = attempt(rec, "inputs", parse_metamodel(&text))?;
            rec.input(p, "metamodel.json", &text)?;
            mm
        }
        None => {
            let mm = default_metamodel();
            rec.input(Path::new("<default>"), "metamodel.json", &mm.to_json())?;
            mm
        }
    };
    let mut current = None;
    let mut model_input = None;
    if let Some(p) = &source.model {
        let text = attempt(rec, "inputs", read_text(p))?;
        let json = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let name = if json { "input-model.json" } else { "input-model.puml" };
        current = Some(attempt(rec, "inputs", load_model(p, &text))?);
        model_input = Some(rec.input(p, name, &text)?);
    }
    let requirements = match &source.requirements {
        Some(p) => {
            let text = attempt(rec, "inputs", read_text(p))?;
            rec.input(p, "requirements.txt", &text)?;
            Some(text)
        }
        None => None,
    };
    let constraint_text = attempt(rec, "inputs", read_text(constraint_path))?;
    let constraint_input = match constraints {
        ConstraintSource::Constraints(_) => "constraints-input.ocl",
        ConstraintSource::Guidelines(_) => "guidelines.txt",
    };
    rec.input(constraint_path, constraint_input, &constraint_text)?;
    rec.stage("inputs", t, &[], &[]);

    let t = Instant::now();
    let mut stage_inputs: Vec<&str> = vec!["metamodel.json"];
    stage_inputs.extend(model_input.as_deref());
    let model = match &requirements {
        Some(req) => {
            stage_inputs.push("requirements.txt");
            attempt(rec, "instance", generate_instance(req, &mm, current.as_ref(), gateway))?
        }
        None => current.clone().expect("model or requirements present"),
    };
    rec.write("model.json", &model.to_json())?;
    rec.write("model.puml", &export_class_diagram(&model))?;
    rec.stage("instance", t, &stage_inputs, &["model.json", "model.puml"]);

    let t = Instant::now();
    let conformance = conform(&model, &mm);
    rec.write("conformance.txt", &format!("{conformance}\n"))?;
    rec.stage("conformance", t, &["model.json", "metamodel.json"], &["conformance.txt"]);
    if !conformance.is_conformant() {
        return Err(rec.fail("conformance", TopologyError::NotConformant(conformance).into()));
    }

    let t = Instant::now();
    let set = match constraints {
        ConstraintSource::Constraints(_) => {
            let set = attempt(rec, "constraints", parse_constraints(&constraint_text))?;
            attempt(rec, "constraints", crate::topology::typecheck_all(&set, &mm))?;
            set
        }
        ConstraintSource::Guidelines(_) => attempt(rec, "constraints", generate_constraints(&constraint_text, &mm, gateway))?,
    };
    rec.write("constraints.ocl", &set.to_ocl())?;
    rec.stage("constraints", t, &[constraint_input, "metamodel.json"], &["constraints.ocl"]);

    let t = Instant::now();
    let mut report = attempt(rec, "evaluation", eval_constraints(&model, &mm, &set))?;
    rec.write("topology-report.json", &report.to_json())?;
    rec.write("pass-fail.txt", &report.pass_fail_list())?;
    rec.stage("evaluation", t, &["model.json", "constraints.ocl"], &["topology-report.json", "pass-fail.txt"]);

    let mut model = model;
    let (mut model_name, mut report_name) = ("model.json".to_owned(), "topology-report.json".to_owned());
    let mut iterations = 0;
    while config.auto_correct && !report.passed() && iterations < config.max_iterations {
        iterations += 1;
        let stage = format!("correction-{iterations}");
        let t = Instant::now();
        let fixed = attempt(rec, &stage, correct_instance(&model, &report, &mm, &set, gateway))?;
        model = fixed.model;
        report = fixed.report;
        let mj = rec.write(&format!("model-{iterations}.json"), &model.to_json())?;
        let mp = rec.write(&format!("model-{iterations}.puml"), &export_class_diagram(&model))?;
        let rj = rec.write(&format!("topology-report-{iterations}.json"), &report.to_json())?;
        let pf = rec.write(&format!("pass-fail-{iterations}.txt"), &report.pass_fail_list())?;
        rec.stage(&stage, t, &[&model_name, &report_name, "constraints.ocl", "metamodel.json"], &[&mj, &mp, &rj, &pf]);
        model_name = mj;
        report_name = rj;
    }

    let t = Instant::now();
    rec.write("report.json", &report.to_json())?;
    rec.write("report.txt", &report.pass_fail_list())?;
    rec.stage("report", t, &[&report_name], &["report.json", "report.txt"]);
    let verdict = if report.passed() { RunVerdict::Pass } else { RunVerdict::Violated };
    rec.finish(verdict, iterations)?;
    Ok(TopologyRun { record: rec.record.clone(), model, constraints: set, report })
}
