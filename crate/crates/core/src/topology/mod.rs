//! System topology: metamodel, conformant instance models, the PlantUML
//! object-diagram form and OCL-subset security constraints.
//!
//! `oclIsTypeOf` is exact-type: a `VSSMessage` is not `oclIsTypeOf(Message)`.
//! A constraint on `Message` still evaluates on every `VSSMessage`, since
//! context dispatch follows inheritance.

mod diagram;
mod instance;
mod llm;
mod metamodel;
pub mod ocl;

use thiserror::Error;

use crate::gateway::GatewayError;

pub use diagram::{export_class_diagram, import_class_diagram};
pub use instance::{conform, parse_instance, ConformanceIssue, ConformanceReport, InstanceModel, IssueKind, Literal, Object};
pub use llm::{
    constraints_prompt, correct_instance, correction_prompt, generate_constraints, generate_instance, instance_prompt,
    Correction,
};
pub use metamodel::{default_metamodel, parse_metamodel, Attribute, Class, EnumDef, Kind, Metamodel, DEFAULT_METAMODEL};
pub use ocl::{
    eval_constraints, parse_constraints, parse_expr, typecheck, typecheck_all, Constraint, ConstraintSet, Expr,
    OclVerdict, Outcome, TopologyReport,
};

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("metamodel: {0}")]
    Metamodel(String),
    #[error("instance model: {0}")]
    Instance(String),
    #[error("class diagram line {line}: {message}")]
    Diagram { line: usize, message: String },
    #[error("constraint syntax at {line}:{column}: {message}")]
    Ocl { line: usize, column: usize, message: String },
    #[error("constraint `{constraint}`: {message}")]
    Constraint { constraint: String, message: String },
    #[error("instance model does not conform to the metamodel:\n{0}")]
    NotConformant(ConformanceReport),
    #[error("the constraint report has no failures to correct")]
    NoFailures,
    #[error("requirements are empty and there is no current model to keep")]
    EmptyRequirements,
    #[error("generated output rejected after retry: {}", errors.join(" | "))]
    Generation { raw: Vec<String>, errors: Vec<String> },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}
