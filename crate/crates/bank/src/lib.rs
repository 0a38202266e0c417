//! Problem templates, seeded instantiation, and validation.
//!
//! A template carries a parameterized statement, controlled-phrasing
//! sub-questions and a canonical trace of tool calls whose inputs refer to
//! parameters (`{{A}}`) and to earlier step results
//! (`{{step-01.output.expr}}`). Instantiation samples the parameters, runs
//! the trace through a context store and freezes the outcome.

pub mod bundle;
pub mod checkpoint;
pub mod compare;
pub mod instance;
pub mod placeholder;
pub mod template;
pub mod validate;

pub use bundle::{bundle_load, bundle_load_checked, bundle_save, load_template, BundleError};
pub use checkpoint::{Predicate, Sign};
pub use compare::{inputs_match, numbers_close, values_match};
pub use instance::{
    instance_id, instantiate, instantiate_with, Checkpoint, ConcreteStep, InstanceError,
    ProblemInstance, ReferenceAnswer,
};
pub use template::{Equivalence, ProblemTemplate, Role, TraceStep};
pub use validate::{validate, ValidationReport, VariantOutcome};
