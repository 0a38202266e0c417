//! Template file format.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use stepwise_tools::ToolRegistry;

use crate::checkpoint::Predicate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Equivalence {
    Symbolic,
    #[default]
    Numeric,
    RootSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Deliverable,
    Verification,
    Intermediate,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

fn is_default_tolerance(t: &f64) -> bool {
    *t == DEFAULT_TOLERANCE
}

/// Sampling domain of one parameter: a finite set, an integer range, a
/// stepped grid, or a continuous range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub integer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Derived {
    pub name: String,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceStep {
    pub step_id: String,
    pub tool_id: String,
    /// Input pattern; strings may hold `{{param}}` or
    /// `{{step-NN.output.path}}` placeholders.
    pub input: Value,
    #[serde(default)]
    pub equivalence: Equivalence,
    #[serde(default = "default_tolerance", skip_serializing_if = "is_default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub role: Role,
    /// 1-based index into `sub_questions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_question: Option<usize>,
    /// Dotted path (into `{input, output}`) of the value this step delivers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deliverable: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commutative_group: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alt_tools: Vec<String>,
    /// Diagnostic notes the canonical run must raise (adversarial regimes).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expect_notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointSpec {
    pub step_id: String,
    pub predicate: Predicate,
    /// Steps that must follow the check for it to count as acted upon.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub guards: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerSpec {
    pub name: String,
    /// Placeholder naming the canonical value, e.g. `{{step-05.output.value}}`.
    pub value: Value,
    /// Controlled-phrasing reference to the sub-question result, e.g. `[3:real_roots.1]`.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default)]
    pub equivalence: Equivalence,
    #[serde(default = "default_tolerance", skip_serializing_if = "is_default_tolerance")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSolution {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub answers: Vec<AnswerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemTemplate {
    pub id: String,
    pub statement: String,
    #[serde(default)]
    pub sub_questions: Vec<String>,
    #[serde(default)]
    pub required_tools: Vec<String>,
    #[serde(default)]
    pub reference_solution: ReferenceSolution,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, ParamSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub derived: Vec<Derived>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub canonical_trace: Vec<TraceStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verification_checkpoints: Vec<CheckpointSpec>,
    #[serde(default)]
    pub min_steps: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failure_modes: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub domain: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adversarial: Vec<String>,
}

impl ProblemTemplate {
    pub fn step(&self, step_id: &str) -> Option<&TraceStep> {
        self.canonical_trace.iter().find(|s| s.step_id == step_id)
    }

    /// Structural checks: known tools, trace tools within `required_tools`,
    /// `min_steps` equal to the trace length, checkpoints and guards naming
    /// real steps, sub-question indices in range.
    pub fn check(&self, registry: &ToolRegistry) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        for t in &self.required_tools {
            if !registry.contains(t) {
                errs.push(format!("required tool {t:?} is not registered"));
            }
        }
        if self.min_steps != self.canonical_trace.len() {
            errs.push(format!(
                "min_steps {} but canonical trace has {} steps",
                self.min_steps,
                self.canonical_trace.len()
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.canonical_trace {
            if !seen.insert(s.step_id.as_str()) {
                errs.push(format!("duplicate step {}", s.step_id));
            }
            for t in std::iter::once(&s.tool_id).chain(&s.alt_tools) {
                if !self.required_tools.contains(t) {
                    errs.push(format!("{}: tool {t:?} not in required_tools", s.step_id));
                }
            }
            if let Some(q) = s.sub_question {
                if q == 0 || q > self.sub_questions.len() {
                    errs.push(format!("{}: sub_question {q} out of range", s.step_id));
                }
            }
            if s.role == Role::Deliverable && s.deliverable.is_none() {
                errs.push(format!("{}: deliverable step without a deliverable path", s.step_id));
            }
        }
        for c in &self.verification_checkpoints {
            for id in std::iter::once(&c.step_id).chain(&c.guards) {
                if self.step(id).is_none() {
                    errs.push(format!("checkpoint names unknown step {id}"));
                }
            }
        }
        for name in self.parameters.keys().chain(self.derived.iter().map(|d| &d.name)) {
            if !stepwise_tools::schema::is_symbol(name) {
                errs.push(format!("parameter name {name:?} is not a symbol"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}
