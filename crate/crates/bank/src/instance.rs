//! Seeded instantiation: sample parameters, run the canonical trace through
//! a context store, and record the concrete trace and reference answers.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use stepwise_context::{CallRequest, ContextArtifact, ContextStore, StoreError};
use stepwise_expr::{evaluate_f64, parse};
use stepwise_tools::json::lookup;
use stepwise_tools::{Diagnostics, ToolRegistry};
use thiserror::Error;

use crate::checkpoint::Predicate;
use crate::compare::values_match;
use crate::placeholder::{number_value, substitute, substitute_str, unresolved};
use crate::template::{Equivalence, ParamSpec, ProblemTemplate, Role, DEFAULT_TOLERANCE};

pub const MAX_ATTEMPTS: usize = 1000;

/// Quadrature tolerance assumed when a step leaves it unset.
const INTEGRATE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("{template}: no admissible parameters after {attempts} attempts (last: {reason})")]
    Rejected {
        template: String,
        attempts: usize,
        reason: String,
    },
    #[error("{step_id} failed: {message}")]
    StepFailed { step_id: String, message: String },
    #[error("template error: {0}")]
    Template(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn is_default_tolerance(t: &f64) -> bool {
    *t == DEFAULT_TOLERANCE
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcreteStep {
    pub step_id: String,
    pub tool_id: String,
    pub input: Value,
    pub output: Value,
    pub diagnostics: Diagnostics,
    pub equivalence: Equivalence,
    #[serde(default = "default_tolerance", skip_serializing_if = "is_default_tolerance")]
    pub tolerance: f64,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_question: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deliverable: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commutative_group: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alt_tools: Vec<String>,
}

impl ConcreteStep {
    /// Whether `tool_id` is an acceptable tool for this step.
    pub fn accepts_tool(&self, tool_id: &str) -> bool {
        self.tool_id == tool_id || self.alt_tools.iter().any(|t| t == tool_id)
    }

    /// The delivered value: `deliverable` looked up in `{input, output}`.
    pub fn deliverable_value(&self) -> Option<Value> {
        let path = self.deliverable.as_deref()?;
        let view = json!({"input": self.input, "output": self.output});
        lookup(&view, path).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step_id: String,
    /// Parameters substituted; step references left for the scorer.
    pub predicate: Predicate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub guards: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAnswer {
    pub name: String,
    pub value: Value,
    pub equivalence: Equivalence,
    #[serde(default = "default_tolerance", skip_serializing_if = "is_default_tolerance")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub instance_id: String,
    pub template_id: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub domain: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adversarial: Vec<String>,
    pub parameters: BTreeMap<String, f64>,
    pub statement: String,
    pub sub_questions: Vec<String>,
    pub required_tools: Vec<String>,
    pub min_steps: usize,
    pub canonical_trace: Vec<ConcreteStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<Checkpoint>,
    pub reference: Vec<ReferenceAnswer>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failure_modes: Vec<String>,
}

impl ProblemInstance {
    pub fn step(&self, step_id: &str) -> Option<&ConcreteStep> {
        self.canonical_trace.iter().find(|s| s.step_id == step_id)
    }

    /// Reference answers as one JSON object, the shape of a final answer.
    pub fn reference_answer(&self) -> Value {
        Value::Object(
            self.reference
                .iter()
                .map(|r| (r.name.clone(), r.value.clone()))
                .collect(),
        )
    }

    /// True when every reference answer is present in `answer` and matches.
    pub fn answer_matches(&self, answer: &Value) -> bool {
        !self.reference.is_empty()
            && self.reference.iter().all(|r| {
                answer
                    .get(&r.name)
                    .is_some_and(|a| values_match(&r.value, a, r.equivalence, r.tolerance))
            })
    }

    pub fn to_json(&self) -> String {
        stepwise_tools::json::canonical_string(&serde_json::to_value(self).expect("instance serializes"))
    }
}

pub(crate) fn registry() -> &'static ToolRegistry {
    static REGISTRY: OnceLock<ToolRegistry> = OnceLock::new();
    REGISTRY.get_or_init(ToolRegistry::standard)
}

pub fn instance_id(template_id: &str, seed: u64) -> String {
    format!("{template_id}-s{seed:04}")
}

fn rng_for(template_id: &str, seed: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(template_id.as_bytes());
    h.update([0]);
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(b))
}

fn sample(spec: &ParamSpec, rng: &mut ChaCha8Rng) -> Result<f64, String> {
    if let Some(values) = &spec.values {
        if values.is_empty() {
            return Err("empty value set".into());
        }
        return Ok(values[rng.random_range(0..values.len())]);
    }
    let [lo, hi] = spec.range.ok_or("parameter needs range or values")?;
    if !(lo <= hi) {
        return Err(format!("bad range [{lo}, {hi}]"));
    }
    if spec.integer {
        return Ok(rng.random_range(lo.ceil() as i64..=hi.floor() as i64) as f64);
    }
    if let Some(step) = spec.step {
        let k0 = (lo / step).round() as i64;
        let k1 = (hi / step).round() as i64;
        let k = rng.random_range(k0..=k1);
        // dividing by the integral reciprocal keeps decimal steps exact
        let inv = (1.0 / step).round();
        return Ok(if step < 1.0 && (1.0 / step - inv).abs() < 1e-9 {
            k as f64 / inv
        } else {
            k as f64 * step
        });
    }
    Ok(rng.random_range(lo..=hi))
}

fn eval_with(text: &str, params: &BTreeMap<String, f64>) -> Result<f64, String> {
    let e = parse(text).map_err(|e| format!("{text:?}: {e}"))?;
    let vals: Vec<(&str, f64)> = params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    evaluate_f64(&e, &vals).map_err(|e| format!("{text:?}: {e}"))
}

/// Evaluates a constraint such as `B^2 - 3*A*C >= 1`.
pub fn constraint_holds(text: &str, params: &BTreeMap<String, f64>) -> Result<bool, String> {
    for op in [">=", "<=", "!=", ">", "<"] {
        if let Some((l, r)) = text.split_once(op) {
            let (a, b) = (eval_with(l, params)?, eval_with(r, params)?);
            return Ok(match op {
                ">=" => a >= b,
                "<=" => a <= b,
                "!=" => a != b,
                ">" => a > b,
                _ => a < b,
            });
        }
    }
    Err(format!("constraint {text:?} has no comparison"))
}

/// Adds derived parameters to a set of sampled ones.
pub fn with_derived(
    template: &ProblemTemplate,
    mut params: BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, String> {
    for d in &template.derived {
        let v = eval_with(&d.expr, &params)?;
        params.insert(d.name.clone(), v);
    }
    Ok(params)
}

/// Knobs applied when running a canonical trace.
#[derive(Debug, Clone, Default)]
pub struct Variation {
    /// Scale for quadrature tolerances (1 when unset).
    pub tolerance_scale: Option<f64>,
    /// Execution order as indices into the canonical trace.
    pub order: Option<Vec<usize>>,
}

/// Artifacts of one canonical run, keyed by step id.
#[derive(Debug, Clone)]
pub struct Execution {
    pub artifacts: BTreeMap<String, ContextArtifact>,
}

impl Execution {
    pub fn resolver<'a>(&'a self, params: &'a BTreeMap<String, f64>) -> impl Fn(&str) -> Option<Value> + 'a {
        move |name: &str| {
            if let Some((step, path)) = name.split_once('.') {
                if let Some(a) = self.artifacts.get(step) {
                    let view = json!({"input": a.input, "output": a.output, "diagnostics": a.diagnostics});
                    return lookup(&view, path).cloned();
                }
            }
            params.get(name).map(|v| number_value(*v))
        }
    }
}

/// Runs the canonical trace of `template` under `params`.
pub fn execute(
    template: &ProblemTemplate,
    params: &BTreeMap<String, f64>,
    variation: &Variation,
    store: &ContextStore,
    problem_id: &str,
) -> Result<Execution, InstanceError> {
    let steps = &template.canonical_trace;
    let order: Vec<usize> = variation.order.clone().unwrap_or_else(|| (0..steps.len()).collect());
    let mut exec = Execution { artifacts: BTreeMap::new() };
    for i in order {
        let step = &steps[i];
        let mut input = substitute(&step.input, &exec.resolver(params));
        let left = unresolved(&input);
        if !left.is_empty() {
            return Err(InstanceError::Template(format!(
                "{}: unresolved {left:?}",
                step.step_id
            )));
        }
        if let Some(scale) = variation.tolerance_scale {
            if step.tool_id == "integrate" && input.get("lower").is_some() {
                let base = input.get("tolerance").and_then(Value::as_f64).unwrap_or(INTEGRATE_TOLERANCE);
                input["tolerance"] = json!(base * scale);
            }
        }
        let req = CallRequest {
            problem_id: problem_id.to_string(),
            step_id: step.step_id.clone(),
            tool_id: step.tool_id.clone(),
            input,
            persist: true,
            run_id: "canonical".into(),
        };
        let resp = store.call(registry(), &req)?;
        if !resp.ok {
            let message = resp
                .diagnostics
                .error
                .clone()
                .unwrap_or_else(|| resp.diagnostics.notes.join(","));
            return Err(InstanceError::StepFailed {
                step_id: step.step_id.clone(),
                message,
            });
        }
        let artifact = store
            .get("canonical", problem_id, &step.step_id)
            .expect("persisted artifact");
        exec.artifacts.insert(step.step_id.clone(), artifact);
    }
    Ok(exec)
}

/// Everything a canonical run determines.
#[derive(Debug, Clone)]
pub struct Concrete {
    pub execution: Execution,
    pub reference: Vec<ReferenceAnswer>,
    /// Post-conditions that did not hold (expected notes, checkpoints).
    pub unmet: Vec<String>,
}

pub fn concretize(
    template: &ProblemTemplate,
    params: &BTreeMap<String, f64>,
    variation: &Variation,
    problem_id: &str,
) -> Result<Concrete, InstanceError> {
    let store = ContextStore::in_memory();
    let execution = execute(template, params, variation, &store, problem_id)?;
    let resolve = execution.resolver(params);
    let mut unmet = Vec::new();
    for s in &template.canonical_trace {
        let notes = &execution.artifacts[&s.step_id].diagnostics.notes;
        for n in &s.expect_notes {
            if !notes.contains(n) {
                unmet.push(format!("{}: expected note {n}", s.step_id));
            }
        }
    }
    for c in &template.verification_checkpoints {
        match c.predicate.holds(&resolve) {
            Ok(true) => {}
            Ok(false) => unmet.push(format!("checkpoint at {} does not hold", c.step_id)),
            Err(e) => return Err(InstanceError::Template(format!("checkpoint at {}: {e}", c.step_id))),
        }
    }
    let mut reference = Vec::new();
    for a in &template.reference_solution.answers {
        let value = substitute(&a.value, &resolve);
        if !unresolved(&value).is_empty() {
            return Err(InstanceError::Template(format!("answer {} is unresolved", a.name)));
        }
        reference.push(ReferenceAnswer {
            name: a.name.clone(),
            value,
            equivalence: a.equivalence,
            tolerance: a.tolerance,
            source: a.source.clone(),
            description: a.description.clone(),
        });
    }
    drop(resolve);
    Ok(Concrete {
        execution,
        reference,
        unmet,
    })
}

fn text_with(text: &str, params: &BTreeMap<String, f64>) -> String {
    let resolve = |n: &str| params.get(n).map(|v| number_value(*v));
    match substitute_str(text, &resolve) {
        Value::String(s) => s,
        other => other.to_string(),
    }
}

fn assemble(
    template: &ProblemTemplate,
    seed: u64,
    params: BTreeMap<String, f64>,
    concrete: Concrete,
) -> ProblemInstance {
    let resolve = |n: &str| params.get(n).map(|v| number_value(*v));
    let canonical_trace = template
        .canonical_trace
        .iter()
        .map(|s| {
            let a = &concrete.execution.artifacts[&s.step_id];
            ConcreteStep {
                step_id: s.step_id.clone(),
                tool_id: s.tool_id.clone(),
                input: a.input.clone(),
                output: a.output.clone(),
                diagnostics: a.diagnostics.clone(),
                equivalence: s.equivalence,
                tolerance: s.tolerance,
                role: s.role,
                sub_question: s.sub_question,
                deliverable: s.deliverable.clone(),
                commutative_group: s.commutative_group.clone(),
                alt_tools: s.alt_tools.clone(),
            }
        })
        .collect();
    let checkpoints = template
        .verification_checkpoints
        .iter()
        .map(|c| Checkpoint {
            step_id: c.step_id.clone(),
            predicate: c.predicate.substitute(&resolve),
            guards: c.guards.clone(),
            description: c.description.clone(),
        })
        .collect();
    ProblemInstance {
        instance_id: instance_id(&template.id, seed),
        template_id: template.id.clone(),
        seed,
        domain: template.domain.clone(),
        adversarial: template.adversarial.clone(),
        statement: text_with(&template.statement, &params),
        sub_questions: template.sub_questions.iter().map(|q| text_with(q, &params)).collect(),
        required_tools: template.required_tools.clone(),
        min_steps: template.min_steps,
        canonical_trace,
        checkpoints,
        reference: concrete.reference,
        failure_modes: template.failure_modes.clone(),
        parameters: params,
    }
}

/// Draws sampled parameters (without derived ones) satisfying the constraints.
fn draw(template: &ProblemTemplate, rng: &mut ChaCha8Rng) -> Result<Result<BTreeMap<String, f64>, String>, InstanceError> {
    let mut sampled = BTreeMap::new();
    for (name, spec) in &template.parameters {
        let v = sample(spec, rng).map_err(|e| InstanceError::Template(format!("{name}: {e}")))?;
        sampled.insert(name.clone(), v);
    }
    let all = with_derived(template, sampled.clone()).map_err(InstanceError::Template)?;
    for c in &template.constraints {
        match constraint_holds(c, &all) {
            Ok(true) => {}
            Ok(false) => return Ok(Err(format!("constraint {c:?}"))),
            Err(e) => return Err(InstanceError::Template(e)),
        }
    }
    Ok(Ok(sampled))
}

/// Deterministic in `(template.id, seed)`.
pub fn instantiate(template: &ProblemTemplate, seed: u64) -> Result<ProblemInstance, InstanceError> {
    let mut rng = rng_for(&template.id, seed);
    let id = instance_id(&template.id, seed);
    let mut reason = String::new();
    for _ in 0..MAX_ATTEMPTS {
        let sampled = match draw(template, &mut rng)? {
            Ok(p) => p,
            Err(r) => {
                reason = r;
                continue;
            }
        };
        let params = with_derived(template, sampled).map_err(InstanceError::Template)?;
        let concrete = concretize(template, &params, &Variation::default(), &id)?;
        if let Some(u) = concrete.unmet.first() {
            reason = u.clone();
            continue;
        }
        return Ok(assemble(template, seed, params, concrete));
    }
    Err(InstanceError::Rejected {
        template: template.id.clone(),
        attempts: MAX_ATTEMPTS,
        reason,
    })
}

/// Instantiates with fixed sampled parameters; derived values are recomputed
/// and constraints are not enforced.
pub fn instantiate_with(
    template: &ProblemTemplate,
    sampled: BTreeMap<String, f64>,
    seed: u64,
) -> Result<ProblemInstance, InstanceError> {
    let params = with_derived(template, sampled).map_err(InstanceError::Template)?;
    let id = instance_id(&template.id, seed);
    let concrete = concretize(template, &params, &Variation::default(), &id)?;
    if let Some(u) = concrete.unmet.first() {
        return Err(InstanceError::Rejected {
            template: template.id.clone(),
            attempts: 1,
            reason: u.clone(),
        });
    }
    Ok(assemble(template, seed, params, concrete))
}
