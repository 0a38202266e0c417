//! The reference reasoner: buffer update, action synthesis with bounded
//! refinement, then invocation generation.
//!
//! Sub-question `k` is answered by step `step-0k`; later sub-questions refer
//! to its result as `[k]` (the primary output, `expr` or `value`) or
//! `[k:path]` (a path into the output).

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use stepwise_bank::placeholder::{format_number, number_value};
use stepwise_tools::json::{canonical_string, lookup};
use stepwise_tools::ToolDescriptor;

use crate::protocol::{AgentAction, ToolCall};
use crate::{ActionAgent, AgentError, Observation};

/// Refinement attempts allowed per action.
pub const K: usize = 3;

pub fn step_id(goal: usize) -> String {
    format!("step-{goal:02}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fact {
    pub step_id: String,
    pub result_id: String,
    pub output: Value,
}

/// Short-lived scratchpad carried between actions.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ContextBuffer {
    /// Sub-goal (1-based sub-question index) to its established result.
    pub facts: BTreeMap<usize, Fact>,
    pub open: Vec<usize>,
    /// Sub-goal to the result ids supporting it.
    pub support: BTreeMap<usize, Vec<String>>,
    /// Refinement attempts spent on the current action.
    pub refinements: usize,
    /// Sub-goal of the call awaiting a reply.
    pub pending: Option<usize>,
    /// Failed calls per sub-goal.
    pub failures: BTreeMap<usize, usize>,
}

impl ContextBuffer {
    pub fn digest(&self) -> String {
        let v = serde_json::to_value(self).expect("buffer serializes");
        let h = Sha256::digest(canonical_string(&v).as_bytes());
        h.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn update(&mut self, obs: &Observation) {
        if self.open.is_empty() && self.facts.is_empty() {
            self.open = (1..=obs.sub_questions.len()).collect();
        }
        let (Some(goal), Some(resp)) = (self.pending.take(), &obs.last_response) else {
            return;
        };
        match (&resp.result_id, resp.ok) {
            (Some(rid), true) if resp.step_id == step_id(goal) && obs.result_ids.contains(rid) => {
                self.facts.insert(
                    goal,
                    Fact {
                        step_id: resp.step_id.clone(),
                        result_id: rid.clone(),
                        output: resp.output.clone(),
                    },
                );
                self.support.entry(goal).or_default().push(rid.clone());
                self.open.retain(|g| *g != goal);
            }
            _ => *self.failures.entry(goal).or_default() += 1,
        }
    }

    /// Resolves `[k]` or `[k:path]` against established facts.
    pub fn reference(&self, goal: usize, path: Option<&str>) -> Option<Value> {
        let out = &self.facts.get(&goal)?.output;
        match path {
            Some(p) => lookup(out, p).cloned(),
            None => out.get("expr").or_else(|| out.get("value")).cloned(),
        }
    }
}

/// Audit record kept for every emitted action.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRecord {
    pub buffer_digest: String,
    pub task: String,
    pub invocation: String,
}

/// A synthesized atomic task and the call that carries it out.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub task: String,
    pub tool_id: String,
    pub input: Value,
}

/// Action synthesis backend.
pub trait Planner: Send {
    /// Proposes a call for sub-goal `goal` on refinement `attempt` (0-based).
    fn synthesize(
        &mut self,
        obs: &Observation,
        buffer: &ContextBuffer,
        goal: usize,
        attempt: usize,
    ) -> Result<Synthesis, String>;
}

fn ref_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[(\d+)(?::([\w.]+))?\]").unwrap())
}

fn paren_number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\((-[0-9.eE+-]+)\)").unwrap())
}

struct Patterns {
    diff: Regex,
    integrate: Regex,
    system: Regex,
    solve: Regex,
    det: Regex,
    fit: Regex,
    eval: Regex,
    binding: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        diff: Regex::new(r"^Differentiate (.+) with respect to (\w+)$").unwrap(),
        integrate: Regex::new(r"^Integrate (.+?) with respect to (\w+)(?: from (\S+) to (\S+?))?( numerically)?$").unwrap(),
        system: Regex::new(r"^Solve the system (.+) for (.+)$").unwrap(),
        solve: Regex::new(r"^Solve (.+) for (\w+)$").unwrap(),
        det: Regex::new(r"^Compute the determinant of (.+)$").unwrap(),
        fit: Regex::new(r"^Fit a line to the points (.+)$").unwrap(),
        eval: Regex::new(r"^Evaluate (.+?) at (.+)$").unwrap(),
        binding: Regex::new(r"^(\w+)=(\S+)(?: (.+))?$").unwrap(),
    })
}

/// Candidate task texts for a sub-question, most specific first.
pub fn task_candidates(sub_question: &str) -> Vec<String> {
    let text = sub_question.trim();
    let mut out = Vec::new();
    let first = match text.find(". ") {
        Some(i) => &text[..i],
        None => text.trim_end_matches('.'),
    };
    out.push(first.to_string());
    let whole = text.trim_end_matches('.').to_string();
    if whole != first {
        out.push(whole);
    }
    let collapsed = first.split_whitespace().collect::<Vec<_>>().join(" ");
    if !out.contains(&collapsed) {
        out.push(collapsed);
    }
    out
}

/// Pattern-matching planner over the controlled sub-question phrasing.
#[derive(Debug, Clone, Default)]
pub struct RuleBasedPlanner;

fn splice_expr(text: &str, buf: &ContextBuffer) -> Result<String, String> {
    let mut missing = None;
    let out = ref_re().replace_all(text, |c: &Captures| {
        let goal: usize = c[1].parse().unwrap_or(0);
        match buf.reference(goal, c.get(2).map(|m| m.as_str())) {
            Some(Value::String(s)) => format!("({s})"),
            Some(Value::Number(n)) => format_number(n.as_f64().unwrap_or(f64::NAN)),
            _ => {
                missing = Some(c[0].to_string());
                String::new()
            }
        }
    });
    match missing {
        Some(m) => Err(format!("unresolved reference {m}")),
        None => Ok(out.into_owned()),
    }
}

fn scalar(text: &str, buf: &ContextBuffer) -> Result<Value, String> {
    let text = text.trim();
    if let Some(c) = ref_re().captures(text) {
        if c[0].len() == text.len() {
            let goal: usize = c[1].parse().unwrap_or(0);
            return match buf.reference(goal, c.get(2).map(|m| m.as_str())) {
                Some(v @ Value::Number(_)) => Ok(v),
                Some(other) => Err(format!("{text} is not a number: {other}")),
                None => Err(format!("unresolved reference {text}")),
            };
        }
    }
    let bare = text.trim_start_matches('(').trim_end_matches(')');
    bare.parse::<f64>()
        .map(number_value)
        .map_err(|_| format!("not a number: {text}"))
}

fn json_literal(text: &str, buf: &ContextBuffer) -> Result<Value, String> {
    let spliced = splice_expr(text, buf)?;
    let plain = paren_number_re().replace_all(&spliced, "$1");
    serde_json::from_str(&plain).map_err(|e| format!("bad literal {text}: {e}"))
}

fn bindings(text: &str, buf: &ContextBuffer) -> Result<Value, String> {
    let mut map = Map::new();
    for item in text.split(", ") {
        let c = patterns()
            .binding
            .captures(item.trim())
            .ok_or_else(|| format!("bad binding {item:?}"))?;
        let value = scalar(&c[2], buf)?;
        let v = match c.get(3) {
            Some(unit) => json!({"value": value, "unit": unit.as_str()}),
            None => value,
        };
        map.insert(c[1].to_string(), v);
    }
    Ok(Value::Object(map))
}

/// Maps one task sentence to a call.
pub fn plan_task(task: &str, buf: &ContextBuffer) -> Result<(String, Value), String> {
    let p = patterns();
    if let Some(c) = p.diff.captures(task) {
        return Ok(("symbolic_diff".into(), json!({"expr": splice_expr(&c[1], buf)?, "wrt": &c[2]})));
    }
    if let Some(c) = p.integrate.captures(task) {
        let mut input = json!({"expr": splice_expr(&c[1], buf)?, "wrt": &c[2]});
        if let (Some(lo), Some(hi)) = (c.get(3), c.get(4)) {
            input["lower"] = scalar(lo.as_str(), buf)?;
            input["upper"] = scalar(hi.as_str(), buf)?;
        }
        if c.get(5).is_some() {
            input["numeric"] = json!(true);
        }
        return Ok(("integrate".into(), input));
    }
    if let Some(c) = p.system.captures(task) {
        let system = c[1]
            .split("; ")
            .map(|e| splice_expr(e, buf))
            .collect::<Result<Vec<_>, _>>()?;
        let unknowns: Vec<&str> = c[2].split(',').map(str::trim).collect();
        return Ok(("algebra_solver".into(), json!({"system": system, "unknowns": unknowns})));
    }
    if let Some(c) = p.solve.captures(task) {
        return Ok(("solve_equation".into(), json!({"equation": splice_expr(&c[1], buf)?, "wrt": &c[2]})));
    }
    if let Some(c) = p.det.captures(task) {
        return Ok(("matrix_determinant".into(), json!({"matrix": json_literal(&c[1], buf)?})));
    }
    if let Some(c) = p.fit.captures(task) {
        return Ok(("linear_regression".into(), json!({"points": json_literal(&c[1], buf)?})));
    }
    if let Some(c) = p.eval.captures(task) {
        return Ok((
            "numeric_evaluator".into(),
            json!({"expr": splice_expr(&c[1], buf)?, "bindings": bindings(&c[2], buf)?}),
        ));
    }
    Err(format!("no tool pattern matches {task:?}"))
}

impl Planner for RuleBasedPlanner {
    fn synthesize(
        &mut self,
        obs: &Observation,
        buffer: &ContextBuffer,
        goal: usize,
        attempt: usize,
    ) -> Result<Synthesis, String> {
        let question = obs
            .sub_questions
            .get(goal - 1)
            .ok_or_else(|| format!("no sub-question {goal}"))?;
        let task = task_candidates(question)
            .into_iter()
            .nth(attempt)
            .ok_or("no further task phrasing")?;
        let (tool_id, input) = plan_task(&task, buffer)?;
        Ok(Synthesis { task, tool_id, input })
    }
}

/// Checks `input` against the descriptor's input schema: required fields
/// present and no unknown fields.
pub fn schema_valid(tools: &[ToolDescriptor], tool_id: &str, input: &Value) -> Result<(), String> {
    let d = tools
        .iter()
        .find(|d| d.tool_id == tool_id)
        .ok_or_else(|| format!("tool {tool_id} not offered"))?;
    let obj = input.as_object().ok_or("input must be an object")?;
    let schema = &d.input_schema;
    for r in schema["required"].as_array().into_iter().flatten() {
        let name = r.as_str().unwrap_or_default();
        if !obj.contains_key(name) {
            return Err(format!("{tool_id}: missing {name}"));
        }
    }
    if schema["additionalProperties"] == json!(false) {
        let props = schema["properties"].as_object();
        for k in obj.keys() {
            if !props.is_some_and(|p| p.contains_key(k)) {
                return Err(format!("{tool_id}: unknown field {k}"));
            }
        }
    }
    Ok(())
}

pub struct ReferenceReasoner {
    name: String,
    planner: Box<dyn Planner>,
    buffer: ContextBuffer,
    audit: Vec<AuditRecord>,
    max_refinements: usize,
}

impl ReferenceReasoner {
    pub fn new(planner: Box<dyn Planner>) -> Self {
        ReferenceReasoner {
            name: "reasoner".into(),
            planner,
            buffer: ContextBuffer::default(),
            audit: Vec::new(),
            max_refinements: 0,
        }
    }

    pub fn rule_based() -> Self {
        Self::new(Box::new(RuleBasedPlanner))
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn buffer(&self) -> &ContextBuffer {
        &self.buffer
    }

    pub fn audit(&self) -> &[AuditRecord] {
        &self.audit
    }

    /// Most refinement attempts any single action used.
    pub fn max_refinements(&self) -> usize {
        self.max_refinements
    }

    fn answer(&self, obs: &Observation) -> Value {
        let mut out = Map::new();
        for slot in &obs.answer_format {
            let Some(c) = ref_re().captures(&slot.source) else { continue };
            let goal: usize = c[1].parse().unwrap_or(0);
            if let Some(v) = self.buffer.reference(goal, c.get(2).map(|m| m.as_str())) {
                out.insert(slot.name.clone(), v);
            }
        }
        Value::Object(out)
    }

    fn record(&mut self, task: String, action: &AgentAction) {
        self.audit.push(AuditRecord {
            buffer_digest: self.buffer.digest(),
            task,
            invocation: action.render(),
        });
    }
}

impl ActionAgent for ReferenceReasoner {
    fn name(&self) -> &str {
        &self.name
    }

    fn next_action(&mut self, obs: &Observation) -> Result<AgentAction, AgentError> {
        self.buffer.update(obs);
        self.buffer.refinements = 0;
        let Some(&goal) = self.buffer.open.first() else {
            let action = AgentAction::Final {
                answer: self.answer(obs),
            };
            self.record("report the answers".into(), &action);
            return Ok(action);
        };
        let offset = self.buffer.failures.get(&goal).copied().unwrap_or(0);
        let mut last_err = String::new();
        while self.buffer.refinements < K {
            let attempt = offset + self.buffer.refinements;
            self.buffer.refinements += 1;
            let synth = self
                .planner
                .synthesize(obs, &self.buffer, goal, attempt)
                .and_then(|s| schema_valid(&obs.tools, &s.tool_id, &s.input).map(|_| s));
            match synth {
                Ok(s) => {
                    assert!(self.buffer.refinements <= K);
                    self.max_refinements = self.max_refinements.max(self.buffer.refinements);
                    self.buffer.pending = Some(goal);
                    let action = AgentAction::ToolCall(ToolCall::new(step_id(goal), s.tool_id, s.input));
                    self.record(s.task, &action);
                    return Ok(action);
                }
                Err(e) => last_err = e,
            }
        }
        self.max_refinements = self.max_refinements.max(self.buffer.refinements);
        let action = AgentAction::Final {
            answer: json!({"ABSTAIN": format!("sub-question {goal}: {last_err}")}),
        };
        self.record(format!("abstain on sub-question {goal}"), &action);
        Ok(action)
    }
}
