//! Agents that replay the canonical trace, optionally with scripted faults.

use std::collections::BTreeSet;
use std::fmt::Write;
use std::str::FromStr;

use serde_json::{json, Value};
use stepwise_bank::ProblemInstance;

use crate::protocol::{render_answer, render_call, AgentAction, ToolCall};
use crate::{ActionAgent, Agent, AgentError, Observation};

fn canonical_calls(instance: &ProblemInstance) -> Vec<ToolCall> {
    instance
        .canonical_trace
        .iter()
        .map(|s| ToolCall::new(&s.step_id, &s.tool_id, s.input.clone()))
        .collect()
}

/// Replays the canonical trace verbatim, then answers with the reference.
#[derive(Debug, Clone)]
pub struct OracleAgent {
    name: String,
    calls: Vec<ToolCall>,
    answer: Value,
    next: usize,
}

impl OracleAgent {
    pub fn new(instance: &ProblemInstance) -> Self {
        OracleAgent {
            name: "oracle".into(),
            calls: canonical_calls(instance),
            answer: instance.reference_answer(),
            next: 0,
        }
    }

    /// An oracle that leaves out the given canonical steps.
    pub fn skipping(instance: &ProblemInstance, steps: &[&str]) -> Self {
        let skip: BTreeSet<&str> = steps.iter().copied().collect();
        let mut a = Self::new(instance);
        a.calls.retain(|c| !skip.contains(c.step_id.as_str()));
        a.name = format!("oracle-skip:{}", steps.join(","));
        a
    }

    pub fn calls(&self) -> &[ToolCall] {
        &self.calls
    }
}

impl ActionAgent for OracleAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn next_action(&mut self, _obs: &Observation) -> Result<AgentAction, AgentError> {
        let action = match self.calls.get(self.next) {
            Some(c) => AgentAction::ToolCall(c.clone()),
            None => AgentAction::Final {
                answer: self.answer.clone(),
            },
        };
        self.next += 1;
        Ok(action)
    }
}

/// Solves instances of up to `capacity` canonical steps; on longer ones it
/// stops after `capacity` calls and answers with nothing.
#[derive(Debug, Clone)]
pub struct DegradingAgent {
    name: String,
    inner: OracleAgent,
}

impl DegradingAgent {
    pub fn new(instance: &ProblemInstance, capacity: usize) -> Self {
        let mut inner = OracleAgent::new(instance);
        if instance.min_steps > capacity {
            inner.calls.truncate(capacity);
            inner.answer = json!({});
        }
        DegradingAgent {
            name: format!("degrading:{capacity}"),
            inner,
        }
    }
}

impl ActionAgent for DegradingAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn next_action(&mut self, obs: &Observation) -> Result<AgentAction, AgentError> {
        self.inner.next_action(obs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// The first two canonical calls arrive in one response.
    MultiCall,
    /// The last evaluable step is done "by hand" in prose.
    ManualArithmetic,
    /// Correct work, but the final answer never carries the marker.
    MissingMarker,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::MultiCall => "multi_call",
            ViolationKind::ManualArithmetic => "manual_arithmetic",
            ViolationKind::MissingMarker => "missing_marker",
        }
    }
}

impl FromStr for ViolationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "multi_call" => Ok(ViolationKind::MultiCall),
            "manual_arithmetic" => Ok(ViolationKind::ManualArithmetic),
            "missing_marker" => Ok(ViolationKind::MissingMarker),
            other => Err(format!("unknown violation kind {other:?}")),
        }
    }
}

/// A numeric_evaluator step whose bindings are all plain numbers, with its
/// canonical value.
fn hand_step(instance: &ProblemInstance) -> Option<(String, String)> {
    instance.canonical_trace.iter().rev().find_map(|s| {
        if s.tool_id != "numeric_evaluator" {
            return None;
        }
        let expr = s.input.get("expr")?.as_str()?;
        let mut text = format!("By hand, {expr} at ");
        let bindings = s.input.get("bindings")?.as_object()?;
        for (i, (name, v)) in bindings.iter().enumerate() {
            let v = v.as_f64()?;
            if i > 0 {
                text.push_str(", ");
            }
            write!(text, "{name} = {v:?}").unwrap();
        }
        let value = s.output.get("value")?.as_f64()?;
        write!(text, " gives {value:?}.").unwrap();
        Some((s.step_id.clone(), text))
    })
}

pub struct ViolationAgent {
    kind: ViolationKind,
    name: String,
    calls: Vec<ToolCall>,
    answer: Value,
    hand: Option<(String, String)>,
    next: usize,
    turn: usize,
}

impl ViolationAgent {
    pub fn new(instance: &ProblemInstance, kind: ViolationKind) -> Self {
        ViolationAgent {
            kind,
            name: format!("violation:{}", kind.as_str()),
            calls: canonical_calls(instance),
            answer: instance.reference_answer(),
            hand: match kind {
                ViolationKind::ManualArithmetic => hand_step(instance),
                _ => None,
            },
            next: 0,
            turn: 0,
        }
    }
}

impl Agent for ViolationAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn respond(&mut self, _obs: &Observation) -> Result<String, AgentError> {
        self.turn += 1;
        if self.kind == ViolationKind::MultiCall && self.turn == 1 && self.calls.len() >= 2 {
            self.next = 2;
            return Ok(format!(
                "Doing the first two steps at once.\n{}\n{}",
                render_call(&self.calls[0]),
                render_call(&self.calls[1])
            ));
        }
        let Some(call) = self.calls.get(self.next) else {
            return Ok(match self.kind {
                ViolationKind::MissingMarker => render_answer(&self.answer),
                _ => AgentAction::Final {
                    answer: self.answer.clone(),
                }
                .render(),
            });
        };
        self.next += 1;
        if let Some((step, text)) = &self.hand {
            if *step == call.step_id {
                return Ok(text.clone());
            }
        }
        Ok(render_call(call))
    }
}
