//! Text protocol between agents and the harness.
//!
//! A response carries tool calls as `<tool_call>{json}</tool_call>` blocks
//! and a final answer as `<final_answer>{json}</final_answer>` followed by
//! the completion marker.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use stepwise_tools::json::canonical_string;

pub const MARKER: &str = "PROBLEM_COMPLETED";

fn default_persist() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolCall {
    pub step_id: String,
    pub tool_id: String,
    pub input: Value,
    #[serde(default = "default_persist")]
    pub persist: bool,
}

impl ToolCall {
    pub fn new(step_id: impl Into<String>, tool_id: impl Into<String>, input: Value) -> Self {
        ToolCall {
            step_id: step_id.into(),
            tool_id: tool_id.into(),
            input,
            persist: true,
        }
    }
}

/// One agent decision. `Final` always renders with the marker.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentAction {
    ToolCall(ToolCall),
    Final { answer: Value },
}

pub fn render_call(call: &ToolCall) -> String {
    let v = serde_json::to_value(call).expect("call serializes");
    format!("<tool_call>{}</tool_call>", canonical_string(&v))
}

pub fn render_answer(answer: &Value) -> String {
    format!("<final_answer>{}</final_answer>", canonical_string(answer))
}

impl AgentAction {
    pub fn render(&self) -> String {
        match self {
            AgentAction::ToolCall(c) => render_call(c),
            AgentAction::Final { answer } => format!("{}\n{MARKER}", render_answer(answer)),
        }
    }
}

/// Everything a response contains, malformed blocks included.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    /// Tool-call blocks in written order; `Err` holds the parse error.
    pub calls: Vec<Result<ToolCall, String>>,
    pub final_answer: Option<Result<Value, String>>,
    pub marker: bool,
    /// Text outside all blocks.
    pub prose: String,
}

fn call_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)<tool_call>(.*?)</tool_call>").unwrap())
}

fn answer_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)<final_answer>(.*?)</final_answer>").unwrap())
}

pub fn parse_response(text: &str) -> ParsedResponse {
    let calls = call_re()
        .captures_iter(text)
        .map(|c| serde_json::from_str::<ToolCall>(c[1].trim()).map_err(|e| e.to_string()))
        .collect();
    let final_answer = answer_re()
        .captures(text)
        .map(|c| serde_json::from_str::<Value>(c[1].trim()).map_err(|e| e.to_string()));
    let stripped = call_re().replace_all(text, " ");
    let stripped = answer_re().replace_all(&stripped, " ");
    ParsedResponse {
        calls,
        final_answer,
        marker: text.contains(MARKER),
        prose: stripped.replace(MARKER, " ").trim().to_string(),
    }
}
