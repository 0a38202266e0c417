use serde::{Deserialize, Serialize};
use serde_json::Value;
use stepwise_bank::ProblemInstance;
use stepwise_tools::{Diagnostics, ToolDescriptor};

/// One slot of the expected final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSlot {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Where the value comes from, in sub-question reference syntax.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source: String,
}

/// Server reply to the most recent tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub step_id: String,
    pub tool_id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_id: Option<String>,
    pub output: Value,
    pub diagnostics: Diagnostics,
}

/// What an agent sees before each response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub instance_id: String,
    pub statement: String,
    pub sub_questions: Vec<String>,
    pub answer_format: Vec<AnswerSlot>,
    pub tools: Vec<ToolDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_response: Option<StepResponse>,
    /// Result ids persisted so far, in creation order.
    pub result_ids: Vec<String>,
    pub remaining_steps: usize,
}

impl Observation {
    /// The opening observation of an episode.
    pub fn initial(instance: &ProblemInstance, tools: Vec<ToolDescriptor>, budget: usize) -> Self {
        Observation {
            instance_id: instance.instance_id.clone(),
            statement: instance.statement.clone(),
            sub_questions: instance.sub_questions.clone(),
            answer_format: instance
                .reference
                .iter()
                .map(|r| AnswerSlot {
                    name: r.name.clone(),
                    description: r.description.clone(),
                    source: r.source.clone(),
                })
                .collect(),
            tools,
            last_response: None,
            result_ids: Vec::new(),
            remaining_steps: budget,
        }
    }
}
