//! Chat-completion backends and the agent that drives them.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use stepwise_tools::json::canonical_string;
use stepwise_tools::ToolDescriptor;
use thiserror::Error;

use crate::protocol::{parse_response, AgentAction, MARKER};
use crate::reasoner::{ContextBuffer, Planner, Synthesis};
use crate::{Agent, AgentError, Observation};

pub const API_KEY_ENV: &str = "STEPWISE_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Transport(String),
    #[error("backend replied with something unusable: {0}")]
    BadReply(String),
    #[error("no recorded reply for request {0}")]
    NotRecorded(String),
    #[error("cassette {path}: {message}")]
    Cassette { path: PathBuf, message: String },
}

/// Text generation behind a chat interface. Shared across concurrent
/// episodes.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError>;
}

/// Hex SHA-256 of the canonical JSON of a message list.
pub fn request_digest(messages: &[ChatMessage]) -> String {
    let v = serde_json::to_value(messages).expect("messages serialize");
    Sha256::digest(canonical_string(&v).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Returns scripted replies in order; errors once they run out.
#[derive(Debug, Default)]
pub struct StubBackend {
    replies: Mutex<VecDeque<Result<String, String>>>,
}

impl StubBackend {
    pub fn new<I: IntoIterator<Item = String>>(replies: I) -> Self {
        StubBackend {
            replies: Mutex::new(replies.into_iter().map(Ok).collect()),
        }
    }

    /// A script whose entries may be transport failures.
    pub fn scripted(replies: Vec<Result<String, String>>) -> Self {
        StubBackend {
            replies: Mutex::new(replies.into()),
        }
    }
}

impl ChatBackend for StubBackend {
    fn complete(&self, _messages: &[ChatMessage]) -> Result<String, BackendError> {
        let mut q = self.replies.lock().unwrap_or_else(|p| p.into_inner());
        match q.pop_front() {
            Some(Ok(s)) => Ok(s),
            Some(Err(e)) => Err(BackendError::Transport(e)),
            None => Err(BackendError::Transport("stub exhausted".into())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CassetteEntry {
    request: String,
    response: String,
}

/// Replays recorded replies keyed by request digest, or records the replies
/// of an inner backend. One JSON object per line: `{request, response}`.
pub struct CassetteBackend {
    path: PathBuf,
    entries: Mutex<HashMap<String, String>>,
    recorder: Option<(Arc<dyn ChatBackend>, Mutex<File>)>,
}

fn read_cassette(path: &Path) -> Result<HashMap<String, String>, BackendError> {
    let err = |message: String| BackendError::Cassette {
        path: path.to_path_buf(),
        message,
    };
    let mut out = HashMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let f = File::open(path).map_err(|e| err(e.to_string()))?;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: CassetteEntry =
            serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
        out.insert(e.request, e.response);
    }
    Ok(out)
}

impl CassetteBackend {
    pub fn replay(path: &Path) -> Result<Self, BackendError> {
        if !path.exists() {
            return Err(BackendError::Cassette {
                path: path.to_path_buf(),
                message: "no such file".into(),
            });
        }
        Ok(CassetteBackend {
            path: path.to_path_buf(),
            entries: Mutex::new(read_cassette(path)?),
            recorder: None,
        })
    }

    /// Replays what is already on file and records everything else.
    pub fn record(path: &Path, inner: Arc<dyn ChatBackend>) -> Result<Self, BackendError> {
        let entries = read_cassette(path)?;
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| BackendError::Cassette {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        Ok(CassetteBackend {
            path: path.to_path_buf(),
            entries: Mutex::new(entries),
            recorder: Some((inner, Mutex::new(f))),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ChatBackend for CassetteBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let digest = request_digest(messages);
        if let Some(r) = self.entries.lock().unwrap_or_else(|p| p.into_inner()).get(&digest) {
            return Ok(r.clone());
        }
        let Some((inner, file)) = &self.recorder else {
            return Err(BackendError::NotRecorded(digest));
        };
        let response = inner.complete(messages)?;
        let entry = CassetteEntry {
            request: digest.clone(),
            response: response.clone(),
        };
        let mut line = serde_json::to_string(&entry).expect("entry serializes");
        line.push('\n');
        let mut f = file.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| BackendError::Cassette {
                path: self.path.clone(),
                message: e.to_string(),
            })?;
        self.entries
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(digest, response.clone());
        Ok(response)
    }
}

/// OpenAI-compatible `/chat/completions` endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_max_tokens() -> u32 {
    1024
}

fn default_key_env() -> String {
    API_KEY_ENV.into()
}

fn default_timeout() -> u64 {
    60
}

impl BackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        BackendConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            max_tokens: default_max_tokens(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
        }
    }
}

pub struct HttpBackend {
    config: BackendConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { config, agent }
    }

    /// Request body; temperature is always 0.
    pub fn body(&self, messages: &[ChatMessage]) -> Value {
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": 0,
            "max_tokens": self.config.max_tokens,
        })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let mut req = self.agent.post(&url);
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(self.body(messages))
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::BadReply(e.to_string()))?;
        if status >= 400 {
            return Err(BackendError::Transport(format!("status {status}: {body}")));
        }
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(String::from)
            .ok_or_else(|| BackendError::BadReply(body.to_string()))
    }
}

/// Rules and tool schemas sent as the system message.
pub fn system_prompt(tools: &[ToolDescriptor]) -> String {
    let mut s = String::from(
        "You solve multi-step STEM problems using only the tools listed below.\n\
         Rules:\n\
         - Each response may contain at most one tool call, written as \
         <tool_call>{\"step_id\": ..., \"tool_id\": ..., \"input\": {...}}</tool_call>.\n\
         - Every computation must be done through a tool call; do not do arithmetic in prose.\n\
         - When finished, reply with <final_answer>{json object of named answers}</final_answer> \
         followed by the line ",
    );
    s.push_str(MARKER);
    s.push_str(".\nTools:\n");
    for t in tools {
        s.push_str(&format!(
            "- {} ({}): input {}\n",
            t.tool_id,
            t.description,
            canonical_string(&t.input_schema)
        ));
    }
    s
}

fn abstain(reason: &str) -> String {
    AgentAction::Final {
        answer: json!({"ABSTAIN": reason}),
    }
    .render()
}

/// Drives a chat backend turn by turn. A backend failure is retried once;
/// a second failure ends the episode with an ABSTAIN answer.
pub struct LlmAgent {
    name: String,
    backend: Arc<dyn ChatBackend>,
    messages: Vec<ChatMessage>,
}

impl LlmAgent {
    pub fn new(name: impl Into<String>, backend: Arc<dyn ChatBackend>) -> Self {
        LlmAgent {
            name: name.into(),
            backend,
            messages: Vec::new(),
        }
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }
}

impl Agent for LlmAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn respond(&mut self, obs: &Observation) -> Result<String, AgentError> {
        if self.messages.is_empty() {
            self.messages.push(ChatMessage::new("system", system_prompt(&obs.tools)));
        }
        let obs_json = serde_json::to_value(obs).expect("observation serializes");
        self.messages.push(ChatMessage::new("user", canonical_string(&obs_json)));
        let reply = self
            .backend
            .complete(&self.messages)
            .or_else(|_| self.backend.complete(&self.messages));
        let text = match reply {
            Ok(t) => t,
            Err(e) => abstain(&e.to_string()),
        };
        self.messages.push(ChatMessage::new("assistant", text.clone()));
        Ok(text)
    }
}

/// Action synthesis through a chat backend, for use inside the reference
/// reasoner.
pub struct LlmPlanner {
    backend: Arc<dyn ChatBackend>,
}

impl LlmPlanner {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        LlmPlanner { backend }
    }
}

impl Planner for LlmPlanner {
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
        let facts = serde_json::to_value(&buffer.facts).expect("facts serialize");
        let messages = vec![
            ChatMessage::new("system", system_prompt(&obs.tools)),
            ChatMessage::new(
                "user",
                format!(
                    "Known results: {}\nSub-question {goal}: {question}\nAttempt {}. Reply with exactly one tool call.",
                    canonical_string(&facts),
                    attempt + 1
                ),
            ),
        ];
        let text = self.backend.complete(&messages).map_err(|e| e.to_string())?;
        let call = parse_response(&text)
            .calls
            .into_iter()
            .next()
            .ok_or("reply has no tool call")??;
        Ok(Synthesis {
            task: question.clone(),
            tool_id: call.tool_id,
            input: call.input,
        })
    }
}
