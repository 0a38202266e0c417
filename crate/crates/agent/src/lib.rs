//! Agents for the tool-calling harness.
//!
//! Every agent turns an [`Observation`] into one text response in the
//! protocol of [`protocol`]. Scripted agents replay canonical traces, the
//! reference reasoner plans from the sub-question text, and [`LlmAgent`]
//! delegates to a chat backend.

pub mod llm;
pub mod observation;
pub mod protocol;
pub mod reasoner;
pub mod scripted;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use stepwise_bank::ProblemInstance;
use thiserror::Error;

pub use llm::{
    BackendConfig, BackendError, CassetteBackend, ChatBackend, ChatMessage, HttpBackend, LlmAgent,
    LlmPlanner, StubBackend,
};
pub use observation::{AnswerSlot, Observation, StepResponse};
pub use protocol::{parse_response, AgentAction, ParsedResponse, ToolCall, MARKER};
pub use reasoner::{AuditRecord, ContextBuffer, Planner, ReferenceReasoner, RuleBasedPlanner, K};
pub use scripted::{DegradingAgent, OracleAgent, ViolationAgent, ViolationKind};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("bad model spec {spec:?}: {reason}")]
    Spec { spec: String, reason: String },
}

/// An agent produces one response per observation.
pub trait Agent: Send {
    fn name(&self) -> &str;
    fn respond(&mut self, obs: &Observation) -> Result<String, AgentError>;
}

/// Agents that think in actions; their responses are rendered actions.
pub trait ActionAgent: Send {
    fn name(&self) -> &str;
    fn next_action(&mut self, obs: &Observation) -> Result<AgentAction, AgentError>;
}

impl<T: ActionAgent> Agent for T {
    fn name(&self) -> &str {
        ActionAgent::name(self)
    }

    fn respond(&mut self, obs: &Observation) -> Result<String, AgentError> {
        Ok(self.next_action(obs)?.render())
    }
}

pub const ENDPOINT_ENV: &str = "STEPWISE_LLM_ENDPOINT";

/// A model name on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    Oracle,
    Reasoner,
    Violation(ViolationKind),
    Degrading(usize),
    /// Replay of a recorded chat session.
    Cassette(PathBuf),
    /// A live chat endpoint; `endpoint` falls back to `STEPWISE_LLM_ENDPOINT`.
    Llm { model: String, endpoint: Option<String> },
}

impl FromStr for ModelSpec {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, AgentError> {
        let bad = |reason: &str| AgentError::Spec {
            spec: s.to_string(),
            reason: reason.to_string(),
        };
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match (head, rest) {
            ("oracle", None) => Ok(ModelSpec::Oracle),
            ("reasoner", None) => Ok(ModelSpec::Reasoner),
            ("violation", Some(k)) => k.parse().map(ModelSpec::Violation).map_err(|e| bad(&e)),
            ("degrading", Some(n)) => n
                .parse()
                .map(ModelSpec::Degrading)
                .map_err(|_| bad("capacity must be a non-negative integer")),
            ("cassette", Some(p)) if !p.is_empty() => Ok(ModelSpec::Cassette(PathBuf::from(p))),
            ("llm", Some(m)) if !m.is_empty() => Ok(match m.split_once('@') {
                Some((model, ep)) => ModelSpec::Llm {
                    model: model.into(),
                    endpoint: Some(ep.into()),
                },
                None => ModelSpec::Llm {
                    model: m.into(),
                    endpoint: None,
                },
            }),
            _ => Err(bad(
                "expected oracle, reasoner, violation:KIND, degrading:N, cassette:PATH or llm:MODEL[@URL]",
            )),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Oracle => f.write_str("oracle"),
            ModelSpec::Reasoner => f.write_str("reasoner"),
            ModelSpec::Violation(k) => write!(f, "violation:{}", k.as_str()),
            ModelSpec::Degrading(n) => write!(f, "degrading:{n}"),
            ModelSpec::Cassette(p) => write!(f, "cassette:{}", p.display()),
            ModelSpec::Llm { model, endpoint: Some(e) } => write!(f, "llm:{model}@{e}"),
            ModelSpec::Llm { model, endpoint: None } => write!(f, "llm:{model}"),
        }
    }
}

/// Builds one fresh agent per episode; chat backends are shared.
#[derive(Clone)]
pub struct AgentFactory {
    spec: ModelSpec,
    backend: Option<Arc<dyn ChatBackend>>,
}

impl AgentFactory {
    pub fn new(spec: ModelSpec) -> Result<Self, AgentError> {
        let backend: Option<Arc<dyn ChatBackend>> = match &spec {
            ModelSpec::Cassette(p) => Some(Arc::new(CassetteBackend::replay(p)?)),
            ModelSpec::Llm { model, endpoint } => {
                let endpoint = endpoint
                    .clone()
                    .or_else(|| std::env::var(ENDPOINT_ENV).ok())
                    .ok_or_else(|| AgentError::Spec {
                        spec: spec.to_string(),
                        reason: format!("no endpoint given and {ENDPOINT_ENV} unset"),
                    })?;
                Some(Arc::new(HttpBackend::new(BackendConfig::new(endpoint, model.clone()))))
            }
            _ => None,
        };
        Ok(AgentFactory { spec, backend })
    }

    /// A factory around an existing backend, named `name`.
    pub fn with_backend(name: &str, backend: Arc<dyn ChatBackend>) -> Self {
        AgentFactory {
            spec: ModelSpec::Llm {
                model: name.into(),
                endpoint: None,
            },
            backend: Some(backend),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn name(&self) -> String {
        self.spec.to_string()
    }

    pub fn make(&self, instance: &ProblemInstance) -> Box<dyn Agent> {
        match (&self.spec, &self.backend) {
            (ModelSpec::Oracle, _) => Box::new(OracleAgent::new(instance)),
            (ModelSpec::Reasoner, _) => Box::new(ReferenceReasoner::rule_based()),
            (ModelSpec::Violation(k), _) => Box::new(ViolationAgent::new(instance, *k)),
            (ModelSpec::Degrading(n), _) => Box::new(DegradingAgent::new(instance, *n)),
            (_, Some(b)) => Box::new(LlmAgent::new(self.name(), b.clone())),
            (_, None) => unreachable!("chat specs always carry a backend"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_round_trip() {
        for s in [
            "oracle",
            "reasoner",
            "violation:multi_call",
            "degrading:7",
            "cassette:/tmp/x.jsonl",
            "llm:gpt@http://localhost:1",
        ] {
            assert_eq!(s.parse::<ModelSpec>().unwrap().to_string(), s);
        }
        for s in ["", "oracle:1", "violation:nope", "degrading:x", "gpt-4"] {
            assert!(s.parse::<ModelSpec>().is_err(), "{s}");
        }
    }
}
