//! The 100-point rubric and the step-level metrics behind it.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use stepwise_bank::instance::Execution;
use stepwise_bank::{values_match, ProblemInstance};
use stepwise_tools::json::lookup;

use crate::align::{align, step_matches, Alignment};
use crate::episode::Episode;

pub const TOOL_SELECTION_POINTS: f64 = 35.0;
pub const FIDELITY_POINTS: f64 = 20.0;
pub const COMPLIANCE_POINTS: f64 = 15.0;
pub const FINAL_POINTS: f64 = 12.0;
pub const SUB_QUESTION_POINTS: f64 = 8.0;
pub const VERIFICATION_POINTS: f64 = 6.0;
pub const DECOMPOSITION_POINTS: f64 = 4.0;

pub const JUDGE_ERROR: &str = "JUDGE_ERROR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub tool_usage: f64,
    pub correctness: f64,
    pub approach: f64,
    pub partial_total: f64,
    pub accuracy: bool,
    pub final_correct: bool,
    pub sub_question_accuracy: f64,
    pub tool_selection_accuracy: f64,
    pub trace_fidelity: f64,
    pub verification_score: f64,
    pub decomposition: f64,
    pub compliance: f64,
    pub tags: Vec<String>,
}

/// Replaces the approach sub-scores with an external verdict.
pub trait Judge: Send + Sync {
    /// Returns `(verification_score, decomposition)`, each in [0, 1].
    fn approach(
        &self,
        episode: &Episode,
        instance: &ProblemInstance,
        deterministic: (f64, f64),
    ) -> Result<(f64, f64), String>;
}

/// POSTs the episode to an endpoint that replies
/// `{"verification_score": x, "decomposition": y}`.
pub struct HttpJudge {
    endpoint: String,
    agent: ureq::Agent,
}

pub const JUDGE_ENV: &str = "STEPWISE_JUDGE_ENDPOINT";

impl HttpJudge {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        HttpJudge {
            endpoint: endpoint.into(),
            agent,
        }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(JUDGE_ENV).ok().filter(|s| !s.is_empty()).map(Self::new)
    }
}

impl Judge for HttpJudge {
    fn approach(
        &self,
        episode: &Episode,
        instance: &ProblemInstance,
        deterministic: (f64, f64),
    ) -> Result<(f64, f64), String> {
        let body = json!({
            "instance": instance,
            "episode": episode,
            "deterministic": {"verification_score": deterministic.0, "decomposition": deterministic.1},
        });
        let v: Value = self
            .agent
            .post(&self.endpoint)
            .send_json(body)
            .map_err(|e| e.to_string())?
            .body_mut()
            .read_json()
            .map_err(|e| e.to_string())?;
        let get = |k: &str| {
            v[k].as_f64()
                .filter(|x| (0.0..=1.0).contains(x))
                .ok_or_else(|| format!("judge reply lacks {k} in [0, 1]: {v}"))
        };
        Ok((get("verification_score")?, get("decomposition")?))
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Fraction of checkpoints whose step was executed, whose predicate holds
/// on the agent's own artifacts, and whose guarded steps came afterwards.
pub fn verification_score(ep: &Episode, instance: &ProblemInstance, al: &Alignment) -> f64 {
    if instance.checkpoints.is_empty() {
        return if al.is_empty() { 0.0 } else { 1.0 };
    }
    let mapped: BTreeMap<String, _> = al
        .pairs
        .iter()
        .map(|&(c, t)| (instance.canonical_trace[c].step_id.clone(), ep.trace[t].clone()))
        .collect();
    let index = |step: &str| {
        instance
            .canonical_trace
            .iter()
            .position(|s| s.step_id == step)
            .and_then(|c| al.trace_index(c))
    };
    let exec = Execution { artifacts: mapped };
    let resolve = exec.resolver(&instance.parameters);
    let passed = instance
        .checkpoints
        .iter()
        .filter(|cp| {
            let Some(at) = index(&cp.step_id) else { return false };
            cp.predicate.holds(&resolve) == Ok(true)
                && cp.guards.iter().all(|g| index(g).is_some_and(|t| t > at))
        })
        .count();
    ratio(passed, instance.checkpoints.len())
}

/// Fraction of deliverables reproduced by some successful artifact.
pub fn sub_question_accuracy(ep: &Episode, instance: &ProblemInstance) -> f64 {
    let deliverables: Vec<_> = instance
        .canonical_trace
        .iter()
        .filter_map(|s| Some((s, s.deliverable.as_deref()?, s.deliverable_value()?)))
        .collect();
    let hit = deliverables
        .iter()
        .filter(|(s, path, expected)| {
            ep.trace.iter().filter(|a| a.ok()).any(|a| {
                let view = json!({"input": a.input, "output": a.output});
                lookup(&view, path).is_some_and(|v| values_match(expected, v, s.equivalence, s.tolerance))
            })
        })
        .count();
    ratio(hit, deliverables.len())
}

pub fn score(ep: &Episode, instance: &ProblemInstance, judge: Option<&dyn Judge>) -> ScoreBreakdown {
    let canon = &instance.canonical_trace;
    let al = align(canon, &ep.trace);
    let appropriate = ep
        .trace
        .iter()
        .filter(|a| canon.iter().any(|s| step_matches(s, a)))
        .count();
    let tool_selection_accuracy = ratio(appropriate, ep.trace.len());
    let trace_fidelity = ratio(al.len(), instance.min_steps).min(1.0);
    let reconstructed: f64 = if ep.reconstructed { 0.5 } else { 0.0 };
    let unreconstructed = if ep.unreconstructed() { 1.0 } else { 0.0 };
    // Nothing executed earns no compliance credit.
    let compliance = if ep.trace.is_empty() {
        0.0
    } else {
        (1.0 - reconstructed - unreconstructed).max(0.0)
    };

    let final_correct = !ep.errored && ep.final_answer.as_ref().is_some_and(|a| instance.answer_matches(a));
    let sqa = sub_question_accuracy(ep, instance);

    let deliverable: Vec<usize> = (0..canon.len()).filter(|&i| canon[i].deliverable.is_some()).collect();
    let aligned = deliverable.iter().filter(|&&i| al.trace_index(i).is_some()).count();
    let mut decomposition = ratio(aligned, deliverable.len());
    let mut verification = verification_score(ep, instance, &al);
    let mut tags = Vec::new();
    if let Some(j) = judge {
        match j.approach(ep, instance, (verification, decomposition)) {
            Ok((v, d)) => (verification, decomposition) = (v, d),
            Err(_) => tags.push(JUDGE_ERROR.to_string()),
        }
    }

    let tool_usage = TOOL_SELECTION_POINTS * tool_selection_accuracy
        + FIDELITY_POINTS * trace_fidelity
        + COMPLIANCE_POINTS * compliance;
    let correctness = FINAL_POINTS * f64::from(u8::from(final_correct)) + SUB_QUESTION_POINTS * sqa;
    let approach = VERIFICATION_POINTS * verification + DECOMPOSITION_POINTS * decomposition;
    ScoreBreakdown {
        tool_usage,
        correctness,
        approach,
        partial_total: tool_usage + correctness + approach,
        accuracy: ep.marker_seen && final_correct,
        final_correct,
        sub_question_accuracy: sqa,
        tool_selection_accuracy,
        trace_fidelity,
        verification_score: verification,
        decomposition,
        compliance,
        tags,
    }
}
