//! Running one agent on one instance, and repairing the trace afterwards.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use stepwise_agent::{Agent, Observation, StepResponse};
use stepwise_bank::{numbers_close, ProblemInstance};
use stepwise_context::{CallRequest, ContextArtifact, ContextStore};
use stepwise_tools::{Diagnostics, ToolRegistry};

use crate::enforce::{enforce, json_numbers, supported, Claim, MALFORMED_CALL, SUPPORT_TOLERANCE};

pub const DEFAULT_TIME_BUDGET: Duration = Duration::from_secs(10);
pub const AGENT_ERROR: &str = "AGENT_ERROR";
pub const ABSTAIN: &str = "ABSTAIN";
pub const TIME_BUDGET: &str = "TIME_BUDGET";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub multi_call: bool,
    pub manual_computation: bool,
    pub timeout: bool,
}

impl Flags {
    pub fn any(&self) -> bool {
        self.multi_call || self.manual_computation || self.timeout
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub text: String,
    pub calls: usize,
    pub malformed: usize,
    /// Trace length before this response's calls ran.
    pub trace_before: usize,
}

/// An unsupported asserted number and, if found, the step that explains it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualClaim {
    pub turn: usize,
    #[serde(flatten)]
    pub claim: Claim,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inferred: Option<String>,
}

/// Every field defaults, so a bare `{model, instance_id, trace}` export loads.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Episode {
    pub model: String,
    pub instance_id: String,
    pub transcript: Vec<Turn>,
    /// Persisted artifacts in execution order, inferred steps included.
    pub trace: Vec<ContextArtifact>,
    pub marker_seen: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<Value>,
    pub flags: Flags,
    pub reconstructed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub claims: Vec<ManualClaim>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    pub errored: bool,
    #[serde(default)]
    pub wall_time_ms: u64,
}

impl Episode {
    pub fn empty(model: &str, instance_id: &str) -> Self {
        Episode {
            model: model.into(),
            instance_id: instance_id.into(),
            ..Default::default()
        }
    }

    fn tag(&mut self, t: &str) {
        if !self.tags.iter().any(|x| x == t) {
            self.tags.push(t.to_string());
        }
    }

    /// A violation that reconstruction could not explain.
    pub fn unreconstructed(&self) -> bool {
        self.tags.iter().any(|t| t == MALFORMED_CALL) || self.claims.iter().any(|c| c.inferred.is_none())
    }

    /// Sorted violation and diagnostic labels, as written to CSV.
    pub fn violations(&self) -> Vec<String> {
        let mut v: Vec<String> = [
            (self.flags.multi_call, "multi_call"),
            (self.flags.manual_computation, "manual_computation"),
            (self.flags.timeout, "timeout"),
            (self.errored, "errored"),
        ]
        .into_iter()
        .filter(|(on, _)| *on)
        .map(|(_, s)| s.to_string())
        .chain(self.tags.iter().cloned())
        .collect();
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    /// Responses allowed; `None` means three per canonical step.
    pub step_budget: Option<usize>,
    /// Wall clock allowed for one response and its tool call.
    pub time_budget: Duration,
    pub record_wall_time: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            step_budget: None,
            time_budget: DEFAULT_TIME_BUDGET,
            record_wall_time: false,
        }
    }
}

impl EpisodeConfig {
    pub fn budget(&self, instance: &ProblemInstance) -> usize {
        self.step_budget.unwrap_or(3 * instance.min_steps)
    }
}

/// Numbers already produced by tools.
fn output_numbers(trace: &[ContextArtifact]) -> Vec<f64> {
    let mut out = Vec::new();
    for a in trace {
        json_numbers(&a.output, &mut out);
    }
    out
}

/// Whether a claim restates a known result. A claim that shows a
/// computation (bindings or an argument) needs an evaluator step with the
/// same value over the same inputs; a bare number only needs to appear in
/// some output.
pub fn claim_supported(claim: &Claim, trace: &[ContextArtifact]) -> bool {
    if claim.arg.is_none() && claim.bindings.is_empty() {
        return supported(claim.value, &output_numbers(trace));
    }
    let given: Vec<f64> = claim.arg.into_iter().chain(claim.bindings.values().copied()).collect();
    trace.iter().filter(|a| a.tool_id == "numeric_evaluator").any(|a| {
        let mut inputs = Vec::new();
        json_numbers(&a.input["bindings"], &mut inputs);
        a.output["value"].as_f64().is_some_and(|v| supported(claim.value, &[v]))
            && given.iter().all(|g| supported(*g, &inputs))
    })
}

/// Runs `agent` on `instance` in a private namespace of a fresh store.
pub fn run_episode(
    agent: &mut dyn Agent,
    instance: &ProblemInstance,
    registry: &ToolRegistry,
    cfg: &EpisodeConfig,
) -> Episode {
    let started = Instant::now();
    let store = ContextStore::in_memory();
    let model = agent.name().to_string();
    let pid = instance.instance_id.clone();
    let budget = cfg.budget(instance);
    let mut ep = Episode::empty(&model, &pid);
    let mut obs = Observation::initial(instance, registry.descriptors(), budget);

    for turn in 0..budget {
        let t0 = Instant::now();
        let text = match agent.respond(&obs) {
            Ok(t) => t,
            Err(e) => {
                ep.errored = true;
                ep.tag(AGENT_ERROR);
                ep.transcript.push(Turn {
                    text: format!("error: {e}"),
                    calls: 0,
                    malformed: 0,
                    trace_before: store.trace(&model, &pid).len(),
                });
                break;
            }
        };
        let verdict = enforce(&text);
        let trace_before = store.trace(&model, &pid).len();
        ep.transcript.push(Turn {
            text,
            calls: verdict.calls.len(),
            malformed: verdict.malformed.len(),
            trace_before,
        });
        if !verdict.malformed.is_empty() {
            ep.tag(MALFORMED_CALL);
        }
        if verdict.multi_call() {
            ep.flags.multi_call = true;
        }
        for call in &verdict.calls {
            let req = CallRequest {
                problem_id: pid.clone(),
                step_id: call.step_id.clone(),
                tool_id: call.tool_id.clone(),
                input: call.input.clone(),
                persist: call.persist,
                run_id: model.clone(),
            };
            let resp = match store.call(registry, &req) {
                Ok(r) => StepResponse {
                    step_id: call.step_id.clone(),
                    tool_id: call.tool_id.clone(),
                    ok: r.ok,
                    result_id: r.result_id,
                    output: r.output,
                    diagnostics: r.diagnostics,
                },
                Err(e) => StepResponse {
                    step_id: call.step_id.clone(),
                    tool_id: call.tool_id.clone(),
                    ok: false,
                    result_id: None,
                    output: Value::Null,
                    diagnostics: Diagnostics::failed("REJECTED", e.to_string()),
                },
            };
            obs.last_response = Some(resp);
        }
        if let Some(a) = verdict.final_answer.clone() {
            ep.final_answer = Some(a);
        }
        if verdict.calls.is_empty() && verdict.malformed.is_empty() {
            let trace = store.trace(&model, &pid);
            let fresh: Vec<Claim> = verdict
                .claims
                .into_iter()
                .filter(|c| !claim_supported(c, &trace))
                .collect();
            if !fresh.is_empty() {
                ep.flags.manual_computation = true;
                ep.claims.extend(fresh.into_iter().map(|claim| ManualClaim {
                    turn,
                    claim,
                    inferred: None,
                }));
            }
        }
        if verdict.marker {
            ep.marker_seen = true;
            break;
        }
        if t0.elapsed() > cfg.time_budget {
            ep.flags.timeout = true;
            ep.tag(TIME_BUDGET);
            break;
        }
        let trace = store.trace(&model, &pid);
        obs.result_ids = trace.into_iter().map(|a| a.result_id).collect();
        obs.remaining_steps = budget - turn - 1;
    }
    if !ep.marker_seen && !ep.errored {
        ep.flags.timeout = true;
    }
    if ep.final_answer.as_ref().is_some_and(|a| a.get(ABSTAIN).is_some()) {
        ep.errored = true;
        ep.tag(ABSTAIN);
    }
    ep.trace = store.trace(&model, &pid);
    reconstruct(&mut ep, registry);
    if cfg.record_wall_time {
        ep.wall_time_ms = started.elapsed().as_millis() as u64;
    }
    ep
}

fn candidate_exprs(trace: &[ContextArtifact]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for a in trace {
        for v in [a.output.get("expr"), a.input.get("expr")].into_iter().flatten() {
            if let Some(s) = v.as_str() {
                if !out.iter().any(|x| x == s) {
                    out.push(s.to_string());
                }
            }
        }
    }
    out
}

/// Finds one numeric_evaluator call over earlier artifacts that reproduces
/// the claimed number.
pub fn infer_call(claim: &Claim, earlier: &[ContextArtifact], registry: &ToolRegistry) -> Option<Value> {
    for expr in candidate_exprs(earlier) {
        let Ok(parsed) = stepwise_expr::parse(&expr) else { continue };
        let symbols = parsed.free_symbols();
        let bindings: BTreeMap<String, f64> = match claim.arg {
            Some(x) if symbols.len() == 1 => symbols.iter().map(|s| (s.clone(), x)).collect(),
            Some(_) => continue,
            None if !symbols.is_empty() && symbols.iter().all(|s| claim.bindings.contains_key(s)) => {
                symbols.iter().map(|s| (s.clone(), claim.bindings[s])).collect()
            }
            None => continue,
        };
        let input = json!({"expr": expr, "bindings": bindings});
        let Ok(result) = registry.call("numeric_evaluator", &input) else { continue };
        if let Some(v) = result.output.get("value").and_then(Value::as_f64) {
            if result.ok() && numbers_close(claim.value, v, SUPPORT_TOLERANCE) {
                return Some(input);
            }
        }
    }
    None
}

/// Splits multi-call responses (already executed in written order) and
/// replaces explainable manual claims with inferred evaluator steps.
/// Existing artifacts are never modified.
pub fn reconstruct(ep: &mut Episode, registry: &ToolRegistry) {
    let mut inserted = 0;
    for i in 0..ep.claims.len() {
        if ep.claims[i].inferred.is_some() {
            continue;
        }
        let turn = ep.claims[i].turn;
        let at = ep.transcript[turn].trace_before + inserted;
        let Some(input) = infer_call(&ep.claims[i].claim, &ep.trace[..at], registry) else {
            continue;
        };
        let Ok(result) = registry.call("numeric_evaluator", &input) else { continue };
        inserted += 1;
        let step_id = format!("inferred-{inserted:02}");
        let artifact = ContextArtifact {
            result_id: ContextArtifact::result_id_for(&ep.instance_id, &step_id),
            run_id: ep.model.clone(),
            problem_id: ep.instance_id.clone(),
            step_id: step_id.clone(),
            tool_id: result.tool_id,
            version: result.version,
            input: result.input,
            output: result.output,
            diagnostics: result.diagnostics,
            created_seq: at.checked_sub(1).map_or(0, |j| ep.trace[j].created_seq),
        };
        ep.trace.insert(at, artifact);
        ep.claims[i].inferred = Some(step_id);
    }
    ep.reconstructed = ep.flags.multi_call || ep.claims.iter().any(|c| c.inferred.is_some());
}
