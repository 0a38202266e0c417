mod common;

use common::{bundle, maven_fixed, serve_once, Script};
use serde_json::json;
use stepwise_agent::protocol::{render_answer, render_call};
use stepwise_agent::{OracleAgent, ToolCall, ViolationAgent, ViolationKind, MARKER};
use stepwise_bank::instantiate;
use stepwise_eval::{run_episode, score, Episode, EpisodeConfig, HttpJudge, JUDGE_ERROR};
use stepwise_tools::ToolRegistry;

fn cfg() -> EpisodeConfig {
    EpisodeConfig::default()
}

fn oracle_call(inst: &stepwise_bank::ProblemInstance, i: usize) -> String {
    let s = &inst.canonical_trace[i];
    render_call(&ToolCall::new(&s.step_id, &s.tool_id, s.input.clone()))
}

#[test]
fn oracle_scores_full_marks_everywhere() {
    let reg = ToolRegistry::standard();
    let mut n = 0;
    for t in bundle() {
        for seed in 0..5 {
            let inst = instantiate(&t, seed).unwrap();
            let ep = run_episode(&mut OracleAgent::new(&inst), &inst, &reg, &cfg());
            let s = score(&ep, &inst, None);
            assert_eq!(s.partial_total, 100.0, "{}: {s:?}", inst.instance_id);
            assert!(s.accuracy);
            assert!(!ep.flags.any() && !ep.reconstructed && !ep.errored);
            assert_eq!(ep.trace.len(), inst.min_steps);
            n += 1;
        }
    }
    assert_eq!(n, 60);
}

#[test]
fn empty_trace_scores_zero() {
    let inst = maven_fixed();
    let s = score(&Episode::empty("m", &inst.instance_id), &inst, None);
    assert_eq!((s.tool_usage, s.correctness, s.approach, s.partial_total), (0.0, 0.0, 0.0, 0.0));
    assert!(!s.accuracy);
}

#[test]
fn skipping_the_verification_step() {
    let inst = maven_fixed();
    let reg = ToolRegistry::standard();
    let ep = run_episode(&mut OracleAgent::skipping(&inst, &["step-04"]), &inst, &reg, &cfg());
    let s = score(&ep, &inst, None);
    // 35·1 + 20·4/5 + 15·1 ; 12 + 8·1 ; 6·0 + 4·1
    assert_eq!(s.tool_usage, 66.0);
    assert_eq!(s.correctness, 20.0);
    assert_eq!(s.approach, 4.0);
    assert_eq!(s.partial_total, 90.0);
    assert!(s.accuracy);
}

#[test]
fn multi_call_is_split_and_costs_compliance() {
    let inst = maven_fixed();
    let reg = ToolRegistry::standard();
    let ep = run_episode(&mut ViolationAgent::new(&inst, ViolationKind::MultiCall), &inst, &reg, &cfg());
    assert!(ep.flags.multi_call && ep.reconstructed);
    assert_eq!(ep.transcript[0].calls, 2);
    let steps: Vec<&str> = ep.trace.iter().map(|a| a.step_id.as_str()).collect();
    assert_eq!(steps, ["step-01", "step-02", "step-03", "step-04", "step-05"]);

    let compliant = run_episode(&mut OracleAgent::new(&inst), &inst, &reg, &cfg());
    let (a, b) = (score(&ep, &inst, None), score(&compliant, &inst, None));
    assert!(a.compliance < b.compliance);
    assert_eq!(a.compliance, 0.5);
    assert_eq!(a.partial_total, 92.5);
    assert!(ep.violations().contains(&"multi_call".to_string()));
}

#[test]
fn missing_marker_is_never_accurate() {
    let inst = maven_fixed();
    let reg = ToolRegistry::standard();
    let ep = run_episode(&mut ViolationAgent::new(&inst, ViolationKind::MissingMarker), &inst, &reg, &cfg());
    assert!(!ep.marker_seen && ep.flags.timeout);
    assert_eq!(ep.trace.len(), inst.min_steps);
    let s = score(&ep, &inst, None);
    assert!(s.final_correct);
    assert!(!s.accuracy);
}

#[test]
fn manual_arithmetic_is_inferred_from_persisted_artifacts() {
    let inst = maven_fixed();
    let reg = ToolRegistry::standard();
    let ep = run_episode(&mut ViolationAgent::new(&inst, ViolationKind::ManualArithmetic), &inst, &reg, &cfg());
    assert!(ep.flags.manual_computation);
    assert!(ep.reconstructed);
    assert_eq!(ep.claims.len(), 1);
    assert_eq!(ep.claims[0].inferred.as_deref(), Some("inferred-01"));
    let inferred = ep.trace.iter().find(|a| a.step_id == "inferred-01").unwrap();
    assert_eq!(inferred.tool_id, "numeric_evaluator");
    assert_eq!(inferred.output["value"], json!(1.0));
    let s = score(&ep, &inst, None);
    assert_eq!(s.compliance, 0.5);
    // The inferred evaluation is the canonical step-05.
    assert_eq!(s.trace_fidelity, 1.0);
}

#[test]
fn application_claim_infers_an_evaluation_of_the_derivative() {
    let inst = maven_fixed();
    let reg = ToolRegistry::standard();
    let mut agent = Script::new(
        "script",
        vec![
            oracle_call(&inst, 0),
            "Clearly v(1) = -1 at the first turning point.".into(),
            format!("{}\n{MARKER}", render_answer(&json!({"t": 1}))),
        ],
    );
    let ep = run_episode(&mut agent, &inst, &reg, &cfg());
    assert!(ep.flags.manual_computation && ep.reconstructed);
    assert_eq!(ep.trace.len(), 2);
    assert_eq!(ep.trace[0].step_id, "step-01");
    assert_eq!(ep.trace[0].output, inst.canonical_trace[0].output);
    let inf = &ep.trace[1];
    assert_eq!(inf.step_id, "inferred-01");
    assert_eq!(inf.input["expr"], inst.canonical_trace[0].output["expr"]);
    assert_eq!(inf.input["bindings"], json!({"t": 1.0}));
    assert_eq!(inf.output["value"], json!(-1.0));
}

#[test]
fn unsupported_bare_answer_ends_the_episode_flagged() {
    let inst = maven_fixed();
    let reg = ToolRegistry::standard();
    let mut agent = Script::new("script", vec!["the answer is 42 PROBLEM_COMPLETED".into()]);
    let ep = run_episode(&mut agent, &inst, &reg, &cfg());
    assert!(ep.marker_seen);
    assert_eq!(ep.transcript.len(), 1);
    assert!(ep.flags.manual_computation);
    assert!(!ep.reconstructed);
    assert!(ep.claims[0].inferred.is_none());
    let s = score(&ep, &inst, None);
    assert_eq!(s.partial_total, 0.0);
}

#[test]
fn restating_a_tool_result_is_not_manual() {
    let inst = maven_fixed();
    let reg = ToolRegistry::standard();
    let mut replies: Vec<String> = (0..inst.min_steps).map(|i| oracle_call(&inst, i)).collect();
    replies.push("So the kinetic energy at the root is 1.0 as computed.".into());
    replies.push(format!("{}\n{MARKER}", render_answer(&inst.reference_answer())));
    let ep = run_episode(&mut Script::new("script", replies), &inst, &reg, &cfg());
    assert!(!ep.flags.any(), "{:?}", ep.claims);
    assert_eq!(score(&ep, &inst, None).partial_total, 100.0);
}

#[test]
fn step_budget_cuts_the_episode() {
    let inst = maven_fixed();
    let reg = ToolRegistry::standard();
    let cfg = EpisodeConfig {
        step_budget: Some(2),
        ..EpisodeConfig::default()
    };
    let ep = run_episode(&mut OracleAgent::new(&inst), &inst, &reg, &cfg);
    assert_eq!(ep.trace.len(), 2);
    assert!(ep.flags.timeout && !ep.marker_seen);
}

#[test]
fn judge_replaces_approach_and_failures_are_tagged() {
    let inst = maven_fixed();
    let reg = ToolRegistry::standard();
    let ep = run_episode(&mut OracleAgent::new(&inst), &inst, &reg, &cfg());

    let (port, h) = serve_once("200 OK", json!({"verification_score": 0.5, "decomposition": 0.25}).to_string());
    let judge = HttpJudge::new(format!("http://127.0.0.1:{port}/judge"));
    let s = score(&ep, &inst, Some(&judge));
    assert_eq!(s.approach, 6.0 * 0.5 + 4.0 * 0.25);
    assert!(s.tags.is_empty());
    let sent = h.join().unwrap();
    assert_eq!(sent["deterministic"], json!({"verification_score": 1.0, "decomposition": 1.0}));
    assert_eq!(sent["episode"]["instance_id"], json!(inst.instance_id));

    let (port, h) = serve_once("200 OK", json!({"verification_score": 7}).to_string());
    let s = score(&ep, &inst, Some(&HttpJudge::new(format!("http://127.0.0.1:{port}/"))));
    h.join().unwrap();
    assert_eq!(s.tags, [JUDGE_ERROR]);
    assert_eq!(s.approach, 10.0);
}
