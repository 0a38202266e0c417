mod common;

use std::sync::OnceLock;

use common::bundle;
use proptest::prelude::*;
use serde_json::json;
use stepwise_agent::OracleAgent;
use stepwise_bank::{instantiate, ProblemInstance};
use stepwise_eval::{run_episode, score, Episode, EpisodeConfig, ScoreBreakdown};
use stepwise_tools::ToolRegistry;

fn oracle_runs() -> &'static Vec<(ProblemInstance, Episode)> {
    static RUNS: OnceLock<Vec<(ProblemInstance, Episode)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let reg = ToolRegistry::standard();
        bundle()
            .iter()
            .map(|t| {
                let inst = instantiate(t, 0).unwrap();
                let ep = run_episode(&mut OracleAgent::new(&inst), &inst, &reg, &EpisodeConfig::default());
                (inst, ep)
            })
            .collect()
    })
}

fn keep(ep: &Episode, mask: &[bool]) -> Episode {
    let mut out = ep.clone();
    out.trace = ep
        .trace
        .iter()
        .zip(mask.iter().chain(std::iter::repeat(&true)))
        .filter(|(_, k)| **k)
        .map(|(a, _)| a.clone())
        .collect();
    out
}

fn check_bounds(s: &ScoreBreakdown) {
    let eps = 1e-9;
    assert!((0.0..=70.0 + eps).contains(&s.tool_usage), "{s:?}");
    assert!((0.0..=20.0 + eps).contains(&s.correctness), "{s:?}");
    assert!((0.0..=10.0 + eps).contains(&s.approach), "{s:?}");
    assert!((s.partial_total - (s.tool_usage + s.correctness + s.approach)).abs() < eps);
    for r in [
        s.sub_question_accuracy,
        s.tool_selection_accuracy,
        s.trace_fidelity,
        s.verification_score,
        s.decomposition,
        s.compliance,
    ] {
        assert!((0.0..=1.0).contains(&r), "{s:?}");
    }
    assert!(!s.accuracy || s.final_correct);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scores_stay_in_range(
        which in 0usize..12,
        mask in proptest::collection::vec(any::<bool>(), 0..12),
        multi in any::<bool>(),
        manual in any::<bool>(),
        errored in any::<bool>(),
        marker in any::<bool>(),
        answer in prop_oneof![Just(None), Just(Some(json!({}))), (-1e6f64..1e6).prop_map(|x| Some(json!({"x": x})))],
    ) {
        let (inst, full) = &oracle_runs()[which];
        let mut ep = keep(full, &mask);
        ep.flags.multi_call = multi;
        ep.flags.manual_computation = manual;
        ep.reconstructed = multi;
        ep.errored = errored;
        ep.marker_seen = marker;
        if let Some(a) = answer {
            ep.final_answer = Some(a);
        }
        check_bounds(&score(&ep, inst, None));
    }

    #[test]
    fn deleting_a_step_never_raises_the_score(
        which in 0usize..12,
        mask in proptest::collection::vec(any::<bool>(), 0..12),
        drop in 0usize..12,
        multi in any::<bool>(),
    ) {
        let (inst, full) = &oracle_runs()[which];
        let mut base = keep(full, &mask);
        base.flags.multi_call = multi;
        base.reconstructed = multi;
        prop_assume!(!base.trace.is_empty());
        let mut fewer = base.clone();
        fewer.trace.remove(drop % base.trace.len());
        let (a, b) = (score(&base, inst, None), score(&fewer, inst, None));
        prop_assert!(b.partial_total <= a.partial_total + 1e-9, "{a:?} vs {b:?}");
        prop_assert!(b.trace_fidelity <= a.trace_fidelity);
        prop_assert!(b.sub_question_accuracy <= a.sub_question_accuracy);
    }

    #[test]
    fn scoring_is_a_pure_function(which in 0usize..12, mask in proptest::collection::vec(any::<bool>(), 0..12)) {
        let (inst, full) = &oracle_runs()[which];
        let ep = keep(full, &mask);
        let text = serde_json::to_string(&ep).unwrap();
        let back: Episode = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(score(&ep, inst, None), score(&back, inst, None));
    }
}

#[test]
fn full_oracle_trace_is_the_maximum() {
    for (inst, ep) in oracle_runs() {
        let s = score(ep, inst, None);
        check_bounds(&s);
        assert_eq!(s.partial_total, 100.0, "{}", inst.instance_id);
    }
}
