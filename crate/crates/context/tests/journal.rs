use std::io::Write;
use std::sync::Arc;

use serde_json::json;
use stepwise_context::{CallRequest, ContextStore, Query, QueryRequest, StoreError};
use stepwise_tools::ToolRegistry;

fn call(problem: &str, step: &str, expr: &str) -> CallRequest {
    CallRequest {
        problem_id: problem.into(),
        step_id: step.into(),
        tool_id: "symbolic_diff".into(),
        input: json!({"expr": expr, "wrt": "x"}),
        persist: true,
        run_id: "default".into(),
    }
}

fn all(store: &ContextStore, problem: &str) -> String {
    let q = QueryRequest {
        problem_id: problem.into(),
        query: Query { from_step: None, fields: vec!["output.expr".into(), "created_seq".into()] },
        run_id: "default".into(),
    };
    serde_json::to_string(&store.query(&q)).unwrap()
}

enum Op {
    Call(&'static str, &'static str, &'static str),
    Reset(&'static str),
}

#[test]
fn replay_after_every_prefix_matches_live_state() {
    let ops = [
        Op::Call("P", "step-01", "x^2"),
        Op::Call("Q", "step-01", "x^3"),
        Op::Call("P", "step-02", "sin(x)"),
        Op::Reset("Q"),
        Op::Call("Q", "step-01", "x^4"),
        Op::Call("P", "step-03", "exp(x)"),
    ];
    let reg = ToolRegistry::standard();
    for prefix in 0..=ops.len() {
        let dir = tempfile::tempdir().unwrap();
        let live = ContextStore::open(dir.path()).unwrap();
        for op in &ops[..prefix] {
            match op {
                Op::Call(p, s, e) => {
                    live.call(&reg, &call(p, s, e)).unwrap();
                }
                Op::Reset(p) => live.reset("default", Some(p)).unwrap(),
            }
        }
        let replayed = ContextStore::open(dir.path()).unwrap();
        for p in ["P", "Q"] {
            assert_eq!(all(&live, p), all(&replayed, p), "prefix {prefix}");
            assert_eq!(live.trace("default", p), replayed.trace("default", p));
        }
    }
}

#[test]
fn torn_tail_is_truncated() {
    let dir = tempfile::tempdir().unwrap();
    let reg = ToolRegistry::standard();
    {
        let s = ContextStore::open(dir.path()).unwrap();
        s.call(&reg, &call("P", "step-01", "x^2")).unwrap();
    }
    let path = dir.path().join("default.jsonl");
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(br#"{"record":"artifact","result_id":"P-st"#).unwrap();
    drop(f);
    let s = ContextStore::open(dir.path()).unwrap();
    assert_eq!(s.len(), 1);
    s.call(&reg, &call("P", "step-02", "x")).unwrap();
    let again = ContextStore::open(dir.path()).unwrap();
    assert_eq!(again.trace("default", "P").len(), 2);
    assert_eq!(again.trace("default", "P")[1].created_seq, 1);
}

#[test]
fn corruption_before_the_tail_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("default.jsonl"), "garbage\n{}\n").unwrap();
    assert!(matches!(ContextStore::open(dir.path()), Err(StoreError::Journal { .. })));
}

#[test]
fn concurrent_calls_are_linearizable() {
    let reg = Arc::new(ToolRegistry::standard());
    let store = Arc::new(ContextStore::in_memory());
    let handles: Vec<_> = (0..16)
        .map(|i| {
            let (reg, store) = (reg.clone(), store.clone());
            std::thread::spawn(move || {
                // eight threads race on one step, eight take distinct steps
                let step = if i < 8 { "step-dup".to_string() } else { format!("step-{i:02}") };
                let req = CallRequest { step_id: step, ..call("P", "", "x^5") };
                store.call(&reg, &req).is_ok()
            })
        })
        .collect();
    let results: Vec<bool> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(results[..8].iter().filter(|ok| **ok).count(), 1);
    assert!(results[8..].iter().all(|ok| *ok));
    assert_eq!(store.len(), 9);
    let seqs: Vec<u64> = store.trace("default", "P").iter().map(|a| a.created_seq).collect();
    assert_eq!(seqs, (0..9).collect::<Vec<_>>());
}
