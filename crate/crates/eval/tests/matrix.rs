mod common;

use std::fs;

use common::bundle;
use stepwise_agent::{AgentFactory, ModelSpec};
use stepwise_eval::{
    aggregate, csv_string, episode_path, instantiate_all, load_episode, read_csv, run_matrix, RunConfig,
};
use stepwise_bank::ProblemInstance;
use stepwise_tools::ToolRegistry;

fn factories(specs: &[&str]) -> Vec<AgentFactory> {
    specs
        .iter()
        .map(|s| AgentFactory::new(s.parse::<ModelSpec>().unwrap()).unwrap())
        .collect()
}

fn instances() -> Vec<ProblemInstance> {
    instantiate_all(&bundle(), &[0, 1, 2, 3, 4]).unwrap()
}

const MODELS: [&str; 5] = [
    "oracle",
    "reasoner",
    "degrading:7",
    "violation:multi_call",
    "violation:manual_arithmetic",
];

#[test]
fn rows_do_not_depend_on_parallelism() {
    let inst = instances();
    let models = factories(&MODELS);
    let reg = ToolRegistry::standard();
    let one = run_matrix(&models, &inst, &reg, &RunConfig::default(), None).unwrap();
    let eight = RunConfig {
        parallelism: 8,
        ..Default::default()
    };
    let many = run_matrix(&models, &inst, &reg, &eight, None).unwrap();
    assert_eq!(one.rows.len(), 300);
    assert_eq!(csv_string(&one.rows), csv_string(&many.rows));
    let keys: Vec<(&str, &str)> = one.rows.iter().map(|r| (r.model.as_str(), r.instance_id.as_str())).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn interrupted_run_resumes_to_the_same_rows() {
    let inst = instances();
    let models = factories(&["oracle", "violation:multi_call"]);
    let reg = ToolRegistry::standard();
    let baseline = run_matrix(&models, &inst, &reg, &RunConfig::default(), None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let killed = RunConfig {
        parallelism: 8,
        resume_dir: Some(dir.path().to_path_buf()),
        stop_after: Some(37),
        ..Default::default()
    };
    let partial = run_matrix(&models, &inst, &reg, &killed, None).unwrap();
    assert_eq!((partial.fresh, partial.skipped), (37, 83));
    assert!(!partial.complete());

    let resume = RunConfig {
        stop_after: None,
        ..killed
    };
    let done = run_matrix(&models, &inst, &reg, &resume, None).unwrap();
    assert_eq!((done.resumed, done.fresh), (37, 83));
    assert_eq!(csv_string(&done.rows), csv_string(&baseline.rows));

    let again = run_matrix(&models, &inst, &reg, &resume, None).unwrap();
    assert_eq!((again.resumed, again.fresh), (120, 0));
    assert_eq!(again.rows, done.rows);
}

#[test]
fn corrupt_episode_files_are_rerun() {
    let inst: Vec<ProblemInstance> = instances().into_iter().take(2).collect();
    let models = factories(&["oracle"]);
    let reg = ToolRegistry::standard();
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        resume_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let first = run_matrix(&models, &inst, &reg, &cfg, None).unwrap();
    let path = episode_path(dir.path(), "oracle", &inst[0].instance_id);
    let text = fs::read_to_string(&path).unwrap();
    assert!(load_episode(dir.path(), "oracle", &inst[0].instance_id).is_some());
    fs::write(&path, &text[..text.len() / 2]).unwrap();
    let second = run_matrix(&models, &inst, &reg, &cfg, None).unwrap();
    assert_eq!((second.fresh, second.resumed), (1, 1));
    assert_eq!(second.rows, first.rows);
    assert_eq!(fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn degrading_accuracy_falls_with_difficulty() {
    let inst = instances();
    let reg = ToolRegistry::standard();
    let out = run_matrix(&factories(&["oracle", "degrading:7"]), &inst, &reg, &RunConfig::default(), None).unwrap();
    let text = csv_string(&out.rows);
    let report = aggregate(&read_csv(text.as_bytes()).unwrap());
    let oracle = &report.models.iter().find(|m| m.model == "oracle").unwrap();
    assert_eq!(oracle.accuracy_pct, 100.0);
    assert_eq!(oracle.mean_partial, 100.0);
    let deg = report.models.iter().find(|m| m.model == "degrading:7").unwrap();
    let acc: Vec<(usize, Option<f64>)> = deg.buckets.iter().map(|b| (b.bucket, b.accuracy_pct)).collect();
    // min_steps 3..=6 and 7 fit the capacity; 8, 9 and 10 do not; no template exceeds 10.
    assert_eq!(
        acc,
        [(6, Some(100.0)), (7, Some(100.0)), (8, Some(0.0)), (9, Some(0.0)), (10, Some(0.0)), (15, None)]
    );
    let seen: Vec<f64> = acc.iter().filter_map(|(_, a)| *a).collect();
    assert!(seen.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(deg.episodes, 60);
    assert_eq!(deg.buckets.iter().map(|b| b.episodes).sum::<usize>(), 60);
}
