//! The `stepwise` command line. Everything is validated before the first
//! file is written; exit codes are 0 on success, 1 for invalid input and 2
//! for failures while running.

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;
use stepwise_agent::{AgentFactory, ModelSpec};
use stepwise_bank::{bundle_load_checked, instantiate, validate, ProblemInstance, ProblemTemplate};
use stepwise_context::ServerConfig;
use stepwise_eval::{
    aggregate, read_csv, run_matrix, score, write_csv, Episode, HttpJudge, Judge, Row, RunConfig,
};
use stepwise_tools::json::canonical_string;
use stepwise_tools::ToolRegistry;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "stepwise", version, about = "Tool-using agent evaluation on multi-step problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the context server.
    Serve(ServeArgs),
    /// Instantiate every template at the given seeds.
    Gen(GenArgs),
    /// Run models over the instance matrix and write results.csv.
    Eval(EvalArgs),
    /// Re-score saved episode files.
    Score(ScoreArgs),
    /// Aggregate a results CSV into summary and bucket tables.
    Report(ReportArgs),
    /// Check templates under perturbation, and generated instances against their templates.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8765")]
    pub listen: String,
    /// Journal directory; an existing journal is replayed on start.
    #[arg(long)]
    pub journal: Option<PathBuf>,
    /// Tool manifest restricting the registry.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Seeds: `0..5`, `3`, or a comma list mixing both.
    #[arg(long, default_value = "0..5")]
    pub seed: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, default_value = "0..5")]
    pub seed: String,
    /// Comma-separated model specs, e.g. `oracle,reasoner,degrading:7`.
    #[arg(long, default_value = "oracle")]
    pub models: String,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Episode directory to resume from; defaults to `<out>/episodes`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Responses allowed per episode; default three per canonical step.
    #[arg(long)]
    pub step_budget: Option<usize>,
    /// Seconds allowed for one response.
    #[arg(long, default_value_t = 10.0)]
    pub time_budget: f64,
    #[arg(long)]
    pub judge_endpoint: Option<String>,
    /// Record wall time per episode (makes the CSV nondeterministic).
    #[arg(long)]
    pub wall_time: bool,
    /// Stop after this many fresh episodes without writing results.
    #[arg(long, hide = true)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Episode files, or directories searched recursively for `*.json`.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub judge_endpoint: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Seeds per template for the perturbation check.
    #[arg(long, default_value_t = 25)]
    pub seeds: usize,
    /// Instance files written by `gen`, checked to regenerate identically.
    #[arg(long)]
    pub instances: Option<PathBuf>,
}

pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = |part: &str| invalid(format!("bad seed {part:?} in --seed {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad(part))?;
                let b: u64 = b.trim().parse().map_err(|_| bad(part))?;
                if b <= a {
                    return Err(bad(part));
                }
                out.extend(a..b);
            }
            None => out.push(part.parse().map_err(|_| bad(part))?),
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(invalid(format!("--seed {text:?} names no seeds")));
    }
    Ok(out)
}

pub fn parse_models(text: &str) -> Result<Vec<AgentFactory>, CliError> {
    let mut seen = BTreeMap::new();
    for spec in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parsed: ModelSpec = spec.parse().map_err(|e| invalid(format!("unknown model {spec:?}: {e}")))?;
        let factory = AgentFactory::new(parsed).map_err(|e| invalid(e.to_string()))?;
        seen.insert(factory.name(), factory);
    }
    if seen.is_empty() {
        return Err(invalid("--models names no models"));
    }
    Ok(seen.into_values().collect())
}

fn load_bundle(dir: &Path) -> Result<Vec<ProblemTemplate>, CliError> {
    bundle_load_checked(dir).map_err(|e| invalid(format!("bundle {}: {e}", dir.display())))
}

fn instances(templates: &[ProblemTemplate], seeds: &[u64]) -> Result<Vec<ProblemInstance>, CliError> {
    stepwise_eval::instantiate_all(templates, seeds).map_err(|e| runtime(e.to_string()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn judge(endpoint: &Option<String>) -> Option<HttpJudge> {
    endpoint.as_ref().map(HttpJudge::new).or_else(HttpJudge::from_env)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve(a) => serve(a),
        Command::Gen(a) => gen(a),
        Command::Eval(a) => eval(a),
        Command::Score(a) => score_cmd(a),
        Command::Report(a) => report(a),
        Command::Validate(a) => validate_cmd(a),
    }
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let listen: SocketAddr = a
        .listen
        .parse()
        .map_err(|e| invalid(format!("--listen {:?}: {e}", a.listen)))?;
    let cfg = ServerConfig {
        listen,
        journal_dir: a.journal,
        manifest: a.manifest,
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| runtime(e.to_string()))?;
    rt.block_on(async {
        let state = std::sync::Arc::new(cfg.build_state().map_err(runtime)?);
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .map_err(|e| runtime(format!("cannot listen on {listen}: {e}")))?;
        eprintln!("listening on {}", listener.local_addr().map_err(|e| runtime(e.to_string()))?);
        stepwise_context::server::serve_on(listener, state).await.map_err(runtime)
    })
}

fn gen(a: GenArgs) -> Result<(), CliError> {
    let seeds = parse_seeds(&a.seed)?;
    let templates = load_bundle(&a.bundle)?;
    let all = instances(&templates, &seeds)?;
    for inst in &all {
        write(&a.out.join(format!("{}.json", inst.instance_id)), &inst.to_json())?;
    }
    eprintln!("wrote {} instances to {}", all.len(), a.out.display());
    Ok(())
}

/// Provenance written next to the results.
#[derive(Debug, Serialize)]
pub struct EvalManifest {
    pub bundle: PathBuf,
    pub seeds: Vec<u64>,
    pub models: Vec<String>,
    pub run: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_endpoint: Option<String>,
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let seeds = parse_seeds(&a.seed)?;
    let models = parse_models(&a.models)?;
    if a.parallel == 0 {
        return Err(invalid("--parallel must be at least 1"));
    }
    if a.step_budget == Some(0) {
        return Err(invalid("--step-budget must be at least 1"));
    }
    if !(a.time_budget.is_finite() && a.time_budget > 0.0) {
        return Err(invalid(format!("--time-budget {} is not a positive number of seconds", a.time_budget)));
    }
    let templates = load_bundle(&a.bundle)?;
    let cfg = RunConfig {
        parallelism: a.parallel,
        resume_dir: Some(a.resume.clone().unwrap_or_else(|| a.out.join("episodes"))),
        step_budget: a.step_budget,
        time_budget_ms: (a.time_budget * 1000.0).round() as u64,
        record_wall_time: a.wall_time,
        stop_after: a.stop_after,
    };
    let manifest = EvalManifest {
        bundle: a.bundle.clone(),
        seeds: seeds.clone(),
        models: models.iter().map(AgentFactory::name).collect(),
        run: RunConfig { stop_after: None, ..cfg.clone() },
        judge_endpoint: a.judge_endpoint.clone(),
    };

    let all = instances(&templates, &seeds)?;
    let manifest_json = serde_json::to_value(&manifest).expect("manifest serializes");
    write(&a.out.join("run_config.json"), &canonical_string(&manifest_json))?;
    let registry = ToolRegistry::standard();
    let judge = judge(&a.judge_endpoint);
    let outcome = run_matrix(&models, &all, &registry, &cfg, judge.as_ref().map(|j| j as &dyn Judge))
        .map_err(|e| runtime(e.to_string()))?;
    if !outcome.complete() {
        return Err(runtime(format!(
            "stopped after {} fresh episodes; {} left for --resume",
            outcome.fresh, outcome.skipped
        )));
    }
    write_rows(&a.out.join("results.csv"), &outcome.rows)?;
    eprintln!(
        "{} episodes ({} fresh, {} resumed) -> {}",
        outcome.rows.len(),
        outcome.fresh,
        outcome.resumed,
        a.out.join("results.csv").display()
    );
    Ok(())
}

fn write_rows(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).map_err(|e| runtime(e.to_string()))?;
    write(path, &String::from_utf8(buf).expect("csv is utf-8"))
}

fn json_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for p in entries {
            if p.is_dir() || p.extension().is_some_and(|x| x == "json") {
                json_files(&p, out)?;
            }
        }
        Ok(())
    } else if path.is_file() {
        out.push(path.to_path_buf());
        Ok(())
    } else {
        Err(invalid(format!("{}: no such file or directory", path.display())))
    }
}

/// Splits `<template>-s<seed>` back into its parts.
pub fn parse_instance_id(id: &str) -> Option<(&str, u64)> {
    let (t, s) = id.rsplit_once("-s")?;
    Some((t, s.parse().ok()?))
}

fn score_cmd(a: ScoreArgs) -> Result<(), CliError> {
    let templates = load_bundle(&a.bundle)?;
    let mut files = Vec::new();
    for p in &a.traces {
        json_files(p, &mut files)?;
    }
    let mut episodes = Vec::new();
    for f in &files {
        let text = fs::read_to_string(f).map_err(|e| invalid(format!("{}: {e}", f.display())))?;
        let ep: Episode = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", f.display())))?;
        let (tid, seed) = parse_instance_id(&ep.instance_id)
            .ok_or_else(|| invalid(format!("{}: instance id {:?} is not <template>-s<seed>", f.display(), ep.instance_id)))?;
        let template = templates
            .iter()
            .find(|t| t.id == tid)
            .ok_or_else(|| invalid(format!("{}: template {tid} is not in the bundle", f.display())))?;
        episodes.push((ep, template, seed));
    }
    let judge = judge(&a.judge_endpoint);
    let mut rows = Vec::new();
    let mut cache: BTreeMap<String, ProblemInstance> = BTreeMap::new();
    for (ep, template, seed) in episodes {
        if !cache.contains_key(&ep.instance_id) {
            let inst = instantiate(template, seed).map_err(|e| runtime(e.to_string()))?;
            cache.insert(ep.instance_id.clone(), inst);
        }
        let inst = &cache[&ep.instance_id];
        let s = score(&ep, inst, judge.as_ref().map(|j| j as &dyn Judge));
        rows.push(Row::new(&ep, &s, inst.min_steps));
    }
    rows.sort_by(|a, b| (&a.model, &a.instance_id).cmp(&(&b.model, &b.instance_id)));
    match &a.out {
        Some(p) => write_rows(p, &rows),
        None => write_csv(&rows, std::io::stdout().lock()).map_err(|e| runtime(e.to_string())),
    }
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let file = fs::File::open(&a.csv).map_err(|e| invalid(format!("{}: {e}", a.csv.display())))?;
    let rows = read_csv(file).map_err(|e| invalid(format!("{}: {e}", a.csv.display())))?;
    let r = aggregate(&rows);
    write(&a.out.join("summary.csv"), &r.summary_csv())?;
    write(&a.out.join("buckets.csv"), &r.buckets_csv())?;
    let json = serde_json::to_value(&r).expect("report serializes");
    write(&a.out.join("report.json"), &canonical_string(&json))?;
    Ok(())
}

fn validate_cmd(a: ValidateArgs) -> Result<(), CliError> {
    let templates = load_bundle(&a.bundle)?;
    let mut problems = Vec::new();
    for t in &templates {
        let rep = validate(t, a.seeds);
        for f in rep.failures() {
            problems.push(format!("{}: {f:?}", t.id));
        }
        eprintln!("{}: {} seeds, {}", t.id, a.seeds, if rep.stable() { "stable" } else { "UNSTABLE" });
    }
    if let Some(dir) = &a.instances {
        let mut files = Vec::new();
        json_files(dir, &mut files)?;
        for f in &files {
            let text = fs::read_to_string(f).map_err(|e| invalid(format!("{}: {e}", f.display())))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", f.display())))?;
            let tid = v["template_id"].as_str().unwrap_or_default();
            let Some(t) = templates.iter().find(|t| t.id == tid) else {
                problems.push(format!("{}: unknown template {tid:?}", f.display()));
                continue;
            };
            let Some(seed) = v["seed"].as_u64() else {
                problems.push(format!("{}: no seed", f.display()));
                continue;
            };
            match instantiate(t, seed) {
                Ok(inst) if inst.to_json() == text => {}
                Ok(_) => problems.push(format!("{}: does not regenerate from {tid} seed {seed}", f.display())),
                Err(e) => problems.push(format!("{}: {e}", f.display())),
            }
        }
        eprintln!("{} instance files checked", files.len());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(invalid(problems.join("\n")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..5").unwrap(), [0, 1, 2, 3, 4]);
        assert_eq!(parse_seeds("7, 2..4,2").unwrap(), [2, 3, 7]);
        assert!(parse_seeds("5..5").is_err());
        assert!(parse_seeds("x").is_err());
        assert!(parse_seeds("").is_err());
    }

    #[test]
    fn model_lists() {
        let m = parse_models("reasoner,oracle,oracle").unwrap();
        assert_eq!(m.iter().map(AgentFactory::name).collect::<Vec<_>>(), ["oracle", "reasoner"]);
        let e = parse_models("gpt-9").err().unwrap();
        assert_eq!(e.code(), 1);
    }

    #[test]
    fn instance_ids_split() {
        assert_eq!(parse_instance_id("MAVEN-0001-s0004"), Some(("MAVEN-0001", 4)));
        assert_eq!(parse_instance_id("nope"), None);
    }
}
