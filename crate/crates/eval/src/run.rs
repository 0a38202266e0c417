//! The model × instance matrix: parallel execution, resume, scoring.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use stepwise_agent::AgentFactory;
use stepwise_bank::{instantiate, InstanceError, ProblemInstance, ProblemTemplate};
use stepwise_tools::json::canonical_string;
use stepwise_tools::ToolRegistry;

use crate::episode::{run_episode, Episode, EpisodeConfig, DEFAULT_TIME_BUDGET};
use crate::report::Row;
use crate::score::{score, Judge};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Worker threads; 1 runs on the calling thread.
    pub parallelism: usize,
    /// Directory of finished episodes, reused instead of rerun.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_budget: Option<usize>,
    pub time_budget_ms: u64,
    /// Wall time is the only nondeterministic column, so it is off unless asked for.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Stop after this many fresh episodes, as if the process were killed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_after: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            parallelism: 1,
            resume_dir: None,
            step_budget: None,
            time_budget_ms: DEFAULT_TIME_BUDGET.as_millis() as u64,
            record_wall_time: false,
            stop_after: None,
        }
    }
}

impl RunConfig {
    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig {
            step_budget: self.step_budget,
            time_budget: Duration::from_millis(self.time_budget_ms),
            record_wall_time: self.record_wall_time,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("resume directory {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("could not build a pool of {0} threads: {1}")]
    Pool(usize, String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Sorted by (model, instance).
    pub rows: Vec<Row>,
    pub fresh: usize,
    pub resumed: usize,
    /// Jobs left undone by `stop_after`.
    pub skipped: usize,
}

impl RunOutcome {
    pub fn complete(&self) -> bool {
        self.skipped == 0
    }
}

/// Keeps model names usable as directory names.
pub fn escape_component(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || b == b'.' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    if out.starts_with('.') {
        out.replace_range(..1, "%2E");
    }
    out
}

pub fn episode_path(dir: &Path, model: &str, instance_id: &str) -> PathBuf {
    dir.join(escape_component(model)).join(format!("{}.json", escape_component(instance_id)))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Canonical JSON, written to a temporary name and renamed into place.
pub fn save_episode(dir: &Path, ep: &Episode) -> Result<(), RunError> {
    let path = episode_path(dir, &ep.model, &ep.instance_id);
    let parent = path.parent().expect("episode path has a parent");
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    let value = serde_json::to_value(ep).expect("episodes serialize");
    let tmp = path.with_extension(format!("json.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(canonical_string(&value).as_bytes()).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, &path).map_err(io_err(&path))
}

/// A finished episode, or `None` when absent or unreadable.
pub fn load_episode(dir: &Path, model: &str, instance_id: &str) -> Option<Episode> {
    let text = fs::read_to_string(episode_path(dir, model, instance_id)).ok()?;
    let ep: Episode = serde_json::from_str(&text).ok()?;
    (ep.model == model && ep.instance_id == instance_id).then_some(ep)
}

/// Instances for every template at every seed, template-major.
pub fn instantiate_all(templates: &[ProblemTemplate], seeds: &[u64]) -> Result<Vec<ProblemInstance>, InstanceError> {
    let jobs: Vec<(&ProblemTemplate, u64)> = templates
        .iter()
        .flat_map(|t| seeds.iter().map(move |s| (t, *s)))
        .collect();
    #[cfg(feature = "parallel")]
    let out = {
        use rayon::prelude::*;
        jobs.par_iter().map(|(t, s)| instantiate(t, *s)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let out = jobs.iter().map(|(t, s)| instantiate(t, *s)).collect();
    out
}

enum Done {
    Fresh(Row),
    Resumed(Row),
    Skipped,
}

struct Ctx<'a> {
    registry: &'a ToolRegistry,
    cfg: &'a RunConfig,
    episode: EpisodeConfig,
    judge: Option<&'a dyn Judge>,
    started: AtomicUsize,
}

impl Ctx<'_> {
    fn job(&self, factory: &AgentFactory, instance: &ProblemInstance) -> Result<Done, RunError> {
        let model = factory.name();
        let dir = self.cfg.resume_dir.as_deref();
        let row = |ep: &Episode| Row::new(ep, &score(ep, instance, self.judge), instance.min_steps);
        if let Some(ep) = dir.and_then(|d| load_episode(d, &model, &instance.instance_id)) {
            return Ok(Done::Resumed(row(&ep)));
        }
        if let Some(limit) = self.cfg.stop_after {
            if self.started.fetch_add(1, Ordering::SeqCst) >= limit {
                return Ok(Done::Skipped);
            }
        }
        let mut agent = factory.make(instance);
        let mut ep = run_episode(agent.as_mut(), instance, self.registry, &self.episode);
        // Rows are keyed by the factory name so specs and directories agree.
        ep.model = model;
        if let Some(d) = dir {
            save_episode(d, &ep)?;
        }
        Ok(Done::Fresh(row(&ep)))
    }
}

/// Runs every model on every instance and scores the episodes.
pub fn run_matrix(
    models: &[AgentFactory],
    instances: &[ProblemInstance],
    registry: &ToolRegistry,
    cfg: &RunConfig,
    judge: Option<&dyn Judge>,
) -> Result<RunOutcome, RunError> {
    let mut jobs: Vec<(String, &AgentFactory, &ProblemInstance)> = models
        .iter()
        .flat_map(|m| instances.iter().map(move |i| (m.name(), m, i)))
        .collect();
    jobs.sort_by(|a, b| (&a.0, &a.2.instance_id).cmp(&(&b.0, &b.2.instance_id)));
    jobs.dedup_by(|a, b| a.0 == b.0 && a.2.instance_id == b.2.instance_id);

    let ctx = Ctx {
        registry,
        cfg,
        episode: cfg.episode(),
        judge,
        started: AtomicUsize::new(0),
    };
    let results = execute(&ctx, &jobs)?;
    let mut out = RunOutcome {
        rows: Vec::with_capacity(results.len()),
        fresh: 0,
        resumed: 0,
        skipped: 0,
    };
    for r in results {
        match r {
            Done::Fresh(row) => {
                out.fresh += 1;
                out.rows.push(row);
            }
            Done::Resumed(row) => {
                out.resumed += 1;
                out.rows.push(row);
            }
            Done::Skipped => out.skipped += 1,
        }
    }
    Ok(out)
}

type Job<'a> = (String, &'a AgentFactory, &'a ProblemInstance);

#[cfg(feature = "parallel")]
fn execute(ctx: &Ctx<'_>, jobs: &[Job<'_>]) -> Result<Vec<Done>, RunError> {
    use rayon::prelude::*;
    if ctx.cfg.parallelism <= 1 {
        return jobs.iter().map(|(_, f, i)| ctx.job(f, i)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.cfg.parallelism)
        .build()
        .map_err(|e| RunError::Pool(ctx.cfg.parallelism, e.to_string()))?;
    pool.install(|| jobs.par_iter().map(|(_, f, i)| ctx.job(f, i)).collect())
}

#[cfg(not(feature = "parallel"))]
fn execute(ctx: &Ctx<'_>, jobs: &[Job<'_>]) -> Result<Vec<Done>, RunError> {
    jobs.iter().map(|(_, f, i)| ctx.job(f, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escaping_keeps_names_flat() {
        assert_eq!(escape_component("oracle"), "oracle");
        assert_eq!(escape_component("cassette:/tmp/x.jsonl"), "cassette%3A%2Ftmp%2Fx.jsonl");
        assert_eq!(escape_component(".."), "%2E.");
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig {
            parallelism: 8,
            resume_dir: Some("/tmp/r".into()),
            step_budget: Some(4),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert_eq!(cfg.episode().time_budget, DEFAULT_TIME_BUDGET);
    }
}
