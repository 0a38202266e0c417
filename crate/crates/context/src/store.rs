//! Artifact index plus append-only per-run journal.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use stepwise_tools::json::{canonical_string, lookup};
use stepwise_tools::{Diagnostics, ToolError, ToolRegistry, ToolResult};
use thiserror::Error;

use crate::wire::{CallRequest, CallResponse, QueryRequest, QueryResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextArtifact {
    pub result_id: String,
    pub run_id: String,
    pub problem_id: String,
    pub step_id: String,
    pub tool_id: String,
    pub version: String,
    pub input: Value,
    pub output: Value,
    pub diagnostics: Diagnostics,
    pub created_seq: u64,
}

impl ContextArtifact {
    pub fn result_id_for(problem_id: &str, step_id: &str) -> String {
        format!("{problem_id}-{step_id}-result")
    }

    pub fn ok(&self) -> bool {
        self.diagnostics.status != stepwise_tools::Status::Failed
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("artifact serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Artifact(ContextArtifact),
    Reset {
        run_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        problem_id: Option<String>,
        seq: u64,
    },
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("step already persisted as {result_id}")]
    Conflict { result_id: String },
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error("journal {path}: {message}")]
    Journal { path: PathBuf, message: String },
    #[error("journal io: {0}")]
    Io(#[from] std::io::Error),
}

type Key = (String, String, String);

#[derive(Default)]
struct Inner {
    next_seq: u64,
    index: BTreeMap<Key, ContextArtifact>,
    files: BTreeMap<String, File>,
}

/// Thread-safe context store. Tools run outside the lock; the uniqueness
/// check and the insert happen under it, so concurrent duplicates yield
/// exactly one success.
pub struct ContextStore {
    inner: Mutex<Inner>,
    journal_dir: Option<PathBuf>,
}

impl std::fmt::Debug for ContextStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContextStore")
            .field("journal_dir", &self.journal_dir)
            .finish_non_exhaustive()
    }
}

/// Journal file name for a run id; anything outside `[A-Za-z0-9._-]` is
/// percent-escaped so distinct ids never share a file.
pub fn journal_file_name(run_id: &str) -> String {
    let mut s = String::new();
    for b in run_id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'.' || b == b'_' || b == b'-' {
            s.push(b as char);
        } else {
            s.push_str(&format!("%{b:02X}"));
        }
    }
    s + ".jsonl"
}

impl Default for ContextStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl ContextStore {
    pub fn in_memory() -> Self {
        ContextStore {
            inner: Mutex::new(Inner::default()),
            journal_dir: None,
        }
    }

    /// Opens (creating if needed) a journal directory and replays every
    /// `*.jsonl` file in it. A torn final line, as left by a crash mid-write,
    /// is cut off; corruption anywhere else is an error.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir)?;
        let mut inner = Inner::default();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut records = Vec::new();
        for path in paths {
            records.extend(read_journal(&path)?);
        }
        records.sort_by_key(|r| match r {
            Record::Artifact(a) => a.created_seq,
            Record::Reset { seq, .. } => *seq,
        });
        for r in records {
            match r {
                Record::Artifact(a) => {
                    inner.next_seq = inner.next_seq.max(a.created_seq + 1);
                    let key = (a.run_id.clone(), a.problem_id.clone(), a.step_id.clone());
                    inner.index.insert(key, a);
                }
                Record::Reset {
                    run_id,
                    problem_id,
                    seq,
                } => {
                    inner.next_seq = inner.next_seq.max(seq + 1);
                    remove_namespace(&mut inner.index, &run_id, problem_id.as_deref());
                }
            }
        }
        Ok(ContextStore {
            inner: Mutex::new(inner),
            journal_dir: Some(dir.to_path_buf()),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn append(&self, inner: &mut Inner, run_id: &str, record: &Record) -> Result<(), StoreError> {
        let Some(dir) = &self.journal_dir else {
            return Ok(());
        };
        if !inner.files.contains_key(run_id) {
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join(journal_file_name(run_id)))?;
            inner.files.insert(run_id.to_string(), f);
        }
        let f = inner.files.get_mut(run_id).expect("just inserted");
        let mut line = canonical_string(&serde_json::to_value(record).expect("record serializes"));
        line.push('\n');
        f.write_all(line.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    /// Executes a tool call and, with `persist`, records the artifact.
    pub fn call(&self, registry: &ToolRegistry, req: &CallRequest) -> Result<CallResponse, StoreError> {
        let key = (req.run_id.clone(), req.problem_id.clone(), req.step_id.clone());
        let result_id = ContextArtifact::result_id_for(&req.problem_id, &req.step_id);
        registry.validate(&req.tool_id, &req.input)?;
        if req.persist && self.lock().index.contains_key(&key) {
            return Err(StoreError::Conflict { result_id });
        }
        let result = registry.call(&req.tool_id, &req.input)?;
        let ok = result.ok();
        if !req.persist {
            return Ok(CallResponse {
                ok,
                result_id: None,
                output: result.output,
                diagnostics: result.diagnostics,
            });
        }
        let artifact = self.persist(&req.run_id, &req.problem_id, &req.step_id, result)?;
        Ok(CallResponse {
            ok,
            result_id: Some(artifact.result_id),
            output: artifact.output,
            diagnostics: artifact.diagnostics,
        })
    }

    /// Records an already computed result under (run, problem, step).
    pub fn persist(
        &self,
        run_id: &str,
        problem_id: &str,
        step_id: &str,
        result: ToolResult,
    ) -> Result<ContextArtifact, StoreError> {
        let key = (run_id.to_string(), problem_id.to_string(), step_id.to_string());
        let result_id = ContextArtifact::result_id_for(problem_id, step_id);
        let mut inner = self.lock();
        if inner.index.contains_key(&key) {
            return Err(StoreError::Conflict { result_id });
        }
        let artifact = ContextArtifact {
            result_id,
            run_id: run_id.to_string(),
            problem_id: problem_id.to_string(),
            step_id: step_id.to_string(),
            tool_id: result.tool_id,
            version: result.version,
            input: result.input,
            output: result.output,
            diagnostics: result.diagnostics,
            created_seq: inner.next_seq,
        };
        self.append(&mut inner, run_id, &Record::Artifact(artifact.clone()))?;
        inner.next_seq += 1;
        inner.index.insert(key, artifact.clone());
        Ok(artifact)
    }

    pub fn get(&self, run_id: &str, problem_id: &str, step_id: &str) -> Option<ContextArtifact> {
        let key = (run_id.to_string(), problem_id.to_string(), step_id.to_string());
        self.lock().index.get(&key).cloned()
    }

    /// Artifacts of one problem in creation order.
    pub fn trace(&self, run_id: &str, problem_id: &str) -> Vec<ContextArtifact> {
        let inner = self.lock();
        let mut out: Vec<ContextArtifact> = inner
            .index
            .values()
            .filter(|a| a.run_id == run_id && a.problem_id == problem_id)
            .cloned()
            .collect();
        out.sort_by_key(|a| a.created_seq);
        out
    }

    /// Projects the requested dotted paths of the artifacts at `from_step`
    /// (or of every step when absent). Missing paths are left out.
    pub fn query(&self, req: &QueryRequest) -> QueryResponse {
        let matches = self
            .trace(&req.run_id, &req.problem_id)
            .into_iter()
            .filter(|a| req.query.from_step.as_ref().is_none_or(|s| *s == a.step_id))
            .map(|a| project(&a, &req.query.fields))
            .collect();
        QueryResponse { ok: true, matches }
    }

    /// Drops a problem's artifacts (or a whole run's when `problem_id` is
    /// `None`) from the index; the journal records the reset.
    pub fn reset(&self, run_id: &str, problem_id: Option<&str>) -> Result<(), StoreError> {
        let mut inner = self.lock();
        let seq = inner.next_seq;
        let record = Record::Reset {
            run_id: run_id.to_string(),
            problem_id: problem_id.map(String::from),
            seq,
        };
        self.append(&mut inner, run_id, &record)?;
        inner.next_seq += 1;
        remove_namespace(&mut inner.index, run_id, problem_id);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lock().index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn remove_namespace(index: &mut BTreeMap<Key, ContextArtifact>, run: &str, problem: Option<&str>) {
    index.retain(|(r, p, _), _| !(r == run && problem.is_none_or(|q| q == p)));
}

fn insert_path(target: &mut Map<String, Value>, path: &[&str], v: Value) {
    match path {
        [] => {}
        [last] => {
            target.insert(last.to_string(), v);
        }
        [head, rest @ ..] => {
            let child = target
                .entry(head.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            if let Value::Object(m) = child {
                insert_path(m, rest, v);
            }
        }
    }
}

pub fn project(a: &ContextArtifact, fields: &[String]) -> Value {
    let full = a.to_value();
    let mut out = Map::new();
    out.insert("result_id".into(), Value::String(a.result_id.clone()));
    for f in fields {
        if let Some(v) = lookup(&full, f) {
            let path: Vec<&str> = f.split('.').collect();
            insert_path(&mut out, &path, v.clone());
        }
    }
    Value::Object(out)
}

fn read_journal(path: &Path) -> Result<Vec<Record>, StoreError> {
    let corrupt = |message: String| StoreError::Journal {
        path: path.to_path_buf(),
        message,
    };
    let mut file = OpenOptions::new().read(true).write(true).open(path)?;
    let mut reader = BufReader::new(&mut file);
    let mut records = Vec::new();
    let mut good_len = 0u64;
    let mut line = String::new();
    let mut torn = false;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        let complete = line.ends_with('\n');
        match serde_json::from_str::<Record>(line.trim_end()) {
            Ok(r) if complete => {
                records.push(r);
                good_len += n as u64;
            }
            _ => {
                // only the final line may be torn
                let mut rest = String::new();
                if reader.read_line(&mut rest)? != 0 {
                    return Err(corrupt(format!("bad record at byte {good_len}")));
                }
                torn = true;
                break;
            }
        }
    }
    drop(reader);
    if torn {
        file.set_len(good_len)?;
        file.seek(SeekFrom::End(0))?;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::Query;
    use serde_json::json;

    fn figure_call() -> CallRequest {
        CallRequest {
            problem_id: "MAVEN-0001".into(),
            step_id: "step-01".into(),
            tool_id: "symbolic_diff".into(),
            input: json!({"expr": "A*t^3 - B*t^2 + C*t", "wrt": "t"}),
            persist: true,
            run_id: "default".into(),
        }
    }

    fn query(fields: &[&str]) -> QueryRequest {
        QueryRequest {
            problem_id: "MAVEN-0001".into(),
            query: Query {
                from_step: Some("step-01".into()),
                fields: fields.iter().map(|s| s.to_string()).collect(),
            },
            run_id: "default".into(),
        }
    }

    #[test]
    fn persist_and_conflict() {
        let reg = ToolRegistry::standard();
        let store = ContextStore::in_memory();
        let r = store.call(&reg, &figure_call()).unwrap();
        assert_eq!(r.result_id.as_deref(), Some("MAVEN-0001-step-01-result"));
        assert!(matches!(
            store.call(&reg, &figure_call()),
            Err(StoreError::Conflict { .. })
        ));
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn no_persist_leaves_store_unchanged() {
        let reg = ToolRegistry::standard();
        let store = ContextStore::in_memory();
        let mut req = figure_call();
        req.persist = false;
        let r = store.call(&reg, &req).unwrap();
        assert!(r.result_id.is_none());
        assert!(store.is_empty());
    }

    #[test]
    fn projection() {
        let reg = ToolRegistry::standard();
        let store = ContextStore::in_memory();
        store.call(&reg, &figure_call()).unwrap();
        let m = store.query(&query(&["diagnostics.type"])).matches;
        assert_eq!(
            m,
            vec![json!({"result_id": "MAVEN-0001-step-01-result", "diagnostics": {"type": "symbolic"}})]
        );
        let m = store.query(&query(&["output.nope"])).matches;
        assert_eq!(m, vec![json!({"result_id": "MAVEN-0001-step-01-result"})]);
        let mut q = query(&["output.expr"]);
        q.query.from_step = Some("step-09".into());
        assert!(store.query(&q).matches.is_empty());
    }

    #[test]
    fn failed_calls_are_persisted() {
        let reg = ToolRegistry::standard();
        let store = ContextStore::in_memory();
        let mut req = figure_call();
        req.input = json!({"expr": "A*", "wrt": "t"});
        let r = store.call(&reg, &req).unwrap();
        assert!(!r.ok);
        assert_eq!(store.trace("default", "MAVEN-0001").len(), 1);
    }

    #[test]
    fn reset_is_scoped() {
        let reg = ToolRegistry::standard();
        let store = ContextStore::in_memory();
        store.call(&reg, &figure_call()).unwrap();
        let mut other = figure_call();
        other.problem_id = "OTHER".into();
        store.call(&reg, &other).unwrap();
        store.reset("default", Some("MAVEN-0001")).unwrap();
        assert!(store.trace("default", "MAVEN-0001").is_empty());
        assert_eq!(store.trace("default", "OTHER").len(), 1);
        store.reset("default", Some("never-seen")).unwrap();
        store.reset("default", None).unwrap();
        assert!(store.is_empty());
    }

    #[test]
    fn journal_names_escape() {
        assert_eq!(journal_file_name("default"), "default.jsonl");
        assert_eq!(journal_file_name("oracle/A-s0001"), "oracle%2FA-s0001.jsonl");
    }
}
