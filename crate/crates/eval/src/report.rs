//! Result rows, their CSV form, and per-model aggregates.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::episode::Episode;
use crate::score::ScoreBreakdown;

/// Difficulty buckets over `min_steps`; the ends absorb everything beyond.
pub const BUCKETS: [usize; 6] = [6, 7, 8, 9, 10, 15];

pub fn bucket_of(min_steps: usize) -> usize {
    match min_steps {
        0..=6 => 6,
        7..=10 => min_steps,
        _ => 15,
    }
}

/// One CSV row. Scores are kept as the fixed-precision text that is
/// written, so re-reading a CSV reproduces it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub model: String,
    pub instance_id: String,
    pub accuracy: bool,
    pub partial_total: String,
    pub tool_usage: String,
    pub correctness: String,
    pub approach: String,
    pub trace_fidelity: String,
    pub verification_score: String,
    pub reconstructed: bool,
    pub violations: String,
    pub min_steps: usize,
    pub wall_time_ms: u64,
}

fn fixed(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

impl Row {
    pub fn new(ep: &Episode, s: &ScoreBreakdown, min_steps: usize) -> Self {
        let mut violations = ep.violations();
        violations.extend(s.tags.iter().cloned());
        violations.sort();
        violations.dedup();
        Row {
            model: ep.model.clone(),
            instance_id: ep.instance_id.clone(),
            accuracy: s.accuracy,
            partial_total: fixed(s.partial_total),
            tool_usage: fixed(s.tool_usage),
            correctness: fixed(s.correctness),
            approach: fixed(s.approach),
            trace_fidelity: fixed(s.trace_fidelity),
            verification_score: fixed(s.verification_score),
            reconstructed: ep.reconstructed,
            violations: violations.join(";"),
            min_steps,
            wall_time_ms: ep.wall_time_ms,
        }
    }

    pub fn partial(&self) -> f64 {
        self.partial_total.parse().unwrap_or(0.0)
    }

    fn violation_list(&self) -> impl Iterator<Item = &str> {
        self.violations.split(';').filter(|v| !v.is_empty())
    }

    /// Ended with the marker rather than by budget or error.
    pub fn completed(&self) -> bool {
        !self.violation_list().any(|v| v == "timeout" || v == "errored")
    }
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "model",
            "instance_id",
            "accuracy",
            "partial_total",
            "tool_usage",
            "correctness",
            "approach",
            "trace_fidelity",
            "verification_score",
            "reconstructed",
            "violations",
            "min_steps",
            "wall_time_ms",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[Row]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<Row>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub bucket: usize,
    pub episodes: usize,
    /// `None` for an empty bucket.
    pub accuracy_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub episodes: usize,
    pub mean_partial: f64,
    pub median_partial: f64,
    pub accuracy_pct: f64,
    pub completion_pct: f64,
    pub violations: BTreeMap<String, usize>,
    pub buckets: Vec<BucketStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub models: Vec<ModelSummary>,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

pub fn aggregate(rows: &[Row]) -> Report {
    let mut by_model: BTreeMap<&str, Vec<&Row>> = BTreeMap::new();
    for r in rows {
        by_model.entry(&r.model).or_default().push(r);
    }
    let models = by_model
        .into_iter()
        .map(|(model, rs)| {
            let n = rs.len();
            let partials: Vec<f64> = rs.iter().map(|r| r.partial()).collect();
            let mut violations = BTreeMap::new();
            for r in &rs {
                for v in r.violation_list() {
                    *violations.entry(v.to_string()).or_insert(0) += 1;
                }
            }
            let buckets = BUCKETS
                .iter()
                .map(|&b| {
                    let inb: Vec<&&Row> = rs.iter().filter(|r| bucket_of(r.min_steps) == b).collect();
                    let acc = inb.iter().filter(|r| r.accuracy).count();
                    BucketStat {
                        bucket: b,
                        episodes: inb.len(),
                        accuracy_pct: (!inb.is_empty()).then(|| pct(acc, inb.len())),
                    }
                })
                .collect();
            ModelSummary {
                model: model.to_string(),
                episodes: n,
                mean_partial: partials.iter().sum::<f64>() / n as f64,
                median_partial: median(partials),
                accuracy_pct: pct(rs.iter().filter(|r| r.accuracy).count(), n),
                completion_pct: pct(rs.iter().filter(|r| r.completed()).count(), n),
                violations,
                buckets,
            }
        })
        .collect();
    Report { models }
}

impl Report {
    /// `model,episodes,mean_partial,median_partial,accuracy_pct,completion_pct,violations`
    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model",
            "episodes",
            "mean_partial",
            "median_partial",
            "accuracy_pct",
            "completion_pct",
            "violations",
        ])
        .expect("in-memory write");
        for m in &self.models {
            let hist: Vec<String> = m.violations.iter().map(|(k, v)| format!("{k}={v}")).collect();
            w.write_record([
                m.model.clone(),
                m.episodes.to_string(),
                fixed(m.mean_partial),
                fixed(m.median_partial),
                fixed(m.accuracy_pct),
                fixed(m.completion_pct),
                hist.join(";"),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Accuracy against difficulty: `model,bucket,episodes,accuracy_pct`,
    /// with an empty accuracy for empty buckets.
    pub fn buckets_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "bucket", "episodes", "accuracy_pct"])
            .expect("in-memory write");
        for m in &self.models {
            for b in &m.buckets {
                w.write_record([
                    m.model.clone(),
                    b.bucket.to_string(),
                    b.episodes.to_string(),
                    b.accuracy_pct.map(fixed).unwrap_or_default(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}
