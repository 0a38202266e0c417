//! Per-response protocol checks.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use stepwise_agent::{parse_response, ToolCall};
use stepwise_bank::numbers_close;

pub const MALFORMED_CALL: &str = "MALFORMED_CALL";

/// Relative tolerance for "this number is already known".
pub const SUPPORT_TOLERANCE: f64 = 1e-6;

const NUM: &str = r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?";

/// A number asserted in prose or in a final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub value: f64,
    /// Argument of a function-application claim such as `v(1) = -1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg: Option<f64>,
    /// `name = number` pairs stated in the same response.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bindings: BTreeMap<String, f64>,
}

/// Outcome of checking one response.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    /// Well-formed calls in written order.
    pub calls: Vec<ToolCall>,
    pub malformed: Vec<String>,
    pub marker: bool,
    pub final_answer: Option<Value>,
    pub answer_error: Option<String>,
    pub claims: Vec<Claim>,
    pub prose: String,
}

impl Verdict {
    /// More than one call block, malformed ones included.
    pub fn multi_call(&self) -> bool {
        self.calls.len() + self.malformed.len() > 1
    }

    pub fn accepted(&self) -> Option<&ToolCall> {
        match (self.calls.as_slice(), self.malformed.is_empty()) {
            ([one], true) => Some(one),
            _ => None,
        }
    }
}

struct Patterns {
    application: Regex,
    keyword: Regex,
    binding: Regex,
    number: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        application: Regex::new(&format!(r"\b[A-Za-z_]\w*\(\s*({NUM})\s*\)\s*=\s*({NUM})")).unwrap(),
        keyword: Regex::new(&format!(r"\b(?:gives|is|equals|yields)\s+({NUM})")).unwrap(),
        binding: Regex::new(&format!(r"\b([A-Za-z_]\w*)\s*=\s*({NUM})")).unwrap(),
        number: Regex::new(&format!(r"(?:^|[^\w.])({NUM})")).unwrap(),
    })
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

/// Numbers asserted in prose.
pub fn prose_claims(prose: &str) -> Vec<Claim> {
    let p = patterns();
    let bindings: BTreeMap<String, f64> = p
        .binding
        .captures_iter(prose)
        .map(|c| (c[1].to_string(), num(&c[2])))
        .collect();
    let mut out: Vec<Claim> = p
        .application
        .captures_iter(prose)
        .map(|c| Claim {
            value: num(&c[2]),
            arg: Some(num(&c[1])),
            bindings: BTreeMap::new(),
        })
        .collect();
    out.extend(p.keyword.captures_iter(prose).map(|c| Claim {
        value: num(&c[1]),
        arg: None,
        bindings: bindings.clone(),
    }));
    out
}

/// Every number in a JSON value, including numeric strings.
pub fn json_numbers(v: &Value, out: &mut Vec<f64>) {
    match v {
        Value::Number(n) => out.extend(n.as_f64()),
        Value::String(s) => out.extend(text_numbers(s)),
        Value::Array(items) => items.iter().for_each(|x| json_numbers(x, out)),
        Value::Object(m) => m.values().for_each(|x| json_numbers(x, out)),
        _ => {}
    }
}

/// Numeric literals in free text.
pub fn text_numbers(text: &str) -> Vec<f64> {
    patterns()
        .number
        .captures_iter(text)
        .map(|c| num(&c[1]))
        .collect()
}

pub fn supported(value: f64, known: &[f64]) -> bool {
    known.iter().any(|k| numbers_close(value, *k, SUPPORT_TOLERANCE))
}

pub fn enforce(text: &str) -> Verdict {
    let parsed = parse_response(text);
    let mut calls = Vec::new();
    let mut malformed = Vec::new();
    for c in parsed.calls {
        match c {
            Ok(call) => calls.push(call),
            Err(e) => malformed.push(e),
        }
    }
    let (final_answer, answer_error) = match parsed.final_answer {
        Some(Ok(v)) => (Some(v), None),
        Some(Err(e)) => (None, Some(e)),
        None => (None, None),
    };
    let mut claims = prose_claims(&parsed.prose);
    if let Some(a) = &final_answer {
        if a.get("ABSTAIN").is_none() {
            let mut nums = Vec::new();
            json_numbers(a, &mut nums);
            claims.extend(nums.into_iter().map(|value| Claim {
                value,
                arg: None,
                bindings: BTreeMap::new(),
            }));
        }
    }
    Verdict {
        calls,
        malformed,
        marker: parsed.marker,
        final_answer,
        answer_error,
        claims,
        prose: parsed.prose,
    }
}
