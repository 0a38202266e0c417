use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    #[default]
    Ok,
    Warning,
    Failed,
}

impl Status {
    fn is_ok(&self) -> bool {
        *self == Status::Ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: u32,
    pub achieved_tolerance: f64,
}

pub const ILL_CONDITIONED: &str = "ILL_CONDITIONED";
pub const NEAR_DEGENERATE_ROOT: &str = "NEAR_DEGENERATE_ROOT";
pub const NOT_CONVERGED: &str = "NOT_CONVERGED";

/// Per-call diagnostics. Absent fields are omitted on the wire, so a clean
/// symbolic call serializes as `{"simplified":true,"type":"symbolic"}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(default, skip_serializing_if = "Status::is_ok")]
    pub status: Status,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_number: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<Convergence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simplified: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_estimate: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Diagnostics {
    pub fn symbolic() -> Self {
        Diagnostics {
            kind: Some("symbolic".into()),
            simplified: Some(true),
            ..Default::default()
        }
    }

    pub fn numeric() -> Self {
        Diagnostics {
            kind: Some("numeric".into()),
            ..Default::default()
        }
    }

    pub fn failed(code: &str, message: impl Into<String>) -> Self {
        Diagnostics {
            status: Status::Failed,
            notes: vec![code.to_string()],
            error: Some(message.into()),
            ..Default::default()
        }
    }

    /// Adds a warning code and downgrades `ok` to `warning`.
    pub fn warn(&mut self, code: &str) {
        if !self.notes.iter().any(|n| n == code) {
            self.notes.push(code.to_string());
        }
        if self.status == Status::Ok {
            self.status = Status::Warning;
        }
    }

    pub fn has_note(&self, code: &str) -> bool {
        self.notes.iter().any(|n| n == code)
    }
}

/// Provenance record of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool_id: String,
    pub version: String,
    pub input: Value,
    pub output: Value,
    pub diagnostics: Diagnostics,
}

impl ToolResult {
    pub fn ok(&self) -> bool {
        self.diagnostics.status != Status::Failed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbolic_wire_form() {
        let s = serde_json::to_string(&Diagnostics::symbolic()).unwrap();
        assert_eq!(s, r#"{"type":"symbolic","simplified":true}"#);
    }

    #[test]
    fn warn_sets_status_once() {
        let mut d = Diagnostics::numeric();
        d.warn(ILL_CONDITIONED);
        d.warn(ILL_CONDITIONED);
        assert_eq!(d.status, Status::Warning);
        assert_eq!(d.notes, vec![ILL_CONDITIONED.to_string()]);
        let back: Diagnostics =
            serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }
}
