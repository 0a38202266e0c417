//! The computational tool suite.
//!
//! Every tool is a pure function of its JSON input. The registry validates
//! input against the tool's schema, runs it, and wraps the outcome into a
//! [`ToolResult`] that echoes the input verbatim.

pub mod calculus;
pub mod diagnostics;
pub mod evaluator;
pub mod json;
pub mod linalg;
pub mod roots;
pub mod schema;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use stepwise_expr::{parse, Expr};
use thiserror::Error;

pub use diagnostics::{Convergence, Diagnostics, Status, ToolResult};
use schema::Field;

pub const PARSE_ERROR: &str = "PARSE_ERROR";
pub const UNSUPPORTED_FORM: &str = "UNSUPPORTED_FORM";
pub const DOMAIN_ERROR: &str = "DOMAIN_ERROR";
pub const UNIT_MISMATCH: &str = "UNIT_MISMATCH";
pub const UNBOUND_SYMBOL: &str = "UNBOUND_SYMBOL";

/// A tool-level failure; reported as `status: failed` with `code` as note.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

pub type Outcome = Result<(Value, Diagnostics), Failure>;

pub trait Tool: Send + Sync {
    fn id(&self) -> &'static str;
    fn version(&self) -> &'static str {
        "1.0.0"
    }
    fn description(&self) -> &'static str;
    fn input_fields(&self) -> &'static [Field];
    fn output_fields(&self) -> &'static [Field];
    fn run(&self, input: &Value) -> Outcome;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub tool_id: String,
    pub version: String,
    pub description: String,
    pub input_schema: Value,
    pub output_schema: Value,
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ToolError {
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("invalid input for {tool}: {reason}")]
    InvalidInput { tool: String, reason: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Clone)]
pub struct ToolRegistry {
    tools: BTreeMap<&'static str, Arc<dyn Tool>>,
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.tools.keys()).finish()
    }
}

#[derive(Debug, Deserialize)]
struct Manifest {
    tools: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    tool_id: String,
    version: String,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl ToolRegistry {
    pub fn standard() -> Self {
        let all: Vec<Arc<dyn Tool>> = vec![
            Arc::new(calculus::SymbolicDiff),
            Arc::new(calculus::Integrate),
            Arc::new(roots::SolveEquation),
            Arc::new(roots::AlgebraSolver),
            Arc::new(linalg::MatrixDeterminant),
            Arc::new(linalg::LinearRegression),
            Arc::new(evaluator::NumericEvaluator),
        ];
        ToolRegistry {
            tools: all.into_iter().map(|t| (t.id(), t)).collect(),
        }
    }

    /// Restricts the standard set to the tools listed in a JSON manifest
    /// `{"tools":[{"tool_id":..,"version":..}]}`. Versions must match.
    pub fn from_manifest(path: &Path) -> Result<Self, ToolError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ToolError::Manifest(format!("{}: {e}", path.display())))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| ToolError::Manifest(e.to_string()))?;
        let std = Self::standard();
        let mut tools = BTreeMap::new();
        for entry in m.tools {
            let tool = std
                .tools
                .get(entry.tool_id.as_str())
                .ok_or_else(|| ToolError::UnknownTool(entry.tool_id.clone()))?;
            if tool.version() != entry.version {
                return Err(ToolError::Manifest(format!(
                    "{} is version {}, manifest wants {}",
                    entry.tool_id,
                    tool.version(),
                    entry.version
                )));
            }
            tools.insert(tool.id(), tool.clone());
        }
        Ok(ToolRegistry { tools })
    }

    pub fn contains(&self, tool_id: &str) -> bool {
        self.tools.contains_key(tool_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.tools.keys().copied()
    }

    pub fn descriptors(&self) -> Vec<ToolDescriptor> {
        self.tools
            .values()
            .map(|t| ToolDescriptor {
                tool_id: t.id().to_string(),
                version: t.version().to_string(),
                description: t.description().to_string(),
                input_schema: schema::object_schema(t.input_fields()),
                output_schema: schema::object_schema(t.output_fields()),
                deterministic: true,
            })
            .collect()
    }

    pub fn validate(&self, tool_id: &str, input: &Value) -> Result<(), ToolError> {
        let tool = self
            .tools
            .get(tool_id)
            .ok_or_else(|| ToolError::UnknownTool(tool_id.to_string()))?;
        schema::validate(tool.input_fields(), input).map_err(|reason| ToolError::InvalidInput {
            tool: tool_id.to_string(),
            reason,
        })
    }

    /// Validates and runs. Tool-level failures come back as a `ToolResult`
    /// with `status: failed`; only unknown tools and schema violations are
    /// errors.
    pub fn call(&self, tool_id: &str, input: &Value) -> Result<ToolResult, ToolError> {
        self.validate(tool_id, input)?;
        let tool = &self.tools[tool_id];
        let (output, diagnostics) = match tool.run(input) {
            Ok((mut out, d)) => {
                json::normalize(&mut out);
                (out, d)
            }
            Err(f) => (Value::Object(Default::default()), Diagnostics::failed(f.code, f.message)),
        };
        Ok(ToolResult {
            tool_id: tool_id.to_string(),
            version: tool.version().to_string(),
            input: input.clone(),
            output,
            diagnostics,
        })
    }
}

pub(crate) fn str_field<'a>(input: &'a Value, name: &str) -> &'a str {
    input[name].as_str().unwrap_or_default()
}

pub(crate) fn expr_field(input: &Value, name: &str) -> Result<Expr, Failure> {
    let text = str_field(input, name);
    parse(text).map_err(|e| Failure::new(PARSE_ERROR, format!("{name}: {e}")))
}

/// Parses `lhs = rhs` (or a bare expression, read as `= 0`) into `lhs - rhs`.
pub(crate) fn equation(text: &str) -> Result<Expr, Failure> {
    let parts: Vec<&str> = text.split('=').collect();
    let bad = |e: stepwise_expr::ParseError| Failure::new(PARSE_ERROR, format!("{text:?}: {e}"));
    match parts.as_slice() {
        [only] => parse(only).map_err(bad),
        [lhs, rhs] => Ok(stepwise_expr::sub(
            parse(lhs).map_err(bad)?,
            parse(rhs).map_err(bad)?,
        )),
        _ => Err(Failure::new(PARSE_ERROR, format!("{text:?}: more than one '='"))),
    }
}

pub(crate) fn finite(v: f64, what: &str) -> Result<f64, Failure> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::new(DOMAIN_ERROR, format!("{what} is not finite")))
    }
}
