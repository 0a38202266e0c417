//! Field-level input/output descriptions and validation.

use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Expr,
    Equation,
    Symbol,
    Number,
    Integer,
    Boolean,
    NumberMatrix,
    Points,
    Bindings,
    ExprList,
    SymbolList,
    /// Output-only: arbitrary JSON.
    Any,
}

impl FieldKind {
    fn json_schema(self) -> Value {
        match self {
            FieldKind::Expr => json!({"type": "string", "format": "expr"}),
            FieldKind::Equation => json!({"type": "string", "format": "equation"}),
            FieldKind::Symbol => json!({"type": "string", "format": "symbol"}),
            FieldKind::Number => json!({"type": "number"}),
            FieldKind::Integer => json!({"type": "integer"}),
            FieldKind::Boolean => json!({"type": "boolean"}),
            FieldKind::NumberMatrix => {
                json!({"type": "array", "items": {"type": "array", "items": {"type": "number"}}})
            }
            FieldKind::Points => {
                json!({"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}})
            }
            FieldKind::Bindings => json!({"type": "object", "format": "bindings"}),
            FieldKind::ExprList => {
                json!({"type": "array", "items": {"type": "string", "format": "equation"}})
            }
            FieldKind::SymbolList => {
                json!({"type": "array", "items": {"type": "string", "format": "symbol"}})
            }
            FieldKind::Any => json!({}),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub name: &'static str,
    pub kind: FieldKind,
    pub required: bool,
}

pub const fn req(name: &'static str, kind: FieldKind) -> Field {
    Field {
        name,
        kind,
        required: true,
    }
}

pub const fn opt(name: &'static str, kind: FieldKind) -> Field {
    Field {
        name,
        kind,
        required: false,
    }
}

/// JSON-schema-like rendering used in tool descriptors.
pub fn object_schema(fields: &[Field]) -> Value {
    let mut props = Map::new();
    for f in fields {
        props.insert(f.name.to_string(), f.kind.json_schema());
    }
    let required: Vec<&str> = fields.iter().filter(|f| f.required).map(|f| f.name).collect();
    json!({
        "type": "object",
        "properties": props,
        "required": required,
        "additionalProperties": false,
    })
}

pub fn is_symbol(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_number_list(v: &Value, len: Option<usize>) -> bool {
    match v.as_array() {
        Some(items) => {
            len.is_none_or(|n| items.len() == n) && items.iter().all(Value::is_number)
        }
        None => false,
    }
}

fn check_kind(kind: FieldKind, v: &Value) -> Result<(), String> {
    let ok = match kind {
        FieldKind::Expr | FieldKind::Equation => v.is_string(),
        FieldKind::Symbol => v.as_str().is_some_and(is_symbol),
        FieldKind::Number => v.is_number(),
        FieldKind::Integer => v.is_i64() || v.is_u64(),
        FieldKind::Boolean => v.is_boolean(),
        FieldKind::NumberMatrix => v
            .as_array()
            .is_some_and(|rows| !rows.is_empty() && rows.iter().all(|r| is_number_list(r, None))),
        FieldKind::Points => v.as_array().is_some_and(|pts| {
            pts.iter().all(|p| {
                is_number_list(p, Some(2))
                    || p.as_object().is_some_and(|o| {
                        o.len() == 2
                            && o.get("x").is_some_and(Value::is_number)
                            && o.get("y").is_some_and(Value::is_number)
                    })
            })
        }),
        FieldKind::Bindings => v.as_object().is_some_and(|m| {
            m.iter().all(|(k, b)| {
                is_symbol(k)
                    && (b.is_number()
                        || b.as_object().is_some_and(|o| {
                            o.get("value").is_some_and(Value::is_number)
                                && o.keys().all(|k| k == "value" || k == "unit")
                        }))
            })
        }),
        FieldKind::ExprList => v
            .as_array()
            .is_some_and(|items| !items.is_empty() && items.iter().all(Value::is_string)),
        FieldKind::SymbolList => v.as_array().is_some_and(|items| {
            !items.is_empty() && items.iter().all(|s| s.as_str().is_some_and(is_symbol))
        }),
        FieldKind::Any => true,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("expected {:?}", kind).to_lowercase())
    }
}

/// Checks that `input` is an object with exactly the declared fields.
pub fn validate(fields: &[Field], input: &Value) -> Result<(), String> {
    let obj = input.as_object().ok_or("input must be a JSON object")?;
    for key in obj.keys() {
        if !fields.iter().any(|f| f.name == key) {
            return Err(format!("unknown field {key:?}"));
        }
    }
    for f in fields {
        match obj.get(f.name) {
            None if f.required => return Err(format!("missing field {:?}", f.name)),
            None => {}
            Some(v) => check_kind(f.kind, v).map_err(|e| format!("field {:?}: {e}", f.name))?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIELDS: [Field; 2] = [req("expr", FieldKind::Expr), opt("wrt", FieldKind::Symbol)];

    #[test]
    fn validation() {
        assert!(validate(&FIELDS, &json!({"expr": "x"})).is_ok());
        assert!(validate(&FIELDS, &json!({"expr": "x", "wrt": "t"})).is_ok());
        assert!(validate(&FIELDS, &json!({"wrt": "t"})).is_err());
        assert!(validate(&FIELDS, &json!({"expr": "x", "extra": 1})).is_err());
        assert!(validate(&FIELDS, &json!({"expr": "x", "wrt": "2t"})).is_err());
        assert!(validate(&FIELDS, &json!(["x"])).is_err());
    }

    #[test]
    fn bindings_and_points() {
        let b = [req("b", FieldKind::Bindings)];
        assert!(validate(&b, &json!({"b": {"m": 2, "v": {"value": -1, "unit": "m/s"}}})).is_ok());
        assert!(validate(&b, &json!({"b": {"m": "2"}})).is_err());
        let p = [req("p", FieldKind::Points)];
        assert!(validate(&p, &json!({"p": [[0, 1], {"x": 1, "y": 3}]})).is_ok());
        assert!(validate(&p, &json!({"p": [[0, 1, 2]]})).is_err());
    }
}
