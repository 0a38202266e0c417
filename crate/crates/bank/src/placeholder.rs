//! `{{name}}` substitution over JSON values.
//!
//! A string that is exactly one placeholder is replaced by the resolved JSON
//! value; placeholders embedded in longer text are spliced in as text, with
//! negative numbers parenthesized so the result still parses as intended.

use serde_json::Value;

/// Text form of a number inside an expression string.
pub fn format_number(v: f64) -> String {
    let s = if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    };
    if v < 0.0 {
        format!("({s})")
    } else {
        s
    }
}

/// JSON form of a parameter value: integral values become JSON integers.
pub fn number_value(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        Value::from(v as i64)
    } else {
        Value::from(v)
    }
}

fn splice(v: &Value) -> String {
    match v {
        Value::Number(n) => format_number(n.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Names of all placeholders in `text`, in order of appearance.
pub fn names(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let Some(len) = rest[start + 2..].find("}}") else { break };
        out.push(rest[start + 2..start + 2 + len].trim());
        rest = &rest[start + 2 + len + 2..];
    }
    out
}

/// Substitutes in one string. Unresolved placeholders are left in place.
pub fn substitute_str(text: &str, resolve: &dyn Fn(&str) -> Option<Value>) -> Value {
    let trimmed = text.trim();
    if trimmed.starts_with("{{") && trimmed.ends_with("}}") && names(trimmed).len() == 1 {
        let name = &trimmed[2..trimmed.len() - 2];
        if !name.contains("{{") {
            return resolve(name.trim()).unwrap_or_else(|| Value::String(text.to_string()));
        }
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let Some(len) = rest[start + 2..].find("}}") else { break };
        out.push_str(&rest[..start]);
        let name = rest[start + 2..start + 2 + len].trim();
        match resolve(name) {
            Some(v) => out.push_str(&splice(&v)),
            None => out.push_str(&rest[start..start + 2 + len + 2]),
        }
        rest = &rest[start + 2 + len + 2..];
    }
    out.push_str(rest);
    Value::String(out)
}

/// Substitutes recursively through arrays and object values.
pub fn substitute(v: &Value, resolve: &dyn Fn(&str) -> Option<Value>) -> Value {
    match v {
        Value::String(s) => substitute_str(s, resolve),
        Value::Array(items) => Value::Array(items.iter().map(|i| substitute(i, resolve)).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, i)| (k.clone(), substitute(i, resolve)))
                .collect(),
        ),
        other => other.clone(),
    }
}

/// Placeholder names still present anywhere in `v`.
pub fn unresolved(v: &Value) -> Vec<String> {
    match v {
        Value::String(s) => names(s).into_iter().map(str::to_string).collect(),
        Value::Array(items) => items.iter().flat_map(unresolved).collect(),
        Value::Object(map) => map.values().flat_map(unresolved).collect(),
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn params(name: &str) -> Option<Value> {
        match name {
            "A" => Some(json!(2)),
            "B" => Some(json!(-1.5)),
            "e" => Some(json!("3*t^2 - 1")),
            _ => None,
        }
    }

    #[test]
    fn whole_string_keeps_json_type() {
        assert_eq!(substitute_str("{{A}}", &params), json!(2));
        assert_eq!(substitute_str(" {{ B }} ", &params), json!(-1.5));
    }

    #[test]
    fn embedded_numbers_are_parenthesized_when_negative() {
        let v = substitute_str("{{A}}*t^2 + {{B}}*t", &params);
        assert_eq!(v, json!("2*t^2 + (-1.5)*t"));
        let v = substitute_str("0.5*({{e}})^2", &params);
        assert_eq!(v, json!("0.5*(3*t^2 - 1)^2"));
    }

    #[test]
    fn unresolved_placeholders_survive() {
        let v = substitute(&json!({"x": "{{step-01.output.expr}} + {{A}}"}), &params);
        assert_eq!(v, json!({"x": "{{step-01.output.expr}} + 2"}));
        assert_eq!(unresolved(&v), vec!["step-01.output.expr".to_string()]);
    }

    #[test]
    fn number_text() {
        assert_eq!(format_number(3.0), "3");
        assert_eq!(format_number(0.25), "0.25");
        assert_eq!(format_number(1e-13), "1e-13");
        assert_eq!(format_number(-2.0), "(-2)");
    }
}
