//! Matching of tool payloads under a step's equivalence class.

use serde_json::Value;
use stepwise_expr::{equivalent, numeric_polynomial, parse, sub, Expr, Unit};

use crate::template::Equivalence;

/// Input keys that tune a solver rather than pose the problem.
pub const KNOB_KEYS: [&str; 2] = ["tolerance", "numeric"];

pub fn numbers_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn equation_residual(text: &str) -> Option<Expr> {
    match text.split_once('=') {
        Some((l, r)) => Some(sub(parse(l).ok()?, parse(r).ok()?)),
        None => parse(text).ok(),
    }
}

/// Residuals `x = 0` and `y = 0` pose the same equation when they agree up
/// to sign or, for univariate polynomials, up to a nonzero factor.
fn same_equation(x: &Expr, y: &Expr, tol: f64) -> bool {
    if equivalent(x, y, tol) || equivalent(x, &stepwise_expr::neg(y.clone()), tol) {
        return true;
    }
    let vars = x.free_symbols();
    if vars.len() != 1 || vars != y.free_symbols() {
        return false;
    }
    let v = vars.iter().next().expect("one symbol");
    let monic = |e: &Expr| {
        let c = numeric_polynomial(e, v).ok()?;
        let lead = *c.last()?;
        (lead != 0.0).then(|| c.iter().map(|k| k / lead).collect::<Vec<f64>>())
    };
    match (monic(x), monic(y)) {
        (Some(a), Some(b)) => a.len() == b.len() && a.iter().zip(&b).all(|(p, q)| numbers_close(*p, *q, tol)),
        _ => false,
    }
}

fn strings_match(a: &str, b: &str, tol: f64) -> bool {
    if a.trim() == b.trim() {
        return true;
    }
    if a.contains('=') || b.contains('=') {
        let (Some(x), Some(y)) = (equation_residual(a), equation_residual(b)) else {
            return false;
        };
        return same_equation(&x, &y, tol);
    }
    match (parse(a), parse(b)) {
        (Ok(x), Ok(y)) => equivalent(&x, &y, tol),
        _ => false,
    }
}

fn as_scalar(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => {
            let e = parse(s).ok()?;
            stepwise_expr::evaluate_f64(&e, &[]).ok()
        }
        _ => None,
    }
}

fn units_match(a: &Value, b: &Value) -> bool {
    let read = |v: &Value| serde_json::from_value::<Unit>(v.clone()).ok();
    match (read(a), read(b)) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

/// True when `actual` matches `expected`. Objects match on the keys of
/// `expected`; arrays of numbers compare as sorted multisets under
/// `RootSet` and elementwise otherwise.
pub fn values_match(expected: &Value, actual: &Value, class: Equivalence, tol: f64) -> bool {
    match (expected, actual) {
        (Value::Number(a), Value::Number(b)) => {
            numbers_close(a.as_f64().unwrap_or(f64::NAN), b.as_f64().unwrap_or(f64::NAN), tol)
        }
        (Value::String(a), Value::String(b)) => strings_match(a, b, tol),
        (Value::Number(_), Value::String(_)) | (Value::String(_), Value::Number(_)) => {
            match (as_scalar(expected), as_scalar(actual)) {
                (Some(a), Some(b)) => numbers_close(a, b, tol),
                _ => false,
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            if a.len() != b.len() {
                return false;
            }
            let nums = |v: &[Value]| v.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>();
            if class == Equivalence::RootSet {
                if let (Some(mut x), Some(mut y)) = (nums(a), nums(b)) {
                    x.sort_by(f64::total_cmp);
                    y.sort_by(f64::total_cmp);
                    return x.iter().zip(&y).all(|(p, q)| numbers_close(*p, *q, tol));
                }
            }
            a.iter().zip(b).all(|(x, y)| values_match(x, y, class, tol))
        }
        (Value::Object(a), Value::Object(b)) => a.iter().all(|(k, x)| match b.get(k) {
            Some(y) if k == "unit" => units_match(x, y),
            Some(y) => values_match(x, y, class, tol),
            None => false,
        }),
        (a, b) => a == b,
    }
}

/// Rewrites a single-equation `algebra_solver` call into the
/// `solve_equation` shape so the two tools compare directly.
pub fn normalize_input(tool_id: &str, input: &Value) -> Value {
    if tool_id == "algebra_solver" {
        if let (Some([eq]), Some([x])) = (
            input.get("system").and_then(Value::as_array).map(Vec::as_slice),
            input.get("unknowns").and_then(Value::as_array).map(Vec::as_slice),
        ) {
            return serde_json::json!({"equation": eq, "wrt": x});
        }
    }
    input.clone()
}

/// Step-level input equivalence, ignoring solver knobs.
pub fn inputs_match(
    canonical_tool: &str,
    canonical: &Value,
    tool: &str,
    input: &Value,
    tol: f64,
) -> bool {
    let a = normalize_input(canonical_tool, canonical);
    let b = normalize_input(tool, input);
    let (Some(a), Some(b)) = (a.as_object(), b.as_object()) else {
        return false;
    };
    a.iter()
        .filter(|(k, _)| !KNOB_KEYS.contains(&k.as_str()))
        .all(|(k, x)| b.get(k).is_some_and(|y| values_match(x, y, Equivalence::Symbolic, tol)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn expressions_match_symbolically() {
        let c = Equivalence::Symbolic;
        assert!(values_match(&json!("3*t^2 - 6*t + 2"), &json!("2 - 6*t + 3*t^2"), c, 1e-6));
        assert!(!values_match(&json!("3*t^2"), &json!("3*t^3"), c, 1e-6));
        assert!(values_match(&json!("x - 1 = 0"), &json!("2 = 2*x"), c, 1e-6));
        assert!(!values_match(&json!("x - 1 = 0"), &json!("x = 2"), c, 1e-6));
        assert!(values_match(&json!("x - 1 = 0"), &json!("1 = x"), c, 1e-6));
    }

    #[test]
    fn root_sets_ignore_order() {
        let r = Equivalence::RootSet;
        assert!(values_match(&json!([1.0, 3.0]), &json!([3.0, 1.0000000001]), r, 1e-6));
        assert!(!values_match(&json!([1.0, 3.0]), &json!([1.0]), r, 1e-6));
        assert!(!values_match(&json!([1.0, 3.0]), &json!([3.0, 1.0]), Equivalence::Numeric, 1e-6));
    }

    #[test]
    fn objects_compare_on_expected_keys_and_units() {
        let n = Equivalence::Numeric;
        let want = json!({"value": 12.0, "unit": "kg*m^2/s^2"});
        let got = json!({"value": 12.0000000001, "unit": [2, 1, -2, 0, 0, 0, 0], "extra": 1});
        assert!(values_match(&want, &got, n, 1e-6));
        assert!(!values_match(&json!({"value": 1}), &json!({"other": 1}), n, 1e-6));
    }

    #[test]
    fn algebra_solver_and_solve_equation_inputs_align() {
        let a = json!({"system": ["6*t - 6 = 0"], "unknowns": ["t"]});
        let b = json!({"equation": "t = 1", "wrt": "t"});
        assert!(inputs_match("algebra_solver", &a, "solve_equation", &b, 1e-6));
        let c = json!({"expr": "x^2", "wrt": "x", "lower": 0, "upper": 1, "tolerance": 1e-10});
        let d = json!({"expr": "x*x", "wrt": "x", "lower": 0, "upper": 1.0});
        assert!(inputs_match("integrate", &c, "integrate", &d, 1e-6));
        assert!(!inputs_match("integrate", &c, "integrate", &json!({"expr": "x^2", "wrt": "x"}), 1e-6));
    }
}
