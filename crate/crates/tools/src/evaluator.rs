use serde_json::{json, Value};
use stepwise_expr::{evaluate, Bindings, EvalError, NumericValue, Unit};

use crate::schema::{req, Field, FieldKind};
use crate::{
    expr_field, Diagnostics, Failure, Outcome, Tool, DOMAIN_ERROR, UNBOUND_SYMBOL, UNIT_MISMATCH,
};

pub(crate) fn eval_failure(e: EvalError) -> Failure {
    let code = match e {
        EvalError::Unbound(_) => UNBOUND_SYMBOL,
        EvalError::Domain(_) => DOMAIN_ERROR,
        EvalError::UnitMismatch(_) => UNIT_MISMATCH,
    };
    Failure::new(code, e.to_string())
}

/// Reads `{name: number | {value, unit}}`; `unit` is a 7-integer array or a
/// unit expression such as `"kg*m/s^2"`.
pub fn bindings_from_json(v: &Value) -> Result<Bindings, Failure> {
    let mut out = Bindings::new();
    let Some(map) = v.as_object() else {
        return Ok(out);
    };
    for (name, b) in map {
        let nv = match b {
            Value::Number(n) => NumericValue::dimensionless(n.as_f64().unwrap_or(f64::NAN)),
            Value::Object(o) => {
                let value = o.get("value").and_then(Value::as_f64).unwrap_or(f64::NAN);
                let unit = match o.get("unit") {
                    None | Some(Value::Null) => Unit::DIMENSIONLESS,
                    Some(u) => serde_json::from_value::<Unit>(u.clone())
                        .map_err(|e| Failure::new(UNIT_MISMATCH, format!("{name}: {e}")))?,
                };
                NumericValue::new(value, unit)
            }
            _ => return Err(Failure::new(UNBOUND_SYMBOL, format!("{name}: bad binding"))),
        };
        if !nv.value.is_finite() {
            return Err(Failure::new(DOMAIN_ERROR, format!("{name} is not finite")));
        }
        out.insert(name.clone(), nv)
            .map_err(|e| Failure::new(UNBOUND_SYMBOL, e))?;
    }
    Ok(out)
}

pub struct NumericEvaluator;

static EVAL_IN: [Field; 2] = [req("expr", FieldKind::Expr), req("bindings", FieldKind::Bindings)];
static EVAL_OUT: [Field; 2] = [req("value", FieldKind::Number), req("unit", FieldKind::Any)];

impl Tool for NumericEvaluator {
    fn id(&self) -> &'static str {
        "numeric_evaluator"
    }
    fn description(&self) -> &'static str {
        "Evaluate an expression under numeric bindings with SI units"
    }
    fn input_fields(&self) -> &'static [Field] {
        &EVAL_IN
    }
    fn output_fields(&self) -> &'static [Field] {
        &EVAL_OUT
    }
    fn run(&self, input: &Value) -> Outcome {
        let e = expr_field(input, "expr")?;
        let b = bindings_from_json(&input["bindings"])?;
        let v = evaluate(&e, &b).map_err(eval_failure)?;
        Ok((json!({"value": v.value, "unit": v.unit}), Diagnostics::numeric()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinetic_energy_with_units() {
        let (out, _) = NumericEvaluator
            .run(&json!({
                "expr": "0.5*m*v^2",
                "bindings": {"m": {"value": 2, "unit": "kg"}, "v": {"value": -1, "unit": [1,0,-1,0,0,0,0]}}
            }))
            .unwrap();
        assert_eq!(out, json!({"value": 1.0, "unit": [2, 1, -2, 0, 0, 0, 0]}));
    }

    #[test]
    fn failures_map_to_codes() {
        let f = NumericEvaluator
            .run(&json!({"expr": "sqrt(x)", "bindings": {"x": -1}}))
            .unwrap_err();
        assert_eq!(f.code, DOMAIN_ERROR);
        let f = NumericEvaluator.run(&json!({"expr": "y", "bindings": {}})).unwrap_err();
        assert_eq!(f.code, UNBOUND_SYMBOL);
        let f = NumericEvaluator
            .run(&json!({"expr": "x +", "bindings": {}}))
            .unwrap_err();
        assert_eq!(f.code, crate::PARSE_ERROR);
    }
}
