//! Machine-checkable verification predicates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use stepwise_expr::{evaluate_f64, parse, Unit};

use crate::compare::numbers_close;
use crate::placeholder::{substitute, unresolved};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Negative,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    /// Sign of a second derivative, given either as a value or as an
    /// expression evaluated at `at`.
    SecondDerivativeSign {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expr: Option<Value>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        at: BTreeMap<String, Value>,
        sign: Sign,
    },
    UnitsMatch { unit: Value, expected: String },
    ResidualBelow { value: Value, bound: f64 },
    ValueAgreement { a: Value, b: Value, tolerance: f64 },
    FlagPresent { notes: Value, flag: String },
}

fn scalar(v: &Value) -> Result<f64, String> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| "bad number".to_string()),
        Value::String(s) => {
            let e = parse(s).map_err(|e| format!("{s:?}: {e}"))?;
            evaluate_f64(&e, &[]).map_err(|e| format!("{s:?}: {e}"))
        }
        other => Err(format!("expected a number, got {other}")),
    }
}

impl Predicate {
    pub fn substitute(&self, resolve: &dyn Fn(&str) -> Option<Value>) -> Predicate {
        let v = serde_json::to_value(self).expect("predicate serializes");
        serde_json::from_value(substitute(&v, resolve)).expect("substitution keeps shape")
    }

    /// Evaluates after resolving placeholders; an unresolvable reference
    /// or an ill-typed value is an error rather than `false`.
    pub fn holds(&self, resolve: &dyn Fn(&str) -> Option<Value>) -> Result<bool, String> {
        let p = self.substitute(resolve);
        let left = unresolved(&serde_json::to_value(&p).expect("predicate serializes"));
        if !left.is_empty() {
            return Err(format!("unresolved references {left:?}"));
        }
        match p {
            Predicate::SecondDerivativeSign { value, expr, at, sign } => {
                let x = match (value, expr) {
                    (Some(v), _) => scalar(&v)?,
                    (None, Some(Value::String(e))) => {
                        let e = parse(&e).map_err(|err| format!("{e:?}: {err}"))?;
                        let vals = at
                            .iter()
                            .map(|(k, v)| Ok((k.as_str(), scalar(v)?)))
                            .collect::<Result<Vec<_>, String>>()?;
                        evaluate_f64(&e, &vals).map_err(|e| e.to_string())?
                    }
                    _ => return Err("second_derivative_sign needs value or expr".into()),
                };
                Ok(match sign {
                    Sign::Negative => x < 0.0,
                    Sign::Positive => x > 0.0,
                })
            }
            Predicate::UnitsMatch { unit, expected } => {
                let got: Unit = serde_json::from_value(unit).map_err(|e| e.to_string())?;
                Ok(got == Unit::parse(&expected)?)
            }
            Predicate::ResidualBelow { value, bound } => Ok(scalar(&value)?.abs() <= bound),
            Predicate::ValueAgreement { a, b, tolerance } => {
                Ok(numbers_close(scalar(&a)?, scalar(&b)?, tolerance))
            }
            Predicate::FlagPresent { notes, flag } => Ok(notes
                .as_array()
                .is_some_and(|n| n.iter().any(|x| x.as_str() == Some(flag.as_str())))),
        }
    }
}
