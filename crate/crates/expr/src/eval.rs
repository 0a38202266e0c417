//! Floating-point evaluation with unit propagation.

use thiserror::Error;

use crate::expr::{Expr, Func};
use crate::units::{Bindings, NumericValue};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound symbol {0:?}")]
    Unbound(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unit mismatch: {0}")]
    UnitMismatch(String),
}

fn finite(v: f64, what: &str) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::Domain(format!("{what} is not finite")))
    }
}

/// Evaluates `e` under `b`. Sums require equal units, transcendental
/// functions require dimensionless arguments.
pub fn evaluate(e: &Expr, b: &Bindings) -> Result<NumericValue, EvalError> {
    match e {
        Expr::Rational(_) | Expr::Float(_) => {
            Ok(NumericValue::dimensionless(e.as_number().unwrap().to_f64()))
        }
        Expr::Symbol(s) => b.get(s).copied().ok_or_else(|| EvalError::Unbound(s.clone())),
        Expr::Sum(ts) => {
            let first = evaluate(&ts[0], b)?;
            let mut total = first.value;
            for t in &ts[1..] {
                let v = evaluate(t, b)?;
                if v.unit != first.unit {
                    return Err(EvalError::UnitMismatch(format!(
                        "cannot add {} and {}",
                        first.unit, v.unit
                    )));
                }
                total += v.value;
            }
            Ok(NumericValue::new(finite(total, "sum")?, first.unit))
        }
        Expr::Product(fs) => {
            let mut acc = NumericValue::dimensionless(1.0);
            for f in fs {
                let v = evaluate(f, b)?;
                acc.value *= v.value;
                acc.unit = acc.unit.mul(v.unit);
            }
            acc.value = finite(acc.value, "product")?;
            Ok(acc)
        }
        Expr::Pow(base, exp) => {
            let bv = evaluate(base, b)?;
            let ev = evaluate(exp, b)?;
            if !ev.unit.is_dimensionless() {
                return Err(EvalError::UnitMismatch(format!(
                    "exponent has unit {}",
                    ev.unit
                )));
            }
            let p = ev.value;
            let unit = bv.unit.powf(p).ok_or_else(|| {
                EvalError::UnitMismatch(format!("{} raised to {p} is not integral", bv.unit))
            })?;
            if bv.value == 0.0 && p < 0.0 {
                return Err(EvalError::Domain("division by zero".into()));
            }
            let integral = exp.as_number().and_then(|n| n.as_integer());
            let v = match integral {
                Some(n) if i32::try_from(n).is_ok() => bv.value.powi(n as i32),
                _ => bv.value.powf(p),
            };
            if v.is_nan() {
                return Err(EvalError::Domain(format!(
                    "{} raised to {p} is not real",
                    bv.value
                )));
            }
            Ok(NumericValue::new(finite(v, "power")?, unit))
        }
        Expr::Func(f, arg) => {
            let a = evaluate(arg, b)?;
            let x = a.value;
            let needs_dimensionless = !matches!(f, Func::Sqrt | Func::Abs);
            if needs_dimensionless && !a.unit.is_dimensionless() {
                return Err(EvalError::UnitMismatch(format!(
                    "{f} of a value with unit {}",
                    a.unit
                )));
            }
            let (v, unit) = match f {
                Func::Sin => (x.sin(), a.unit),
                Func::Cos => (x.cos(), a.unit),
                Func::Tan => (x.tan(), a.unit),
                Func::Exp => (x.exp(), a.unit),
                Func::Ln => {
                    if x <= 0.0 {
                        return Err(EvalError::Domain(format!("ln of non-positive {x}")));
                    }
                    (x.ln(), a.unit)
                }
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err(EvalError::Domain(format!("sqrt of negative {x}")));
                    }
                    let unit = a.unit.powf(0.5).ok_or_else(|| {
                        EvalError::UnitMismatch(format!("sqrt of unit {}", a.unit))
                    })?;
                    (x.sqrt(), unit)
                }
                Func::Abs => (x.abs(), a.unit),
            };
            Ok(NumericValue::new(finite(v, f.name())?, unit))
        }
    }
}

/// Evaluates with every free symbol bound to a dimensionless value.
pub fn evaluate_f64(e: &Expr, values: &[(&str, f64)]) -> Result<f64, EvalError> {
    let mut b = Bindings::new();
    for (k, v) in values {
        b = b.with(k, NumericValue::dimensionless(*v));
    }
    evaluate(e, &b).map(|v| v.value)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse;
    use crate::units::Unit;

    fn m() -> Unit {
        Unit::parse("m").unwrap()
    }

    #[test]
    fn identity_keeps_unit() {
        let b = Bindings::new().with("x", NumericValue::new(5.0, m()));
        let v = evaluate(&parse("x").unwrap(), &b).unwrap();
        assert_eq!(v, NumericValue::new(5.0, m()));
    }

    #[test]
    fn transcendental_needs_dimensionless() {
        let b = Bindings::new().with("x", NumericValue::new(3.0, m()));
        let err = evaluate(&parse("ln(x)").unwrap(), &b).unwrap_err();
        assert!(matches!(err, EvalError::UnitMismatch(_)));
    }

    #[test]
    fn sums_need_matching_units() {
        let b = Bindings::new()
            .with("x", NumericValue::new(3.0, m()))
            .with("t", NumericValue::new(1.0, Unit::parse("s").unwrap()));
        assert!(matches!(
            evaluate(&parse("x + t").unwrap(), &b),
            Err(EvalError::UnitMismatch(_))
        ));
    }

    #[test]
    fn domain_errors() {
        let neg = Bindings::new().with("x", NumericValue::dimensionless(-1.0));
        let zero = Bindings::new().with("x", NumericValue::dimensionless(0.0));
        for (s, b) in [("sqrt(x)", &neg), ("ln(x)", &zero), ("1/x", &zero), ("x^(1/2)", &neg)] {
            assert!(
                matches!(evaluate(&parse(s).unwrap(), b), Err(EvalError::Domain(_))),
                "{s}"
            );
        }
        assert_eq!(
            evaluate(&parse("y").unwrap(), &neg),
            Err(EvalError::Unbound("y".into()))
        );
    }

    #[test]
    fn units_flow_through_products_and_powers() {
        let b = Bindings::new()
            .with("m", NumericValue::new(2.0, Unit::parse("kg").unwrap()))
            .with("v", NumericValue::new(-1.0, Unit::parse("m/s").unwrap()));
        let v = evaluate(&parse("0.5*m*v^2").unwrap(), &b).unwrap();
        assert_eq!(v.value, 1.0);
        assert_eq!(v.unit, Unit::parse("kg*m^2/s^2").unwrap());
        let a = Bindings::new().with("a", NumericValue::new(4.0, Unit::parse("m^2").unwrap()));
        let r = evaluate(&parse("sqrt(a)").unwrap(), &a).unwrap();
        assert_eq!(r, NumericValue::new(2.0, m()));
    }
}
