//! symbolic_diff and integrate.

use serde_json::{json, Value};
use stepwise_expr::{
    apply, differentiate, div, evaluate_f64, expand, mul, neg, pow, Expr, Func, Number,
};

use crate::diagnostics::NOT_CONVERGED;
use crate::evaluator::eval_failure;
use crate::schema::{opt, req, Field, FieldKind};
use crate::{expr_field, finite, str_field, Convergence, Diagnostics, Failure, Outcome, Tool};
use crate::{DOMAIN_ERROR, UNSUPPORTED_FORM};

pub struct SymbolicDiff;

static DIFF_IN: [Field; 2] = [req("expr", FieldKind::Expr), req("wrt", FieldKind::Symbol)];
static DIFF_OUT: [Field; 1] = [req("expr", FieldKind::Expr)];

impl Tool for SymbolicDiff {
    fn id(&self) -> &'static str {
        "symbolic_diff"
    }
    fn description(&self) -> &'static str {
        "Differentiate an expression with respect to one symbol"
    }
    fn input_fields(&self) -> &'static [Field] {
        &DIFF_IN
    }
    fn output_fields(&self) -> &'static [Field] {
        &DIFF_OUT
    }
    fn run(&self, input: &Value) -> Outcome {
        let e = expr_field(input, "expr")?;
        let d = differentiate(&e, str_field(input, "wrt"));
        Ok((json!({"expr": d.to_string()}), Diagnostics::symbolic()))
    }
}

pub struct Integrate;

static INT_IN: [Field; 6] = [
    req("expr", FieldKind::Expr),
    req("wrt", FieldKind::Symbol),
    opt("lower", FieldKind::Number),
    opt("upper", FieldKind::Number),
    opt("tolerance", FieldKind::Number),
    opt("numeric", FieldKind::Boolean),
];
static INT_OUT: [Field; 3] = [
    opt("expr", FieldKind::Expr),
    opt("value", FieldKind::Number),
    opt("method", FieldKind::Any),
];

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const MAX_DEPTH: u32 = 40;
const MAX_EVALS: u64 = 2_000_000;
const DOMAIN_SAMPLES: usize = 64;

/// Coefficient of `x` when `u` is linear in it.
fn linear_slope(u: &Expr, x: &str) -> Option<Expr> {
    let a = differentiate(u, x);
    (!a.depends_on(x) && !a.is_zero()).then_some(a)
}

fn integrate_factor(f: &Expr, x: &str) -> Option<Expr> {
    let sym = Expr::symbol(x);
    match f {
        Expr::Symbol(s) if s == x => Some(mul(vec![
            Expr::number(Number::Rational(stepwise_expr::number::rational(1, 2))),
            pow(sym, Expr::int(2)),
        ])),
        Expr::Pow(b, n) if **b == sym && !n.depends_on(x) => {
            if n.as_number() == Some(Number::int(-1)) {
                Some(apply(Func::Ln, apply(Func::Abs, sym)))
            } else {
                let n1 = stepwise_expr::add(vec![(**n).clone(), Expr::one()]);
                Some(div(pow(sym, n1.clone()), n1))
            }
        }
        Expr::Func(func, u) => {
            let a = linear_slope(u, x)?;
            let g = match func {
                Func::Exp => apply(Func::Exp, (**u).clone()),
                Func::Sin => neg(apply(Func::Cos, (**u).clone())),
                Func::Cos => apply(Func::Sin, (**u).clone()),
                _ => return None,
            };
            Some(div(g, a))
        }
        _ => None,
    }
}

/// Antiderivative by linearity over a table of single-factor rules
/// (power rule, 1/x, exp, sin, cos of linear arguments).
pub fn antiderivative(e: &Expr, x: &str) -> Option<Expr> {
    let terms = match expand(e) {
        Expr::Sum(ts) => ts,
        other => vec![other],
    };
    let mut out = Vec::with_capacity(terms.len());
    for t in terms {
        if !t.depends_on(x) {
            out.push(mul(vec![t, Expr::symbol(x)]));
            continue;
        }
        let factors = match t {
            Expr::Product(fs) => fs,
            other => vec![other],
        };
        let (dep, constant): (Vec<Expr>, Vec<Expr>) =
            factors.into_iter().partition(|f| f.depends_on(x));
        let [single] = dep.as_slice() else {
            return None;
        };
        let mut fs = constant;
        fs.push(integrate_factor(single, x)?);
        out.push(mul(fs));
    }
    Some(stepwise_expr::add(out))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: u64,
    pub converged: bool,
}

struct Simpson<'a, F> {
    f: &'a F,
    evals: u64,
    error: f64,
    converged: bool,
    max_depth: u32,
}

impl<F: Fn(f64) -> Result<f64, Failure>> Simpson<'_, F> {
    fn eval(&mut self, x: f64) -> Result<f64, Failure> {
        self.evals += 1;
        (self.f)(x)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &mut self,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64, Failure> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let flm = self.eval(lm)?;
        let frm = self.eval(rm)?;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // below this the tolerance is not representable
        let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        let done = delta.abs() <= 15.0 * tol || delta.abs() <= floor;
        if done || depth >= self.max_depth || self.evals >= MAX_EVALS {
            if !done {
                self.converged = false;
            }
            self.error += delta.abs() / 15.0;
            return Ok(left + right + delta / 15.0);
        }
        let l = self.recurse(a, m, fa, flm, fm, left, tol / 2.0, depth + 1)?;
        let r = self.recurse(m, b, fm, frm, fb, right, tol / 2.0, depth + 1)?;
        Ok(l + r)
    }
}

/// Adaptive Simpson with Richardson correction and an absolute tolerance.
pub fn adaptive_simpson<F>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<Quadrature, Failure>
where
    F: Fn(f64) -> Result<f64, Failure>,
{
    let mut s = Simpson {
        f,
        evals: 0,
        error: 0.0,
        converged: true,
        max_depth,
    };
    let fa = s.eval(a)?;
    let fb = s.eval(b)?;
    let m = 0.5 * (a + b);
    let fm = s.eval(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let value = s.recurse(a, b, fa, fm, fb, whole, tol, 0)?;
    Ok(Quadrature {
        value: finite(value, "integral")?,
        error_estimate: s.error,
        evaluations: s.evals,
        converged: s.converged,
    })
}

impl Tool for Integrate {
    fn id(&self) -> &'static str {
        "integrate"
    }
    fn description(&self) -> &'static str {
        "Antiderivative, or definite integral over [lower, upper]"
    }
    fn input_fields(&self) -> &'static [Field] {
        &INT_IN
    }
    fn output_fields(&self) -> &'static [Field] {
        &INT_OUT
    }
    fn run(&self, input: &Value) -> Outcome {
        let e = expr_field(input, "expr")?;
        let x = str_field(input, "wrt");
        let lower = input.get("lower").and_then(Value::as_f64);
        let upper = input.get("upper").and_then(Value::as_f64);
        let force_numeric = input.get("numeric").and_then(Value::as_bool).unwrap_or(false);
        let tol = input
            .get("tolerance")
            .and_then(Value::as_f64)
            .unwrap_or(DEFAULT_TOLERANCE);
        if !(tol > 0.0) {
            return Err(Failure::new(UNSUPPORTED_FORM, "tolerance must be positive"));
        }
        let (a, b) = match (lower, upper) {
            (None, None) => {
                let f = antiderivative(&e, x).ok_or_else(|| {
                    Failure::new(UNSUPPORTED_FORM, format!("no antiderivative rule for {e}"))
                })?;
                return Ok((json!({"expr": f.to_string()}), Diagnostics::symbolic()));
            }
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Failure::new(UNSUPPORTED_FORM, "give both bounds or neither")),
        };
        if let Some(other) = e.free_symbols().into_iter().find(|s| s != x) {
            return Err(Failure::new(
                UNSUPPORTED_FORM,
                format!("free symbol {other:?} in definite integral"),
            ));
        }
        let f = |t: f64| evaluate_f64(&e, &[(x, t)]).map_err(eval_failure);
        for i in 0..=DOMAIN_SAMPLES {
            let t = a + (b - a) * i as f64 / DOMAIN_SAMPLES as f64;
            f(t).map_err(|err| {
                Failure::new(DOMAIN_ERROR, format!("integrand undefined at {t}: {}", err.message))
            })?;
        }
        if !force_numeric {
            if let Some(anti) = antiderivative(&e, x) {
                let fa = evaluate_f64(&anti, &[(x, a)]).map_err(eval_failure)?;
                let fb = evaluate_f64(&anti, &[(x, b)]).map_err(eval_failure)?;
                let value = finite(fb - fa, "integral")?;
                return Ok((
                    json!({"value": value, "method": "symbolic"}),
                    Diagnostics::symbolic(),
                ));
            }
        }
        let q = adaptive_simpson(&f, a, b, tol, MAX_DEPTH)?;
        let mut d = Diagnostics::numeric();
        d.convergence = Some(Convergence {
            iterations: q.evaluations.min(u32::MAX as u64) as u32,
            achieved_tolerance: q.error_estimate,
        });
        d.error_estimate = Some(q.error_estimate);
        if !q.converged {
            d.warn(NOT_CONVERGED);
        }
        Ok((json!({"value": q.value, "method": "adaptive_simpson"}), d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use stepwise_expr::parse;

    fn run(v: Value) -> Outcome {
        Integrate.run(&v)
    }

    #[test]
    fn symbolic_coefficient_derivative() {
        let (out, d) = SymbolicDiff
            .run(&json!({"expr": "A*t^3 - B*t^2 + C*t", "wrt": "t"}))
            .unwrap();
        assert_eq!(out, json!({"expr": "3*A*t^2 - 2*B*t + C"}));
        assert_eq!(d, Diagnostics::symbolic());
        let (out, _) = SymbolicDiff.run(&json!({"expr": "sin(x)", "wrt": "x"})).unwrap();
        assert_eq!(out["expr"], "cos(x)");
    }

    #[test]
    fn table_rules() {
        let (out, _) = run(json!({"expr": "cos(x)", "wrt": "x"})).unwrap();
        assert_eq!(out["expr"], "sin(x)");
        let (out, _) = run(json!({"expr": "1/x", "wrt": "x"})).unwrap();
        assert_eq!(out["expr"], "ln(abs(x))");
        let (out, _) = run(json!({"expr": "3*t^2 + exp(2*t)", "wrt": "t"})).unwrap();
        let got = parse(out["expr"].as_str().unwrap()).unwrap();
        assert!(stepwise_expr::equivalent(&got, &parse("t^3 + exp(2*t)/2").unwrap(), 1e-12));
        let f = run(json!({"expr": "exp(x^2)", "wrt": "x"})).unwrap_err();
        assert_eq!(f.code, UNSUPPORTED_FORM);
    }

    #[test]
    fn definite_routes() {
        let (out, _) = run(json!({"expr": "3*t^2", "wrt": "t", "lower": 0, "upper": 2})).unwrap();
        assert_eq!(out, json!({"value": 8.0, "method": "symbolic"}));
        let (out, d) =
            run(json!({"expr": "3*t^2", "wrt": "t", "lower": 0, "upper": 2, "numeric": true}))
                .unwrap();
        assert!((out["value"].as_f64().unwrap() - 8.0).abs() < 1e-12);
        assert!(d.convergence.is_some());
        let (out, _) = run(json!({"expr": "0", "wrt": "t", "lower": -1, "upper": 5})).unwrap();
        assert_eq!(out["value"], 0.0);
        let (out, _) =
            run(json!({"expr": "exp(-t^2)", "wrt": "t", "lower": 0, "upper": 1})).unwrap();
        assert!((out["value"].as_f64().unwrap() - 0.746_824_132_812_427).abs() < 1e-10);
    }

    #[test]
    fn definite_failures() {
        let f = run(json!({"expr": "1/x", "wrt": "x", "lower": -1, "upper": 1})).unwrap_err();
        assert_eq!(f.code, DOMAIN_ERROR);
        let f = run(json!({"expr": "x", "wrt": "x", "lower": 0})).unwrap_err();
        assert_eq!(f.code, UNSUPPORTED_FORM);
        let f = run(json!({"expr": "a*x", "wrt": "x", "lower": 0, "upper": 1})).unwrap_err();
        assert_eq!(f.code, UNSUPPORTED_FORM);
    }
}
