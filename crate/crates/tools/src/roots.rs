//! solve_equation and algebra_solver.

use std::cmp::Ordering;

use nalgebra::{Complex, DMatrix, DVector};
use serde_json::{json, Map, Value};
use stepwise_expr::{linear_form, numeric_polynomial, Expr, FormError};

use crate::diagnostics::NEAR_DEGENERATE_ROOT;
use crate::linalg::{solve_square, SINGULAR_SYSTEM};
use crate::schema::{req, Field, FieldKind};
use crate::{equation, str_field, Convergence, Diagnostics, Failure, Outcome, Tool, UNSUPPORTED_FORM};

pub const MAX_DEGREE: usize = 8;
pub const NO_SOLUTION: &str = "NO_SOLUTION";
pub const INDETERMINATE: &str = "INDETERMINATE";
const POLISH_STEPS: u32 = 8;

type C64 = Complex<f64>;

fn horner(coeffs: &[f64], z: C64) -> (C64, C64) {
    // value and derivative, coefficients lowest degree first
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn analytic(c: &[f64]) -> Vec<C64> {
    if c.len() == 2 {
        return vec![C64::new(-c[0] / c[1], 0.0)];
    }
    let (a, b, cc) = (c[2], c[1], c[0]);
    let disc = b * b - 4.0 * a * cc;
    if disc >= 0.0 {
        let s = disc.sqrt();
        let q = -0.5 * (b + if b >= 0.0 { s } else { -s });
        if q == 0.0 {
            return vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        }
        vec![C64::new(q / a, 0.0), C64::new(cc / q, 0.0)]
    } else {
        let re = -b / (2.0 * a);
        let im = ((-disc).sqrt() / (2.0 * a)).abs();
        vec![C64::new(re, -im), C64::new(re, im)]
    }
}

fn companion(c: &[f64]) -> (Vec<C64>, u32) {
    let n = c.len() - 1;
    let lead = c[n];
    let m = DMatrix::from_fn(n, n, |i, j| {
        if j == n - 1 {
            -c[i] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut iterations = 0;
    let roots = m
        .complex_eigenvalues()
        .iter()
        .map(|&z0| {
            let mut z = z0;
            let mut best = horner(c, z).0.norm();
            for _ in 0..POLISH_STEPS {
                let (p, dp) = horner(c, z);
                if dp.norm() == 0.0 || best == 0.0 {
                    break;
                }
                let next = z - p / dp;
                let r = horner(c, next).0.norm();
                if !(r < best) {
                    break;
                }
                iterations += 1;
                best = r;
                z = next;
            }
            z
        })
        .collect();
    (roots, iterations)
}

/// Roots of the polynomial with coefficients `c` (lowest degree first,
/// nonzero leading coefficient, degree ≥ 1), sorted by (re, im).
pub fn polynomial_roots(c: &[f64]) -> (Vec<C64>, &'static str, u32) {
    let (mut roots, method, iterations) = if c.len() <= 3 {
        (analytic(c), "analytic", 0)
    } else {
        let (r, it) = companion(c);
        (r, "companion_qr", it)
    };
    for z in &mut roots {
        if z.im.abs() <= 1e-10 * (1.0 + z.norm()) {
            z.im = 0.0;
        }
        if z.re == 0.0 {
            z.re = 0.0;
        }
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    (roots, method, iterations)
}

fn form_failure(e: FormError) -> Failure {
    Failure::new(UNSUPPORTED_FORM, e.to_string())
}

fn solve_univariate(eq: &Expr, wrt: &str) -> Outcome {
    let coeffs = numeric_polynomial(eq, wrt).map_err(form_failure)?;
    let degree = coeffs.len().saturating_sub(1);
    if coeffs.len() <= 1 {
        return Err(if coeffs.is_empty() {
            Failure::new(INDETERMINATE, "equation holds for every value")
        } else {
            Failure::new(NO_SOLUTION, "equation reduces to a false constant")
        });
    }
    if degree > MAX_DEGREE {
        return Err(Failure::new(
            UNSUPPORTED_FORM,
            format!("degree {degree} exceeds {MAX_DEGREE}"),
        ));
    }
    let (roots, method, iterations) = polynomial_roots(&coeffs);
    let residuals: Vec<f64> = roots.iter().map(|z| horner(&coeffs, *z).0.norm()).collect();
    let mut d = Diagnostics::numeric();
    d.residual_norm = Some(residuals.iter().map(|r| r * r).sum::<f64>().sqrt());
    if method != "analytic" {
        d.convergence = Some(Convergence {
            iterations,
            achieved_tolerance: residuals.iter().copied().fold(0.0, f64::max),
        });
    }
    for w in roots.windows(2) {
        if (w[1] - w[0]).norm() < 1e-6 * (1.0 + w[0].norm()) {
            d.warn(NEAR_DEGENERATE_ROOT);
        }
    }
    // non-adjacent pairs can be closer than adjacent ones once complex
    // roots are interleaved in the (re, im) order
    for (i, a) in roots.iter().enumerate() {
        for b in &roots[i + 1..] {
            if (b - a).norm() < 1e-6 * (1.0 + a.norm()) {
                d.warn(NEAR_DEGENERATE_ROOT);
            }
        }
    }
    let listed: Vec<Value> = roots
        .iter()
        .zip(&residuals)
        .map(|(z, r)| json!({"re": z.re, "im": z.im, "residual": r}))
        .collect();
    let real: Vec<f64> = roots.iter().filter(|z| z.im == 0.0).map(|z| z.re).collect();
    Ok((
        json!({"roots": listed, "real_roots": real, "degree": degree, "method": method}),
        d,
    ))
}

pub struct SolveEquation;

static SOLVE_IN: [Field; 2] = [req("equation", FieldKind::Equation), req("wrt", FieldKind::Symbol)];
static SOLVE_OUT: [Field; 4] = [
    req("roots", FieldKind::Any),
    req("real_roots", FieldKind::Any),
    req("degree", FieldKind::Integer),
    req("method", FieldKind::Any),
];

impl Tool for SolveEquation {
    fn id(&self) -> &'static str {
        "solve_equation"
    }
    fn description(&self) -> &'static str {
        "All roots of a univariate polynomial equation of degree at most 8"
    }
    fn input_fields(&self) -> &'static [Field] {
        &SOLVE_IN
    }
    fn output_fields(&self) -> &'static [Field] {
        &SOLVE_OUT
    }
    fn run(&self, input: &Value) -> Outcome {
        let eq = equation(str_field(input, "equation"))?;
        solve_univariate(&eq, str_field(input, "wrt"))
    }
}

pub struct AlgebraSolver;

static ALG_IN: [Field; 2] = [req("system", FieldKind::ExprList), req("unknowns", FieldKind::SymbolList)];
static ALG_OUT: [Field; 1] = [req("solution", FieldKind::Any)];

impl Tool for AlgebraSolver {
    fn id(&self) -> &'static str {
        "algebra_solver"
    }
    fn description(&self) -> &'static str {
        "Univariate polynomial equation, or a square linear system"
    }
    fn input_fields(&self) -> &'static [Field] {
        &ALG_IN
    }
    fn output_fields(&self) -> &'static [Field] {
        &ALG_OUT
    }
    fn run(&self, input: &Value) -> Outcome {
        let eqs = input["system"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|v| equation(v.as_str().unwrap_or_default()))
            .collect::<Result<Vec<_>, _>>()?;
        let unknowns: Vec<String> = input["unknowns"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|v| v.as_str().map(String::from))
            .collect();
        let mut sorted = unknowns.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != unknowns.len() {
            return Err(Failure::new(UNSUPPORTED_FORM, "repeated unknown"));
        }
        if eqs.len() == 1 && unknowns.len() == 1 {
            return solve_univariate(&eqs[0], &unknowns[0]);
        }
        let mut rows = Vec::with_capacity(eqs.len());
        let mut rhs = Vec::with_capacity(eqs.len());
        for eq in &eqs {
            let (coeffs, constant) = linear_form(eq, &unknowns).map_err(form_failure)?;
            rows.extend(coeffs);
            rhs.push(-constant);
        }
        let (m, n) = (eqs.len(), unknowns.len());
        match m.cmp(&n) {
            Ordering::Less => {
                return Err(Failure::new(
                    SINGULAR_SYSTEM,
                    format!("{m} equations for {n} unknowns"),
                ))
            }
            Ordering::Greater => {
                return Err(Failure::new(
                    UNSUPPORTED_FORM,
                    format!("overdetermined: {m} equations for {n} unknowns"),
                ))
            }
            Ordering::Equal => {}
        }
        let a = DMatrix::from_row_slice(m, n, &rows);
        let b = DVector::from_vec(rhs);
        let (x, d) = solve_square(&a, &b)?;
        let mut solution = Map::new();
        for (name, v) in unknowns.iter().zip(x.iter()) {
            solution.insert(name.clone(), json!(v));
        }
        Ok((json!({ "solution": solution }), d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(eq: &str) -> (Value, Diagnostics) {
        SolveEquation.run(&json!({"equation": eq, "wrt": "t"})).unwrap()
    }

    #[test]
    fn analytic_cases() {
        let (out, _) = solve("6*t - 6 = 0");
        assert_eq!(out["real_roots"], json!([1.0]));
        let (out, _) = solve("t^2 - 5*t + 6 = 0");
        assert_eq!(out["real_roots"], json!([2.0, 3.0]));
        let (out, _) = solve("t^2 + 1 = 0");
        assert_eq!(out["roots"][0]["im"], -1.0);
        assert_eq!(out["roots"][1]["im"], 1.0);
        assert_eq!(out["real_roots"], json!([]));
    }

    #[test]
    fn cubic_through_companion() {
        let (out, d) = solve("(t-1)*(t-2)*(t-4) = 0");
        assert_eq!(out["method"], "companion_qr");
        let r: Vec<f64> = serde_json::from_value(out["real_roots"].clone()).unwrap();
        for (got, want) in r.iter().zip([1.0, 2.0, 4.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(d.residual_norm.unwrap() < 1e-12);
        assert!(!d.has_note(NEAR_DEGENERATE_ROOT));
    }

    #[test]
    fn close_roots_flagged() {
        let (_, d) = solve("(t - 1)*(t - 1 - 1e-7)*(t + 3) = 0");
        assert!(d.has_note(NEAR_DEGENERATE_ROOT));
    }

    #[test]
    fn failures() {
        let bad = |eq: &str| {
            SolveEquation
                .run(&json!({"equation": eq, "wrt": "t"}))
                .unwrap_err()
                .code
        };
        assert_eq!(bad("sin(t) = 0"), UNSUPPORTED_FORM);
        assert_eq!(bad("t^9 = 1"), UNSUPPORTED_FORM);
        assert_eq!(bad("a*t = 1"), UNSUPPORTED_FORM);
        assert_eq!(bad("1 = 2"), NO_SOLUTION);
        assert_eq!(bad("t = t"), INDETERMINATE);
        assert_eq!(bad("t = = 1"), crate::PARSE_ERROR);
    }

    #[test]
    fn linear_systems() {
        let run = |sys: Value, unk: Value| AlgebraSolver.run(&json!({"system": sys, "unknowns": unk}));
        let (out, d) = run(json!(["x + y = 3", "x - y = 1"]), json!(["x", "y"])).unwrap();
        assert_eq!(out, json!({"solution": {"x": 2.0, "y": 1.0}}));
        assert!(d.residual_norm.unwrap() < 1e-14);
        let (out, _) = run(json!(["x = 5"]), json!(["x"])).unwrap();
        assert_eq!(out["real_roots"], json!([5.0]));
        let f = run(json!(["x + y = 1", "2*x + 2*y = 2"]), json!(["x", "y"])).unwrap_err();
        assert_eq!(f.code, SINGULAR_SYSTEM);
        let f = run(json!(["x*y = 1", "x = 2"]), json!(["x", "y"])).unwrap_err();
        assert_eq!(f.code, UNSUPPORTED_FORM);
        let f = run(json!(["x + y = 1"]), json!(["x", "y"])).unwrap_err();
        assert_eq!(f.code, SINGULAR_SYSTEM);
    }
}
