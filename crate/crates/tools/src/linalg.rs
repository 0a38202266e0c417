//! matrix_determinant, linear_regression and the linear-system kernel used
//! by algebra_solver.

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::diagnostics::ILL_CONDITIONED;
use crate::schema::{req, Field, FieldKind};
use crate::{finite, Diagnostics, Failure, Outcome, Tool};

pub const NON_SQUARE: &str = "NON_SQUARE";
pub const TOO_LARGE: &str = "TOO_LARGE";
pub const SINGULAR_MATRIX: &str = "SINGULAR_MATRIX";
pub const SINGULAR_SYSTEM: &str = "SINGULAR_SYSTEM";
pub const DEGENERATE_DESIGN: &str = "DEGENERATE_DESIGN";

pub const MAX_DIM: usize = 64;
pub const ILL_CONDITIONED_ABOVE: f64 = 1e12;
const ESTIMATOR_ITERATIONS: usize = 5;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Hager's 1-norm estimate of `‖A⁻¹‖₁` with a fixed iteration count,
/// returned as the condition estimate `‖A‖₁·‖A⁻¹‖₁` (at least 1).
/// `None` when `A` is exactly singular.
pub fn condition_estimate(a: &DMatrix<f64>) -> Option<f64> {
    let n = a.nrows();
    let lu = a.clone().lu();
    let lu_t = a.transpose().lu();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for k in 0..ESTIMATOR_ITERATIONS {
        let y = lu.solve(&x)?;
        let new_est = y.iter().map(|v| v.abs()).sum::<f64>();
        if k > 0 && new_est <= est {
            break;
        }
        est = new_est;
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = lu_t.solve(&xi)?;
        let (j, zj) = z
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best });
        if k > 0 && zj <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[j] = 1.0;
    }
    let c = one_norm(a) * est;
    c.is_finite().then_some(c.max(1.0))
}

fn matrix_from_json(v: &Value) -> Result<DMatrix<f64>, Failure> {
    let rows: Vec<Vec<f64>> = v
        .as_array()
        .into_iter()
        .flatten()
        .map(|r| r.as_array().into_iter().flatten().filter_map(Value::as_f64).collect())
        .collect();
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        let shape: Vec<usize> = rows.iter().map(Vec::len).collect();
        return Err(Failure::new(
            NON_SQUARE,
            format!("{n} rows with lengths {shape:?}"),
        ));
    }
    if n > MAX_DIM {
        return Err(Failure::new(TOO_LARGE, format!("{n} > {MAX_DIM}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub struct MatrixDeterminant;

static DET_IN: [Field; 1] = [req("matrix", FieldKind::NumberMatrix)];
static DET_OUT: [Field; 1] = [req("value", FieldKind::Number)];

impl Tool for MatrixDeterminant {
    fn id(&self) -> &'static str {
        "matrix_determinant"
    }
    fn description(&self) -> &'static str {
        "Determinant by LU with partial pivoting, with a 1-norm condition estimate"
    }
    fn input_fields(&self) -> &'static [Field] {
        &DET_IN
    }
    fn output_fields(&self) -> &'static [Field] {
        &DET_OUT
    }
    fn run(&self, input: &Value) -> Outcome {
        let a = matrix_from_json(&input["matrix"])?;
        let det = finite(a.clone().lu().determinant(), "determinant")?;
        let mut d = Diagnostics::numeric();
        match condition_estimate(&a) {
            Some(c) => {
                d.condition_number = Some(c);
                if c > ILL_CONDITIONED_ABOVE {
                    d.warn(ILL_CONDITIONED);
                }
            }
            None => d.warn(SINGULAR_MATRIX),
        }
        Ok((json!({"value": det}), d))
    }
}

/// Solves the square system `a·x = b` by LU with partial pivoting.
pub fn solve_square(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, Diagnostics), Failure> {
    let n = a.nrows();
    let lu = a.clone().lu();
    let u = lu.u();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = n as f64 * f64::EPSILON * scale;
    if scale == 0.0 || u.diagonal().iter().any(|p| p.abs() <= tiny) {
        return Err(Failure::new(SINGULAR_SYSTEM, "coefficient matrix is singular"));
    }
    let x = lu
        .solve(b)
        .ok_or_else(|| Failure::new(SINGULAR_SYSTEM, "coefficient matrix is singular"))?;
    let mut d = Diagnostics::numeric();
    d.residual_norm = Some((a * &x - b).norm());
    if let Some(c) = condition_estimate(a) {
        d.condition_number = Some(c);
        if c > ILL_CONDITIONED_ABOVE {
            d.warn(ILL_CONDITIONED);
        }
    }
    Ok((x, d))
}

pub struct LinearRegression;

static REG_IN: [Field; 1] = [req("points", FieldKind::Points)];
static REG_OUT: [Field; 2] = [req("slope", FieldKind::Number), req("intercept", FieldKind::Number)];

fn points_from_json(v: &Value) -> Vec<(f64, f64)> {
    v.as_array()
        .into_iter()
        .flatten()
        .filter_map(|p| match p {
            Value::Array(xy) => Some((xy[0].as_f64()?, xy[1].as_f64()?)),
            Value::Object(o) => Some((o.get("x")?.as_f64()?, o.get("y")?.as_f64()?)),
            _ => None,
        })
        .collect()
}

/// Least squares `y ≈ slope·x + intercept` through a Householder QR of the
/// design matrix. Returns (slope, intercept, residual norm, R²).
pub fn fit_line(points: &[(f64, f64)]) -> Result<(f64, f64, f64, f64), Failure> {
    let n = points.len();
    let distinct = points.iter().any(|p| p.0 != points[0].0);
    if n < 2 || !distinct {
        return Err(Failure::new(
            DEGENERATE_DESIGN,
            "need at least two distinct x values",
        ));
    }
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { points[i].0 });
    let y = DVector::from_fn(n, |i, _| points[i].1);
    let (q, r) = x.clone().qr().unpack();
    let beta = r
        .solve_upper_triangular(&(q.transpose() * &y))
        .ok_or_else(|| Failure::new(DEGENERATE_DESIGN, "rank-deficient design"))?;
    let residual = (&x * &beta - &y).norm();
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if sst == 0.0 { 1.0 } else { 1.0 - residual * residual / sst };
    Ok((beta[1], beta[0], residual, r2))
}

impl Tool for LinearRegression {
    fn id(&self) -> &'static str {
        "linear_regression"
    }
    fn description(&self) -> &'static str {
        "Least-squares line through (x, y) points via QR"
    }
    fn input_fields(&self) -> &'static [Field] {
        &REG_IN
    }
    fn output_fields(&self) -> &'static [Field] {
        &REG_OUT
    }
    fn run(&self, input: &Value) -> Outcome {
        let pts = points_from_json(&input["points"]);
        let (slope, intercept, residual, r2) = fit_line(&pts)?;
        let mut d = Diagnostics::numeric();
        d.residual_norm = Some(residual);
        d.r_squared = Some(r2);
        Ok((json!({"slope": slope, "intercept": intercept}), d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(m: Value) -> Outcome {
        MatrixDeterminant.run(&json!({ "matrix": m }))
    }

    #[test]
    fn small_determinants() {
        let (out, d) = det(json!([[1, 0, 0], [0, 1, 0], [0, 0, 1]])).unwrap();
        assert_eq!(out["value"], 1.0);
        assert_eq!(d.condition_number, Some(1.0));
        let (out, _) = det(json!([[1, 2], [3, 4]])).unwrap();
        assert!((out["value"].as_f64().unwrap() + 2.0).abs() < 1e-15);
    }

    #[test]
    fn near_singular_is_flagged() {
        let (out, d) = det(json!([[1.0, 1.0], [1.0, 1.0 + 1e-14]])).unwrap();
        let cofactor = 1.0 * (1.0 + 1e-14) - 1.0 * 1.0;
        assert_eq!(out["value"].as_f64().unwrap(), cofactor);
        assert!(d.condition_number.unwrap() > 1e12);
        assert!(d.has_note(ILL_CONDITIONED));
    }

    #[test]
    fn singular_and_shape_errors() {
        let (out, d) = det(json!([[1, 2], [2, 4]])).unwrap();
        assert_eq!(out["value"], 0.0);
        assert!(d.has_note(SINGULAR_MATRIX));
        assert_eq!(det(json!([[1, 2, 3], [4, 5, 6]])).unwrap_err().code, NON_SQUARE);
        let big: Vec<Vec<f64>> = (0..65).map(|_| vec![0.0; 65]).collect();
        assert_eq!(det(json!(big)).unwrap_err().code, TOO_LARGE);
    }

    #[test]
    fn regression_examples() {
        let (s, i, res, r2) = fit_line(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && (i - 1.0).abs() < 1e-12 && res < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
        let (s, i, _, _) = fit_line(&[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert!((s - 1.0).abs() < 1e-12 && i.abs() < 1e-12);
        let (s, i, _, _) = fit_line(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        assert!(s.abs() < 1e-12 && (i - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            fit_line(&[(1.0, 0.0), (1.0, 2.0)]).unwrap_err().code,
            DEGENERATE_DESIGN
        );
    }

    #[test]
    fn singular_system() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(solve_square(&a, &b).unwrap_err().code, SINGULAR_SYSTEM);
    }
}
