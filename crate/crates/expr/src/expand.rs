//! Distribution of products over sums and polynomial coefficient extraction.

use thiserror::Error;

use crate::expr::{add, apply, base_exp, mul, pow, split_coeff, Expr};
use crate::number::Number;

const MAX_TERMS: usize = 4096;
const MAX_POWER: i64 = 16;

/// Multiplies out products of sums and small positive integer powers of
/// sums. Expansion is abandoned (the factor is left as is) once it would
/// exceed a fixed term budget.
pub fn expand(e: &Expr) -> Expr {
    match e {
        Expr::Rational(_) | Expr::Float(_) | Expr::Symbol(_) => e.clone(),
        Expr::Sum(ts) => add(ts.iter().map(expand).collect()),
        Expr::Product(fs) => distribute(fs.iter().map(expand).collect()),
        Expr::Pow(b, x) => {
            let b = expand(b);
            let x = expand(x);
            match (&b, x.as_number().and_then(Number::as_integer)) {
                (Expr::Sum(_), Some(n)) if (2..=MAX_POWER).contains(&n) => {
                    distribute(vec![b.clone(); n as usize])
                }
                _ => pow(b, x),
            }
        }
        Expr::Func(f, a) => apply(*f, expand(a)),
    }
}

fn distribute(factors: Vec<Expr>) -> Expr {
    let mut terms = vec![Expr::one()];
    for f in &factors {
        let parts: Vec<&Expr> = match f {
            Expr::Sum(ts) => ts.iter().collect(),
            other => vec![other],
        };
        if terms.len() * parts.len() > MAX_TERMS {
            return mul(factors);
        }
        let mut next = Vec::with_capacity(terms.len() * parts.len());
        for t in &terms {
            for p in &parts {
                next.push(mul(vec![t.clone(), (*p).clone()]));
            }
        }
        // re-flatten: a product may collapse into a sum again, e.g. (x+1)^1
        terms = next
            .into_iter()
            .flat_map(|t| match t {
                Expr::Sum(inner) => inner,
                other => vec![other],
            })
            .collect();
    }
    add(terms)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormError {
    #[error("{0} appears in a non-polynomial position")]
    NotPolynomial(String),
    #[error("term {0} is not linear in the unknowns")]
    NotLinear(String),
    #[error("coefficient depends on free symbol {0:?}")]
    SymbolicCoefficient(String),
}

fn terms_of(e: &Expr) -> Vec<Expr> {
    match expand(e) {
        Expr::Sum(ts) => ts,
        Expr::Rational(r) if *r.numer() == 0 => vec![],
        other => vec![other],
    }
}

/// Coefficients of `e` as a polynomial in `var`, lowest degree first.
/// Coefficients may contain other symbols.
pub fn polynomial_coefficients(e: &Expr, var: &str) -> Result<Vec<Expr>, FormError> {
    let mut by_degree: Vec<Vec<Expr>> = Vec::new();
    for term in terms_of(e) {
        let (c, rest) = split_coeff(&term);
        let mut degree = 0usize;
        let mut others = vec![Expr::number(c)];
        if let Some(rest) = rest {
            let factors = match rest {
                Expr::Product(fs) => fs,
                other => vec![other],
            };
            for f in factors {
                let (b, x) = base_exp(&f);
                if b == Expr::Symbol(var.to_string()) {
                    let n = x
                        .as_number()
                        .and_then(Number::as_integer)
                        .filter(|n| *n >= 0)
                        .ok_or_else(|| FormError::NotPolynomial(var.to_string()))?;
                    degree += n as usize;
                } else if f.depends_on(var) {
                    return Err(FormError::NotPolynomial(var.to_string()));
                } else {
                    others.push(f);
                }
            }
        }
        if by_degree.len() <= degree {
            by_degree.resize(degree + 1, Vec::new());
        }
        by_degree[degree].push(mul(others));
    }
    let mut coeffs: Vec<Expr> = by_degree.into_iter().map(add).collect();
    while coeffs.last().is_some_and(Expr::is_zero) {
        coeffs.pop();
    }
    Ok(coeffs)
}

/// Numeric polynomial coefficients (lowest degree first).
pub fn numeric_polynomial(e: &Expr, var: &str) -> Result<Vec<f64>, FormError> {
    polynomial_coefficients(e, var)?
        .iter()
        .map(|c| match c.as_number() {
            Some(n) => Ok(n.to_f64()),
            None => Err(FormError::SymbolicCoefficient(
                c.free_symbols().into_iter().next().unwrap_or_default(),
            )),
        })
        .collect()
}

/// Splits `e` into `coeffs · unknowns + constant` with numeric coefficients.
pub fn linear_form(e: &Expr, unknowns: &[String]) -> Result<(Vec<f64>, f64), FormError> {
    let mut coeffs = vec![0.0; unknowns.len()];
    let mut constant = 0.0;
    for term in terms_of(e) {
        let (c, rest) = split_coeff(&term);
        match rest {
            None => constant += c.to_f64(),
            Some(Expr::Symbol(s)) => match unknowns.iter().position(|u| *u == s) {
                Some(i) => coeffs[i] += c.to_f64(),
                None => return Err(FormError::SymbolicCoefficient(s)),
            },
            Some(other) => {
                if unknowns.iter().any(|u| other.depends_on(u)) {
                    return Err(FormError::NotLinear(other.to_string()));
                }
                let sym = other.free_symbols().into_iter().next().unwrap_or_default();
                return Err(FormError::SymbolicCoefficient(sym));
            }
        }
    }
    Ok((coeffs, constant))
}
