//! Symbolic differentiation.

use crate::expr::{add, apply, mul, neg, pow, Expr, Func};

/// d/d`wrt` of `e`, canonical.
///
/// `abs` differentiates to `abs(u)/u`, which is undefined at `u = 0`.
pub fn differentiate(e: &Expr, wrt: &str) -> Expr {
    if !e.depends_on(wrt) {
        return Expr::zero();
    }
    match e {
        Expr::Rational(_) | Expr::Float(_) => Expr::zero(),
        Expr::Symbol(_) => Expr::one(),
        Expr::Sum(ts) => add(ts.iter().map(|t| differentiate(t, wrt)).collect()),
        Expr::Product(fs) => {
            let mut terms = Vec::with_capacity(fs.len());
            for (i, f) in fs.iter().enumerate() {
                if !f.depends_on(wrt) {
                    continue;
                }
                let mut parts = fs.clone();
                parts[i] = differentiate(f, wrt);
                terms.push(mul(parts));
            }
            add(terms)
        }
        Expr::Pow(b, x) => {
            let (b, x) = (&**b, &**x);
            if !x.depends_on(wrt) {
                mul(vec![
                    x.clone(),
                    pow(b.clone(), add(vec![x.clone(), Expr::int(-1)])),
                    differentiate(b, wrt),
                ])
            } else if !b.depends_on(wrt) {
                mul(vec![e.clone(), apply(Func::Ln, b.clone()), differentiate(x, wrt)])
            } else {
                let inner = add(vec![
                    mul(vec![differentiate(x, wrt), apply(Func::Ln, b.clone())]),
                    mul(vec![
                        x.clone(),
                        differentiate(b, wrt),
                        pow(b.clone(), Expr::int(-1)),
                    ]),
                ]);
                mul(vec![e.clone(), inner])
            }
        }
        Expr::Func(f, u) => {
            let u = &**u;
            let outer = match f {
                Func::Sin => apply(Func::Cos, u.clone()),
                Func::Cos => neg(apply(Func::Sin, u.clone())),
                Func::Tan => pow(apply(Func::Cos, u.clone()), Expr::int(-2)),
                Func::Exp => e.clone(),
                Func::Ln => pow(u.clone(), Expr::int(-1)),
                Func::Sqrt => mul(vec![
                    Expr::Rational(crate::number::rational(1, 2)),
                    pow(e.clone(), Expr::int(-1)),
                ]),
                Func::Abs => mul(vec![e.clone(), pow(u.clone(), Expr::int(-1))]),
            };
            mul(vec![outer, differentiate(u, wrt)])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse;

    fn d(s: &str, x: &str) -> String {
        differentiate(&parse(s).unwrap(), x).to_string()
    }

    #[test]
    fn polynomial_rule() {
        assert_eq!(d("A*t^3 - B*t^2 + C*t", "t"), "3*A*t^2 - 2*B*t + C");
        assert_eq!(d("x^5", "x"), "5*x^4");
        assert_eq!(d("c", "x"), "0");
        assert_eq!(d("x", "x"), "1");
    }

    #[test]
    fn function_rules() {
        assert_eq!(d("sin(x)", "x"), "cos(x)");
        assert_eq!(d("cos(x)", "x"), "-sin(x)");
        assert_eq!(d("exp(2*x)", "x"), "2*exp(2*x)");
        assert_eq!(d("ln(x)", "x"), "1/x");
        assert_eq!(d("abs(x)", "x"), "abs(x)/x");
        assert_eq!(d("sqrt(x)", "x"), "1/2/sqrt(x)");
        assert_eq!(d("2^x", "x"), "2^x*ln(2)");
    }
}
