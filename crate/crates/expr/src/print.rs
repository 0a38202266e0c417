//! Infix printer, the inverse of [`crate::parse`] on canonical forms.

use std::fmt::{self, Write};

use crate::expr::{base_exp, neg, pow, Expr};
use crate::number::Number;

const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const NEG: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Rational(r) if !r.is_integer() => PRODUCT,
        Expr::Rational(r) if *r.numer() < 0 => NEG,
        Expr::Float(f) if f.get() < 0.0 => NEG,
        Expr::Rational(_) | Expr::Float(_) | Expr::Symbol(_) | Expr::Func(..) => ATOM,
        Expr::Pow(_, x) if negative_rational(x) => PRODUCT,
        Expr::Pow(..) => POW,
        Expr::Product(_) => PRODUCT,
        Expr::Sum(_) => SUM,
    }
}

fn negative_rational(e: &Expr) -> bool {
    matches!(e, Expr::Rational(r) if *r.numer() < 0)
}

fn write_prec(e: &Expr, min: u8, out: &mut impl Write) -> fmt::Result {
    if precedence(e) < min {
        out.write_char('(')?;
        write_expr(e, out)?;
        out.write_char(')')
    } else {
        write_expr(e, out)
    }
}

fn is_negative_term(e: &Expr) -> bool {
    match e {
        Expr::Product(fs) => fs[0].as_number().is_some_and(Number::is_negative),
        other => other.as_number().is_some_and(Number::is_negative),
    }
}

fn write_product(fs: &[Expr], out: &mut impl Write) -> fmt::Result {
    let (coeff, rest) = match fs[0].as_number() {
        Some(c) => (c, &fs[1..]),
        None => (Number::ONE, fs),
    };
    let mut numer = Vec::new();
    let mut denom = Vec::new();
    for f in rest {
        let (b, e) = base_exp(f);
        match e.as_number() {
            Some(n @ Number::Rational(_)) if n.is_negative() => {
                denom.push(pow(b, Expr::number(n.neg())));
            }
            _ => numer.push(f),
        }
    }
    let minus_one = Number::int(-1);
    if numer.is_empty() {
        write!(out, "{coeff}")?;
    } else {
        if coeff == minus_one {
            out.write_char('-')?;
        } else if !coeff.is_one() {
            write!(out, "{coeff}*")?;
        }
        for (i, f) in numer.iter().enumerate() {
            if i > 0 {
                out.write_char('*')?;
            }
            write_prec(f, POW, out)?;
        }
    }
    for d in &denom {
        out.write_char('/')?;
        write_prec(d, POW, out)?;
    }
    Ok(())
}

fn write_expr(e: &Expr, out: &mut impl Write) -> fmt::Result {
    match e {
        Expr::Rational(_) | Expr::Float(_) => write!(out, "{}", e.as_number().unwrap()),
        Expr::Symbol(s) => out.write_str(s),
        Expr::Func(f, a) => {
            write!(out, "{f}(")?;
            write_expr(a, out)?;
            out.write_char(')')
        }
        Expr::Pow(_, x) if negative_rational(x) => write_product(std::slice::from_ref(e), out),
        Expr::Pow(b, x) => {
            write_prec(b, ATOM, out)?;
            out.write_char('^')?;
            write_prec(x, POW, out)
        }
        Expr::Product(fs) => write_product(fs, out),
        Expr::Sum(ts) => {
            for (i, t) in ts.iter().enumerate() {
                if i == 0 {
                    write_expr(t, out)?;
                } else if is_negative_term(t) {
                    out.write_str(" - ")?;
                    write_prec(&neg(t.clone()), PRODUCT, out)?;
                } else {
                    out.write_str(" + ")?;
                    write_expr(t, out)?;
                }
            }
            Ok(())
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, f)
    }
}
