//! Seeded random expression generator used by property tests and benches.

use rand::Rng;

use crate::expr::{add, apply, mul, pow, Expr, Func};

/// Builds a random canonical expression of at most `depth` levels over
/// `symbols`. Integer exponents stay in `1..=3` and coefficients in `-5..=5`
/// so that results stay printable and evaluable.
pub fn random_expr<R: Rng + ?Sized>(rng: &mut R, depth: u32, symbols: &[&str]) -> Expr {
    if depth == 0 || rng.random_bool(0.25) {
        return leaf(rng, symbols);
    }
    match rng.random_range(0..5) {
        0 => {
            let n = rng.random_range(2..=3);
            add((0..n).map(|_| random_expr(rng, depth - 1, symbols)).collect())
        }
        1 => {
            let n = rng.random_range(2..=3);
            mul((0..n).map(|_| random_expr(rng, depth - 1, symbols)).collect())
        }
        2 => pow(
            random_expr(rng, depth - 1, symbols),
            Expr::int(rng.random_range(1..=3)),
        ),
        3 => {
            let f = [Func::Sin, Func::Cos, Func::Exp][rng.random_range(0..3)];
            apply(f, random_expr(rng, depth - 1, symbols))
        }
        _ => mul(vec![
            Expr::int(rng.random_range(-5..=5)),
            random_expr(rng, depth - 1, symbols),
        ]),
    }
}

fn leaf<R: Rng + ?Sized>(rng: &mut R, symbols: &[&str]) -> Expr {
    if symbols.is_empty() || rng.random_bool(0.3) {
        Expr::int(rng.random_range(-5..=5))
    } else {
        Expr::symbol(symbols[rng.random_range(0..symbols.len())])
    }
}
