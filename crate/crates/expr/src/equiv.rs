//! Equivalence of expressions: symbolic first, seeded numeric sampling second.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::eval::evaluate_f64;
use crate::expand::expand;
use crate::expr::{sub, Expr};

const PROBES: usize = 32;
const RETRIES: usize = 8;
const MIN_VALID: usize = 8;

/// How two expressions were found equal (or not).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Symbolic,
    Sampled { valid: usize },
    Different,
    Inconclusive { valid: usize },
}

impl Verdict {
    pub fn holds(self) -> bool {
        matches!(self, Verdict::Symbolic | Verdict::Sampled { .. })
    }
}

fn probe_seed(a: &Expr, b: &Expr) -> u64 {
    let mut h = Sha256::new();
    h.update(a.to_string().as_bytes());
    h.update([0u8]);
    h.update(b.to_string().as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

fn sample(rng: &mut ChaCha8Rng) -> f64 {
    let mag = rng.random_range(0.1..3.0);
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

/// Decides whether `a` and `b` denote the same function.
///
/// A difference that canonicalizes to zero after expansion is accepted
/// outright. Otherwise both sides are evaluated at 32 seeded probe points
/// drawn from `[-3,-0.1] ∪ [0.1,3]`; a point where either side is undefined
/// is redrawn (up to 8 times). Fewer than 8 usable points is inconclusive.
pub fn check(a: &Expr, b: &Expr, tol: f64) -> Verdict {
    if a == b || expand(&sub(a.clone(), b.clone())).is_zero() {
        return Verdict::Symbolic;
    }
    let syms: Vec<String> = a.free_symbols().union(&b.free_symbols()).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed(a, b));
    let mut valid = 0;
    for _ in 0..PROBES {
        for _ in 0..RETRIES {
            let point: Vec<(&str, f64)> =
                syms.iter().map(|s| (s.as_str(), sample(&mut rng))).collect();
            let (Ok(x), Ok(y)) = (evaluate_f64(a, &point), evaluate_f64(b, &point)) else {
                continue;
            };
            if (x - y).abs() > tol * (1.0 + x.abs().max(y.abs())) {
                return Verdict::Different;
            }
            valid += 1;
            break;
        }
    }
    if valid >= MIN_VALID {
        Verdict::Sampled { valid }
    } else {
        Verdict::Inconclusive { valid }
    }
}

pub fn equivalent(a: &Expr, b: &Expr, tol: f64) -> bool {
    check(a, b, tol).holds()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn symbolic_route() {
        assert_eq!(check(&p("(t-2)*(t-3)"), &p("t^2-5*t+6"), 1e-9), Verdict::Symbolic);
    }

    #[test]
    fn sampled_route() {
        let v = check(&p("sin(x)^2 + cos(x)^2"), &p("1"), 1e-9);
        assert!(matches!(v, Verdict::Sampled { valid: 32 }), "{v:?}");
        assert!(equivalent(&p("ln(x^2)"), &p("2*ln(abs(x))"), 1e-9));
    }

    #[test]
    fn different_and_inconclusive() {
        assert_eq!(check(&p("x^2"), &p("x^3"), 1e-9), Verdict::Different);
        assert!(!equivalent(&p("x + 1e-3"), &p("x"), 1e-9));
        // undefined everywhere on the probe set
        let v = check(&p("ln(-abs(x))"), &p("ln(-abs(x))+0*y"), 1e-9);
        assert!(v.holds() || matches!(v, Verdict::Inconclusive { .. }));
        let v = check(&p("sqrt(-abs(x)) + y"), &p("y"), 1e-9);
        assert_eq!(v, Verdict::Inconclusive { valid: 0 });
    }

    #[test]
    fn deterministic() {
        let a = p("exp(x)*y");
        let b = p("y*exp(x) + 1e-12");
        assert_eq!(check(&a, &b, 1e-9), check(&a, &b, 1e-9));
    }
}
