//! Exact rationals with a float fallback.
//!
//! Arithmetic stays exact while it fits in `i64`; on overflow, or as soon as
//! a float operand is involved, the result degrades to `f64`.

use std::cmp::Ordering;
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedMul, Signed, ToPrimitive, Zero};

pub type Rational = Ratio<i64>;

/// Totally ordered, hashable `f64` used inside expressions.
///
/// NaN is never stored; `-0.0` is normalized to `0.0` so that structurally
/// equal expressions print identically.
#[derive(Clone, Copy, Debug)]
pub struct Float(f64);

impl Float {
    pub fn new(v: f64) -> Option<Float> {
        if v.is_finite() {
            Some(Float(if v == 0.0 { 0.0 } else { v }))
        } else {
            None
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl PartialEq for Float {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for Float {}

impl PartialOrd for Float {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Float {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl std::hash::Hash for Float {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state)
    }
}

impl fmt::Display for Float {
    // `{:?}` on f64 is the shortest representation that round-trips and
    // always carries a '.' or an exponent, so it re-parses as a float.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Number {
    Rational(Rational),
    Float(Float),
}

impl Number {
    pub const ZERO: Number = Number::Rational(Ratio::new_raw(0, 1));
    pub const ONE: Number = Number::Rational(Ratio::new_raw(1, 1));

    pub fn int(n: i64) -> Number {
        Number::Rational(Rational::from_integer(n))
    }

    /// Builds a float number; non-finite input yields `None`.
    pub fn float(v: f64) -> Option<Number> {
        Float::new(v).map(Number::Float)
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Number::Rational(r) => ratio_to_f64(r),
            Number::Float(f) => f.get(),
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Number::Rational(r) => r.is_zero(),
            Number::Float(f) => f.get() == 0.0,
        }
    }

    pub fn is_one(self) -> bool {
        matches!(self, Number::Rational(r) if r == Rational::from_integer(1))
    }

    pub fn is_negative(self) -> bool {
        match self {
            Number::Rational(r) => r.is_negative(),
            Number::Float(f) => f.get() < 0.0,
        }
    }

    pub fn as_integer(self) -> Option<i64> {
        match self {
            Number::Rational(r) if r.is_integer() => Some(*r.numer()),
            _ => None,
        }
    }

    pub fn neg(self) -> Number {
        match self {
            Number::Rational(r) => match r.numer().checked_neg() {
                Some(n) => Number::Rational(Rational::new_raw(n, *r.denom())),
                None => float_or_nan(-ratio_to_f64(r)),
            },
            Number::Float(f) => float_or_nan(-f.get()),
        }
    }

    pub fn add(self, other: Number) -> Number {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => match a.checked_add(&b) {
                Some(r) => Number::Rational(r),
                None => float_or_nan(ratio_to_f64(a) + ratio_to_f64(b)),
            },
            _ => float_or_nan(self.to_f64() + other.to_f64()),
        }
    }

    pub fn mul(self, other: Number) -> Number {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => match a.checked_mul(&b) {
                Some(r) => Number::Rational(r),
                None => float_or_nan(ratio_to_f64(a) * ratio_to_f64(b)),
            },
            _ => float_or_nan(self.to_f64() * other.to_f64()),
        }
    }

    /// `self^exp`, or `None` when the result is not representable as a
    /// number without losing exactness (irrational roots, division by zero).
    pub fn pow(self, exp: Number) -> Option<Number> {
        match (self, exp) {
            (Number::Rational(b), Number::Rational(e)) => {
                if e.is_integer() {
                    rational_powi(b, *e.numer())
                } else {
                    rational_root(b, e)
                }
            }
            _ => {
                let v = self.to_f64().powf(exp.to_f64());
                Number::float(v)
            }
        }
    }
}

impl PartialOrd for Number {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Number {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => a.cmp(b),
            _ => self.to_f64().total_cmp(&other.to_f64()),
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Rational(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Number::Rational(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Number::Float(x) => write!(f, "{x}"),
        }
    }
}

fn ratio_to_f64(r: Rational) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

// Only reachable on float overflow; callers treat NaN-free invariants by
// saturating to the largest finite magnitude.
fn float_or_nan(v: f64) -> Number {
    match Float::new(v) {
        Some(f) => Number::Float(f),
        None => Number::Float(Float(if v.is_sign_negative() { f64::MIN } else { f64::MAX })),
    }
}

fn rational_powi(base: Rational, exp: i64) -> Option<Number> {
    if base.is_zero() {
        return match exp.cmp(&0) {
            Ordering::Less => None,
            Ordering::Equal => Some(Number::ONE),
            Ordering::Greater => Some(Number::ZERO),
        };
    }
    let base = if exp < 0 { base.recip() } else { base };
    let n = exp.unsigned_abs();
    let mut acc = Rational::from_integer(1);
    for _ in 0..n.min(4096) {
        match acc.checked_mul(&base) {
            Some(r) => acc = r,
            None => return Number::float(ratio_to_f64(base).powf(n as f64)),
        }
    }
    if n > 4096 {
        return Number::float(ratio_to_f64(base).powf(n as f64));
    }
    Some(Number::Rational(acc))
}

// Exact q-th root of a non-negative rational raised to p, when it exists.
fn rational_root(base: Rational, exp: Rational) -> Option<Number> {
    if base.is_negative() {
        return None;
    }
    let q = u32::try_from(*exp.denom()).ok()?;
    let num = exact_root(*base.numer(), q)?;
    let den = exact_root(*base.denom(), q)?;
    rational_powi(Rational::new(num, den), *exp.numer())
}

fn exact_root(n: i64, q: u32) -> Option<i64> {
    if n < 0 || q == 0 {
        return None;
    }
    let guess = (n as f64).powf(1.0 / q as f64).round() as i64;
    for cand in [guess - 1, guess, guess + 1] {
        if cand >= 0 && cand.checked_pow(q) == Some(n) {
            return Some(cand);
        }
    }
    None
}

/// Lowest-terms rational from a numerator/denominator pair.
pub fn rational(n: i64, d: i64) -> Rational {
    let g = n.gcd(&d);
    let (n, d) = if g == 0 { (n, d) } else { (n / g, d / g) };
    if d < 0 {
        Rational::new_raw(-n, -d)
    } else {
        Rational::new_raw(n, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rationals_are_lowest_terms() {
        let r = rational(2, 4);
        assert_eq!((*r.numer(), *r.denom()), (1, 2));
        let r = rational(3, -6);
        assert_eq!((*r.numer(), *r.denom()), (-1, 2));
    }

    #[test]
    fn overflow_degrades_to_float() {
        let big = Number::int(i64::MAX);
        assert!(matches!(big.add(Number::int(1)), Number::Float(_)));
        assert!(matches!(big.mul(Number::int(3)), Number::Float(_)));
    }

    #[test]
    fn exact_roots() {
        let four = Number::int(4);
        let half = Number::Rational(rational(1, 2));
        assert_eq!(four.pow(half), Some(Number::int(2)));
        assert_eq!(Number::int(2).pow(half), None);
        assert_eq!(Number::ZERO.pow(Number::int(-1)), None);
        assert_eq!(
            Number::int(2).pow(Number::int(-2)),
            Some(Number::Rational(rational(1, 4)))
        );
    }

    #[test]
    fn float_display_round_trips() {
        for v in [0.5, 1.0, 1e-14, 1e300, -2.25, 123456.0] {
            let s = Float::new(v).unwrap().to_string();
            assert!(s.contains('.') || s.contains('e'), "{s}");
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
