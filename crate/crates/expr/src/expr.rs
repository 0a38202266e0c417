//! Expression tree and its canonicalizing constructors.
//!
//! Every constructor in this module (`add`, `mul`, `pow`, `apply`, ...)
//! assumes canonical children and returns a canonical node, so a tree built
//! only through them never needs a separate normalization pass. `canonical`
//! rebuilds an arbitrary tree bottom-up through the same constructors.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::number::{Float, Number, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Ln,
        Func::Sqrt,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Immutable symbolic expression.
///
/// Sums and products keep their children sorted (see [`Expr::cmp`] and the
/// term order used by [`add`]), rationals are in lowest terms, and numeric
/// sub-terms are folded, so two canonical trees are equal exactly when they
/// print identically.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Rational(Rational),
    Float(Float),
    Symbol(String),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Func(Func, Box<Expr>),
}

impl Expr {
    fn kind_rank(&self) -> u8 {
        match self {
            Expr::Rational(_) => 0,
            Expr::Float(_) => 1,
            Expr::Symbol(_) => 2,
            Expr::Func(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Product(_) => 5,
            Expr::Sum(_) => 6,
        }
    }

    pub fn int(n: i64) -> Expr {
        Expr::Rational(Rational::from_integer(n))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn symbol(name: impl Into<String>) -> Expr {
        Expr::Symbol(name.into())
    }

    pub fn number(n: Number) -> Expr {
        match n {
            Number::Rational(r) => Expr::Rational(r),
            Number::Float(f) => Expr::Float(f),
        }
    }

    /// Float constant; non-finite values are rejected.
    pub fn float(v: f64) -> Option<Expr> {
        Float::new(v).map(Expr::Float)
    }

    pub fn as_number(&self) -> Option<Number> {
        match self {
            Expr::Rational(r) => Some(Number::Rational(*r)),
            Expr::Float(f) => Some(Number::Float(*f)),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_number().is_some_and(Number::is_zero)
    }

    pub fn is_one(&self) -> bool {
        self.as_number().is_some_and(Number::is_one)
    }

    /// Rebuilds the tree through the canonical constructors.
    pub fn canonical(&self) -> Expr {
        match self {
            Expr::Rational(_) | Expr::Float(_) | Expr::Symbol(_) => self.clone(),
            Expr::Sum(ts) => add(ts.iter().map(Expr::canonical).collect()),
            Expr::Product(fs) => mul(fs.iter().map(Expr::canonical).collect()),
            Expr::Pow(b, e) => pow(b.canonical(), e.canonical()),
            Expr::Func(f, a) => apply(*f, a.canonical()),
        }
    }

    pub fn free_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Symbol(s) => {
                out.insert(s.clone());
            }
            Expr::Rational(_) | Expr::Float(_) => {}
            Expr::Sum(cs) | Expr::Product(cs) => cs.iter().for_each(|c| c.collect_symbols(out)),
            Expr::Pow(b, e) => {
                b.collect_symbols(out);
                e.collect_symbols(out);
            }
            Expr::Func(_, a) => a.collect_symbols(out),
        }
    }

    pub fn depends_on(&self, sym: &str) -> bool {
        match self {
            Expr::Symbol(s) => s == sym,
            Expr::Rational(_) | Expr::Float(_) => false,
            Expr::Sum(cs) | Expr::Product(cs) => cs.iter().any(|c| c.depends_on(sym)),
            Expr::Pow(b, e) => b.depends_on(sym) || e.depends_on(sym),
            Expr::Func(_, a) => a.depends_on(sym),
        }
    }

    /// Replaces symbols by expressions and re-canonicalizes.
    pub fn substitute(&self, subs: &BTreeMap<String, Expr>) -> Expr {
        match self {
            Expr::Symbol(s) => subs.get(s).cloned().unwrap_or_else(|| self.clone()),
            Expr::Rational(_) | Expr::Float(_) => self.clone(),
            Expr::Sum(ts) => add(ts.iter().map(|t| t.substitute(subs)).collect()),
            Expr::Product(fs) => mul(fs.iter().map(|f| f.substitute(subs)).collect()),
            Expr::Pow(b, e) => pow(b.substitute(subs), e.substitute(subs)),
            Expr::Func(f, a) => apply(*f, a.substitute(subs)),
        }
    }

    /// Number of nodes; used to bound expansion and random generation.
    pub fn size(&self) -> usize {
        match self {
            Expr::Rational(_) | Expr::Float(_) | Expr::Symbol(_) => 1,
            Expr::Sum(cs) | Expr::Product(cs) => 1 + cs.iter().map(Expr::size).sum::<usize>(),
            Expr::Pow(b, e) => 1 + b.size() + e.size(),
            Expr::Func(_, a) => 1 + a.size(),
        }
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    /// Structural total order: node kind first, then children recursively.
    fn cmp(&self, other: &Self) -> Ordering {
        let by_kind = self.kind_rank().cmp(&other.kind_rank());
        if by_kind != Ordering::Equal {
            return by_kind;
        }
        match (self, other) {
            (Expr::Rational(a), Expr::Rational(b)) => a.cmp(b),
            (Expr::Float(a), Expr::Float(b)) => a.cmp(b),
            (Expr::Symbol(a), Expr::Symbol(b)) => a.cmp(b),
            (Expr::Func(f, a), Expr::Func(g, b)) => f.cmp(g).then_with(|| a.cmp(b)),
            (Expr::Pow(b1, e1), Expr::Pow(b2, e2)) => b1.cmp(b2).then_with(|| e1.cmp(e2)),
            (Expr::Product(a), Expr::Product(b)) | (Expr::Sum(a), Expr::Sum(b)) => a.cmp(b),
            _ => unreachable!("kind ranks matched"),
        }
    }
}

// ---------------------------------------------------------------------------
// Sums

/// Splits a term into numeric coefficient and the remaining monomial.
pub(crate) fn split_coeff(term: &Expr) -> (Number, Option<Expr>) {
    match term {
        Expr::Rational(_) | Expr::Float(_) => (term.as_number().unwrap(), None),
        Expr::Product(fs) => match fs[0].as_number() {
            Some(c) => {
                let rest = &fs[1..];
                let rest = if rest.len() == 1 {
                    rest[0].clone()
                } else {
                    Expr::Product(rest.to_vec())
                };
                (c, Some(rest))
            }
            None => (Number::ONE, Some(term.clone())),
        },
        _ => (Number::ONE, Some(term.clone())),
    }
}

/// Factors of a monomial as (base, exponent) pairs, in stored order.
pub(crate) fn base_exp(factor: &Expr) -> (Expr, Expr) {
    match factor {
        Expr::Pow(b, e) => ((**b).clone(), (**e).clone()),
        _ => (factor.clone(), Expr::one()),
    }
}

fn factor_list(monomial: &Expr) -> Vec<(Expr, Expr)> {
    match monomial {
        Expr::Product(fs) => fs.iter().map(base_exp).collect(),
        other => vec![base_exp(other)],
    }
}

/// Total degree used to order sum terms (highest first).
fn degree(e: &Expr) -> f64 {
    match e {
        Expr::Rational(_) | Expr::Float(_) => 0.0,
        Expr::Symbol(_) | Expr::Func(..) => 1.0,
        Expr::Pow(b, ex) => match ex.as_number() {
            Some(n) => degree(b) * n.to_f64(),
            None => degree(b),
        },
        Expr::Product(fs) => fs.iter().map(degree).sum(),
        Expr::Sum(ts) => ts.iter().map(degree).fold(0.0, f64::max),
    }
}

/// Order of terms inside a sum: graded by degree (descending), then
/// lexicographic on (base ascending, exponent descending), then structural.
fn term_order(a: &Expr, b: &Expr) -> Ordering {
    let (_, ra) = split_coeff(a);
    let (_, rb) = split_coeff(b);
    match (ra, rb) {
        (None, None) => a.cmp(b),
        (None, Some(_)) => Ordering::Greater,
        (Some(_), None) => Ordering::Less,
        (Some(ra), Some(rb)) => {
            let by_degree = degree(&rb).total_cmp(&degree(&ra));
            if by_degree != Ordering::Equal {
                return by_degree;
            }
            let fa = factor_list(&ra);
            let fb = factor_list(&rb);
            for ((ba, ea), (bb, eb)) in fa.iter().zip(fb.iter()) {
                let c = ba.cmp(bb).then_with(|| eb.cmp(ea));
                if c != Ordering::Equal {
                    return c;
                }
            }
            fa.len()
                .cmp(&fb.len())
                .then_with(|| ra.cmp(&rb))
                .then_with(|| a.cmp(b))
        }
    }
}

fn with_coeff(c: Number, rest: Expr) -> Expr {
    if c.is_one() {
        return rest;
    }
    let mut fs = vec![Expr::number(c)];
    match rest {
        Expr::Product(inner) => fs.extend(inner),
        other => fs.push(other),
    }
    Expr::Product(fs)
}

/// Canonical n-ary sum of canonical terms.
pub fn add(terms: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(terms.len());
    for t in terms {
        match t {
            Expr::Sum(inner) => flat.extend(inner),
            other => flat.push(other),
        }
    }
    let mut constant = Number::ZERO;
    let mut like: BTreeMap<Expr, Number> = BTreeMap::new();
    for t in &flat {
        match split_coeff(t) {
            (c, None) => constant = constant.add(c),
            (c, Some(rest)) => {
                let slot = like.entry(rest).or_insert(Number::ZERO);
                *slot = slot.add(c);
            }
        }
    }
    let mut out: Vec<Expr> = like
        .into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|(rest, c)| with_coeff(c, rest))
        .collect();
    if !constant.is_zero() {
        out.push(Expr::number(constant));
    }
    out.sort_by(term_order);
    match out.len() {
        0 => Expr::zero(),
        1 => out.pop().unwrap(),
        _ => Expr::Sum(out),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    add(vec![a, neg(b)])
}

pub fn neg(e: Expr) -> Expr {
    mul(vec![Expr::int(-1), e])
}

// ---------------------------------------------------------------------------
// Products

/// Canonical n-ary product of canonical factors.
pub fn mul(factors: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(factors.len());
    for f in factors {
        match f {
            Expr::Product(inner) => flat.extend(inner),
            other => flat.push(other),
        }
    }
    let mut coeff = Number::ONE;
    let mut groups: BTreeMap<Expr, Vec<Expr>> = BTreeMap::new();
    for f in flat {
        if let Some(n) = f.as_number() {
            coeff = coeff.mul(n);
            continue;
        }
        let (b, e) = base_exp(&f);
        groups.entry(b).or_default().push(e);
    }
    if coeff.is_zero() {
        return Expr::zero();
    }
    let mut out = Vec::with_capacity(groups.len());
    let mut needs_merge = false;
    for (base, exps) in groups {
        let combined = if exps.len() == 1 {
            pow(base, exps.into_iter().next().unwrap())
        } else {
            pow(base, add(exps))
        };
        if let Some(n) = combined.as_number() {
            coeff = coeff.mul(n);
            continue;
        }
        if matches!(combined, Expr::Product(_)) {
            needs_merge = true;
        }
        out.push(combined);
    }
    if needs_merge {
        let mut again = vec![Expr::number(coeff)];
        again.extend(out);
        return mul(again);
    }
    if coeff.is_zero() {
        return Expr::zero();
    }
    out.sort_by(|a, b| {
        let (ba, ea) = base_exp(a);
        let (bb, eb) = base_exp(b);
        ba.cmp(&bb).then_with(|| ea.cmp(&eb))
    });
    if out.is_empty() {
        return Expr::number(coeff);
    }
    if coeff.is_one() && out.len() == 1 {
        return out.pop().unwrap();
    }
    if !coeff.is_one() {
        out.insert(0, Expr::number(coeff));
    }
    Expr::Product(out)
}

pub fn div(a: Expr, b: Expr) -> Expr {
    mul(vec![a, pow(b, Expr::int(-1))])
}

// ---------------------------------------------------------------------------
// Powers

/// Canonical power of canonical base and exponent.
pub fn pow(base: Expr, exp: Expr) -> Expr {
    if exp.is_zero() {
        return Expr::one();
    }
    if exp.is_one() {
        return base;
    }
    if base.is_one() {
        return Expr::one();
    }
    if let (Some(b), Some(e)) = (base.as_number(), exp.as_number()) {
        if b.is_zero() && !e.is_negative() {
            return Expr::zero();
        }
        if let Some(v) = b.pow(e) {
            return Expr::number(v);
        }
        return Expr::Pow(Box::new(base), Box::new(exp));
    }
    if base.is_zero() && exp.as_number().is_some_and(|e| !e.is_negative()) {
        return Expr::zero();
    }
    let integral = exp.as_number().and_then(Number::as_integer).is_some();
    match base {
        Expr::Pow(inner_base, inner_exp) if integral => {
            pow(*inner_base, mul(vec![*inner_exp, exp]))
        }
        Expr::Product(fs) if integral => {
            mul(fs.into_iter().map(|f| pow(f, exp.clone())).collect())
        }
        base => Expr::Pow(Box::new(base), Box::new(exp)),
    }
}

// ---------------------------------------------------------------------------
// Functions

fn exact_sqrt(r: Rational) -> Option<Rational> {
    let half = Number::Rational(crate::number::rational(1, 2));
    match Number::Rational(r).pow(half) {
        Some(Number::Rational(q)) => Some(q),
        _ => None,
    }
}

/// Canonical function application. Only exact identities are folded
/// (`sin(0)`, `ln(1)`, `abs` of a rational, ...); float arguments are
/// evaluated when the result is finite.
pub fn apply(f: Func, arg: Expr) -> Expr {
    if let Expr::Rational(r) = &arg {
        let r = *r;
        let folded = match f {
            Func::Sin | Func::Tan if r == Rational::from_integer(0) => Some(Expr::zero()),
            Func::Cos | Func::Exp if r == Rational::from_integer(0) => Some(Expr::one()),
            Func::Ln if r == Rational::from_integer(1) => Some(Expr::zero()),
            Func::Sqrt if r >= Rational::from_integer(0) => exact_sqrt(r).map(Expr::Rational),
            Func::Abs => Some(Expr::Rational(if r < Rational::from_integer(0) { -r } else { r })),
            _ => None,
        };
        if let Some(e) = folded {
            return e;
        }
    }
    if let Expr::Float(x) = &arg {
        let x = x.get();
        let v = match f {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Ln if x > 0.0 => x.ln(),
            Func::Sqrt if x >= 0.0 => x.sqrt(),
            Func::Abs => x.abs(),
            _ => f64::NAN,
        };
        if let Some(e) = Expr::float(v) {
            return e;
        }
    }
    match (f, arg) {
        (Func::Ln, Expr::Func(Func::Exp, inner)) => *inner,
        (Func::Abs, a @ Expr::Func(Func::Abs, _)) => a,
        (Func::Abs, a @ Expr::Func(Func::Exp, _)) => a,
        (f, a) => Expr::Func(f, Box::new(a)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::symbol("x")
    }

    #[test]
    fn like_terms_collect() {
        let e = add(vec![x(), x(), mul(vec![Expr::int(3), x()])]);
        assert_eq!(e, mul(vec![Expr::int(5), x()]));
        assert_eq!(sub(x(), x()), Expr::zero());
    }

    #[test]
    fn powers_merge() {
        let e = mul(vec![x(), x(), pow(x(), Expr::int(-2))]);
        assert_eq!(e, Expr::one());
        let e = mul(vec![x(), pow(x(), Expr::int(2))]);
        assert_eq!(e, pow(x(), Expr::int(3)));
    }

    #[test]
    fn integer_power_distributes_over_products() {
        let e = pow(mul(vec![Expr::int(2), x()]), Expr::int(2));
        assert_eq!(e, mul(vec![Expr::int(4), pow(x(), Expr::int(2))]));
    }

    #[test]
    fn fractional_power_of_power_is_kept() {
        let sq = pow(x(), Expr::int(2));
        let half = Expr::Rational(crate::number::rational(1, 2));
        let e = pow(sq.clone(), half.clone());
        assert_eq!(e, Expr::Pow(Box::new(sq), Box::new(half)));
    }

    #[test]
    fn exact_function_folds() {
        assert_eq!(apply(Func::Sin, Expr::zero()), Expr::zero());
        assert_eq!(apply(Func::Sqrt, Expr::int(9)), Expr::int(3));
        assert_eq!(apply(Func::Abs, Expr::int(-4)), Expr::int(4));
        assert_eq!(apply(Func::Ln, apply(Func::Exp, x())), x());
        assert!(matches!(apply(Func::Sqrt, Expr::int(2)), Expr::Func(..)));
    }

    #[test]
    fn zero_annihilates_products() {
        assert_eq!(mul(vec![Expr::zero(), x()]), Expr::zero());
        assert_eq!(mul(vec![Expr::float(0.0).unwrap(), x()]), Expr::zero());
    }
}
