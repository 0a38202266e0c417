//! SI dimension vectors and dimensioned values.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::expr::Expr;
use crate::parse::parse;

/// Base dimension symbols, in vector order.
pub const BASE_UNITS: [&str; 7] = ["m", "kg", "s", "A", "K", "mol", "cd"];

/// Integer exponents over (m, kg, s, A, K, mol, cd).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Unit(pub [i32; 7]);

impl Unit {
    pub const DIMENSIONLESS: Unit = Unit([0; 7]);

    pub fn is_dimensionless(&self) -> bool {
        self.0 == [0; 7]
    }

    pub fn mul(self, other: Unit) -> Unit {
        let mut out = self.0;
        out.iter_mut().zip(other.0).for_each(|(a, b)| *a += b);
        Unit(out)
    }

    /// Raises to a real power; `None` when an exponent would be fractional.
    pub fn powf(self, p: f64) -> Option<Unit> {
        let mut out = [0; 7];
        for (o, u) in out.iter_mut().zip(self.0) {
            let scaled = u as f64 * p;
            let rounded = scaled.round();
            if (scaled - rounded).abs() > 1e-9 {
                return None;
            }
            *o = rounded as i32;
        }
        Some(Unit(out))
    }

    /// Parses unit text such as `kg*m^2/s^2`; empty text and `1` are
    /// dimensionless.
    pub fn parse(text: &str) -> Result<Unit, String> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(Unit::DIMENSIONLESS);
        }
        let e = parse(text).map_err(|e| format!("bad unit {text:?}: {e}"))?;
        unit_of(&e).ok_or_else(|| format!("bad unit {text:?}"))
    }
}

fn unit_of(e: &Expr) -> Option<Unit> {
    match e {
        Expr::Rational(_) if e.is_one() => Some(Unit::DIMENSIONLESS),
        Expr::Symbol(s) => {
            let i = BASE_UNITS.iter().position(|b| b == s)?;
            let mut v = [0; 7];
            v[i] = 1;
            Some(Unit(v))
        }
        Expr::Pow(b, x) => {
            let n = x.as_number()?.as_integer()?;
            unit_of(b)?.powf(n as f64)
        }
        Expr::Product(fs) => fs
            .iter()
            .try_fold(Unit::DIMENSIONLESS, |acc, f| Some(acc.mul(unit_of(f)?))),
        _ => None,
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let part = |i: usize, e: i32| {
            if e == 1 {
                BASE_UNITS[i].to_string()
            } else {
                format!("{}^{}", BASE_UNITS[i], e)
            }
        };
        let num: Vec<String> = (0..7).filter(|&i| self.0[i] > 0).map(|i| part(i, self.0[i])).collect();
        let den: Vec<String> = (0..7).filter(|&i| self.0[i] < 0).map(|i| part(i, -self.0[i])).collect();
        if num.is_empty() && den.is_empty() {
            return f.write_str("1");
        }
        let head = if num.is_empty() { "1".to_string() } else { num.join("*") };
        f.write_str(&head)?;
        for d in den {
            write!(f, "/{d}")?;
        }
        Ok(())
    }
}

impl Serialize for Unit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Unit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Vector([i32; 7]),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Vector(v) => Ok(Unit(v)),
            Repr::Text(t) => Unit::parse(&t).map_err(de::Error::custom),
        }
    }
}

/// A real value with its dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericValue {
    pub value: f64,
    #[serde(default)]
    pub unit: Unit,
}

impl NumericValue {
    pub fn new(value: f64, unit: Unit) -> Self {
        NumericValue { value, unit }
    }

    pub fn dimensionless(value: f64) -> Self {
        NumericValue {
            value,
            unit: Unit::DIMENSIONLESS,
        }
    }
}

/// Symbol name to value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bindings(BTreeMap<String, NumericValue>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a binding; empty names are rejected.
    pub fn insert(&mut self, name: impl Into<String>, v: NumericValue) -> Result<(), String> {
        let name = name.into();
        if name.is_empty() {
            return Err("binding name must be non-empty".into());
        }
        self.0.insert(name, v);
        Ok(())
    }

    pub fn with(mut self, name: &str, v: NumericValue) -> Self {
        self.0.insert(name.to_string(), v);
        self
    }

    pub fn get(&self, name: &str) -> Option<&NumericValue> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &NumericValue)> {
        self.0.iter()
    }
}
