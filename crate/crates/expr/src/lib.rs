//! Symbolic expression core: exact rationals, canonical trees, an infix
//! parser and printer, differentiation, evaluation with SI units and
//! equivalence checking.

pub mod diff;
pub mod equiv;
pub mod eval;
pub mod expand;
pub mod expr;
pub mod number;
pub mod parse;
pub mod print;
pub mod random;
pub mod units;

pub use diff::differentiate;
pub use equiv::{check as check_equivalence, equivalent, Verdict};
pub use eval::{evaluate, evaluate_f64, EvalError};
pub use expand::{expand, linear_form, numeric_polynomial, polynomial_coefficients, FormError};
pub use expr::{add, apply, div, mul, neg, pow, sub, Expr, Func};
pub use number::Number;
pub use parse::{parse, ParseError};
pub use random::random_expr;
pub use units::{Bindings, NumericValue, Unit};
