//! Derivable quantities of interest: expression trees, the DSL that builds
//! them, and certified error propagation through them.

mod bound;
mod expr;
mod ge;
mod parse;

pub use bound::{
    bound_power, bound_product, bound_quotient, bound_radical, bound_sqrt, bound_weighted_sum,
    ErrorBound, GUARD,
};
pub use expr::{Named, PointContext, QoiExpr};
pub use ge::{builtin_ge_qois, ge_closed_form, GeConstants, GE, GE_VARIABLES};
pub use parse::{parse_qoi, ParseError};
