//! Certified sup-error bounds for the derivable QoI bases.
//!
//! Every `bound_*` function returns an upper bound of
//! `sup |f(x') - f(x)|` over all `x'` within `eps` of `x` (component-wise
//! for the multivariate bases). The closed forms are exact in real
//! arithmetic; each finite result is inflated by [`GUARD`] so rounding in
//! the handful of floating-point operations cannot make it undershoot.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Multiplicative slack applied to every finite `bound_*` result.
pub const GUARD: f64 = 1.0 + 4.0 * f64::EPSILON;

/// A nonnegative certified sup-error, or `Unbounded` when no finite bound
/// can be certified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorBound {
    Finite(f64),
    Unbounded,
}

impl ErrorBound {
    pub const ZERO: ErrorBound = ErrorBound::Finite(0.0);

    /// Wraps a finite nonnegative value. Infinite inputs become `Unbounded`.
    ///
    /// # Panics
    ///
    /// Panics on negative or NaN input.
    pub fn finite(value: f64) -> Self {
        assert!(value >= 0.0, "error bounds are nonnegative, got {value}");
        if value.is_finite() {
            ErrorBound::Finite(value)
        } else {
            ErrorBound::Unbounded
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ErrorBound::Finite(_))
    }

    pub fn is_zero(self) -> bool {
        self == ErrorBound::ZERO
    }

    pub fn value(self) -> Option<f64> {
        match self {
            ErrorBound::Finite(v) => Some(v),
            ErrorBound::Unbounded => None,
        }
    }

    /// The bound as an `f64`, with `Unbounded` mapped to `+inf`.
    pub fn as_f64(self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }

    /// `|a| * self`, exact up to the one rounding of the product.
    pub fn scale(self, a: f64) -> Self {
        match self {
            ErrorBound::Finite(v) => ErrorBound::finite(a.abs() * v),
            ErrorBound::Unbounded => ErrorBound::Unbounded,
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Default for ErrorBound {
    fn default() -> Self {
        ErrorBound::ZERO
    }
}

impl PartialOrd for ErrorBound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        use ErrorBound::*;
        match (self, other) {
            (Finite(a), Finite(b)) => a.partial_cmp(b),
            (Finite(_), Unbounded) => Some(Ordering::Less),
            (Unbounded, Finite(_)) => Some(Ordering::Greater),
            (Unbounded, Unbounded) => Some(Ordering::Equal),
        }
    }
}

impl Add for ErrorBound {
    type Output = ErrorBound;

    fn add(self, rhs: Self) -> Self {
        match (self, rhs) {
            (ErrorBound::Finite(a), ErrorBound::Finite(b)) => ErrorBound::finite(a + b),
            _ => ErrorBound::Unbounded,
        }
    }
}

impl From<f64> for ErrorBound {
    fn from(value: f64) -> Self {
        ErrorBound::finite(value)
    }
}

impl fmt::Display for ErrorBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorBound::Finite(v) => write!(f, "{v:e}"),
            ErrorBound::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for ErrorBound {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ErrorBound::Finite(v) => serializer.serialize_f64(*v),
            ErrorBound::Unbounded => serializer.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for ErrorBound {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) if v >= 0.0 => Ok(ErrorBound::finite(v)),
            Repr::Num(v) => Err(serde::de::Error::custom(format!(
                "negative error bound {v}"
            ))),
            Repr::Text(s) if s == "unbounded" => Ok(ErrorBound::Unbounded),
            Repr::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"unbounded\", got {s:?}"
            ))),
        }
    }
}

pub(crate) fn guarded(raw: f64) -> ErrorBound {
    guarded_by(raw, GUARD)
}

fn guarded_by(raw: f64, guard: f64) -> ErrorBound {
    if raw.is_finite() {
        ErrorBound::finite(raw * guard)
    } else {
        ErrorBound::Unbounded
    }
}

/// Relative rounding error of one floating-point operation, doubled so the
/// arithmetic that tracks radii needs no guard of its own.
pub(crate) const ROUNDING: f64 = f64::EPSILON;

/// `a + b` and the magnitude of its rounding error (Knuth's two-sum).
pub(crate) fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (
        s,
        if err.is_finite() {
            err.abs()
        } else {
            f64::INFINITY
        },
    )
}

/// `d - r` where `d = |y| - eps` is formed first so it is exact whenever
/// `eps` is close to `|y|`. Nonpositive results mean the interval
/// `y ± (eps + r)` may contain zero.
fn clearance(ay: f64, r: f64, eps: f64) -> f64 {
    (ay - eps) - r
}

/// Binomial coefficient `C(n, k)` as a float.
pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Power rule at any center `x` with `|x| <= ax`; the closed form grows
/// with `|x|`.
pub(crate) fn power_rule(n: u32, ax: f64, eps: f64) -> ErrorBound {
    if eps == 0.0 {
        return ErrorBound::ZERO;
    }
    let raw: f64 = (1..=n)
        .map(|i| binomial(n, i) * ax.powi((n - i) as i32) * eps.powi(i as i32))
        .sum();
    // Each term takes O(n) roundings.
    guarded_by(raw, 1.0 + f64::from(4 * n + 4) * f64::EPSILON)
}

/// Square-root rule at any center `>= x_lo`; the closed form shrinks as
/// the center grows, and `sqrt(eps)` bounds it everywhere.
pub(crate) fn sqrt_rule(x_lo: f64, eps: f64) -> ErrorBound {
    if eps == 0.0 {
        return ErrorBound::ZERO;
    }
    let root = eps.sqrt();
    if x_lo <= 0.0 {
        return guarded(root);
    }
    let closed = eps / ((x_lo - eps).max(0.0).sqrt() + x_lo.sqrt());
    guarded(closed.min(root))
}

/// Rule for `1 / y` at any center within `r` of `y`.
pub(crate) fn reciprocal_rule(y: f64, r: f64, eps: f64) -> ErrorBound {
    let ay = y.abs();
    let gap = clearance(ay, r, eps);
    if !(gap > 0.0) {
        return ErrorBound::Unbounded;
    }
    if eps == 0.0 {
        return ErrorBound::ZERO;
    }
    guarded(eps / (gap * (ay - r)))
}

/// Product rule at centers with `|x1| <= a1`, `|x2| <= a2`.
pub(crate) fn product_rule(a1: f64, e1: f64, a2: f64, e2: f64) -> ErrorBound {
    guarded(a1 * e2 + a2 * e1 + e1 * e2)
}

/// Quotient rule at centers with `|x1| <= a1` and `x2` within `r2` of
/// `x2`; the closed form shrinks as `|x2|` grows.
pub(crate) fn quotient_rule(a1: f64, e1: f64, x2: f64, r2: f64, e2: f64) -> ErrorBound {
    let ax2 = x2.abs();
    let gap = clearance(ax2, r2, e2);
    if !(gap > 0.0) {
        return ErrorBound::Unbounded;
    }
    let lo = ax2 - r2;
    guarded((a1 * e2 + lo * e1) / (lo * gap))
}

/// `f(x) = x^n`: `sum_{i=1..n} C(n,i) |x|^(n-i) eps^i`.
pub fn bound_power(n: u32, x: f64, eps: ErrorBound) -> ErrorBound {
    assert!(n >= 1, "power exponent must be positive");
    match eps {
        ErrorBound::Finite(eps) => power_rule(n, x.abs(), eps),
        ErrorBound::Unbounded => ErrorBound::Unbounded,
    }
}

/// `f(x) = sqrt(x)`: `eps / (sqrt(max(x - eps, 0)) + sqrt(x))`, capped at
/// `sqrt(eps)` (which is also the exact supremum at `x == 0`).
pub fn bound_sqrt(x: f64, eps: ErrorBound) -> Result<ErrorBound> {
    if x < 0.0 || x.is_nan() {
        return Err(Error::Domain(format!("square root of negative value {x}")));
    }
    Ok(match eps {
        ErrorBound::Finite(eps) => sqrt_rule(x, eps),
        ErrorBound::Unbounded => ErrorBound::Unbounded,
    })
}

/// `f(x) = 1 / (x + c)`:
/// `eps / (min(|x + c - eps|, |x + c + eps|) * |x + c|)`, valid only while
/// `eps < |x + c|`. Outside that region the result is `Unbounded`.
pub fn bound_radical(c: f64, x: f64, eps: ErrorBound) -> ErrorBound {
    let ErrorBound::Finite(eps) = eps else {
        return ErrorBound::Unbounded;
    };
    let (y, r) = two_sum(x, c);
    reciprocal_rule(y, r, eps)
}

/// `g(x) = sum a_i x_i`: `sum |a_i| eps_i`. A zero weight annihilates an
/// unbounded child.
pub fn bound_weighted_sum(weights: &[f64], eps: &[ErrorBound]) -> ErrorBound {
    assert_eq!(
        weights.len(),
        eps.len(),
        "weights and bounds differ in length"
    );
    let mut raw = 0.0;
    for (&a, &e) in weights.iter().zip(eps) {
        if a == 0.0 {
            continue;
        }
        match e {
            ErrorBound::Finite(e) => raw += a.abs() * e,
            ErrorBound::Unbounded => return ErrorBound::Unbounded,
        }
    }
    guarded(raw)
}

/// `g(x1, x2) = x1 * x2`: `|x1| eps2 + |x2| eps1 + eps1 eps2`.
pub fn bound_product(x1: f64, eps1: ErrorBound, x2: f64, eps2: ErrorBound) -> ErrorBound {
    match (eps1, eps2) {
        (ErrorBound::Finite(e1), ErrorBound::Finite(e2)) => {
            product_rule(x1.abs(), e1, x2.abs(), e2)
        }
        _ => ErrorBound::Unbounded,
    }
}

/// `g(x1, x2) = x1 / x2`:
/// `(|x1| eps2 + |x2| eps1) / (|x2| min(|x2 - eps2|, |x2 + eps2|))`, valid
/// only while `eps2 < |x2|`. Outside that region the result is `Unbounded`.
pub fn bound_quotient(x1: f64, eps1: ErrorBound, x2: f64, eps2: ErrorBound) -> ErrorBound {
    let (ErrorBound::Finite(e1), ErrorBound::Finite(e2)) = (eps1, eps2) else {
        return ErrorBound::Unbounded;
    };
    quotient_rule(x1.abs(), e1, x2, 0.0, e2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fin(v: f64) -> ErrorBound {
        ErrorBound::finite(v)
    }

    fn close(b: ErrorBound, expected: f64) -> bool {
        let v = b.value().expect("finite bound");
        (v - expected).abs() <= 1e-12 * expected.abs().max(1e-300)
    }

    #[test]
    fn power_examples() {
        assert!(close(bound_power(2, 3.0, fin(0.1)), 0.61));
        assert_eq!(bound_power(5, 3.0, ErrorBound::ZERO), ErrorBound::ZERO);
        assert!(close(bound_power(1, 5.0, fin(0.2)), 0.2));
        assert_eq!(
            bound_power(3, 1.0, ErrorBound::Unbounded),
            ErrorBound::Unbounded
        );
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(10, 0), 1.0);
        assert_eq!(binomial(10, 10), 1.0);
        assert_eq!(binomial(7, 3), 35.0);
    }

    #[test]
    fn sqrt_examples() {
        assert!(close(bound_sqrt(4.0, fin(1.0)).unwrap(), 2.0 - 3f64.sqrt()));
        assert_eq!(bound_sqrt(4.0, ErrorBound::ZERO).unwrap(), ErrorBound::ZERO);
        assert!(close(bound_sqrt(0.0, fin(0.04)).unwrap(), 0.2));
        assert!(matches!(bound_sqrt(-1.0, fin(0.1)), Err(Error::Domain(_))));
    }

    #[test]
    fn radical_examples() {
        assert!(close(bound_radical(1.0, 1.0, fin(0.5)), 0.5 / (1.5 * 2.0)));
        assert_eq!(bound_radical(0.0, 2.0, fin(2.0)), ErrorBound::Unbounded);
        assert_eq!(bound_radical(1.0, 1.0, ErrorBound::ZERO), ErrorBound::ZERO);
        assert_eq!(bound_radical(-1.0, 1.0, fin(0.1)), ErrorBound::Unbounded);
    }

    #[test]
    fn weighted_sum_examples() {
        assert!(close(
            bound_weighted_sum(&[1.0, -2.0], &[fin(0.1), fin(0.2)]),
            0.5
        ));
        assert!(close(
            bound_weighted_sum(&[0.0, 5.0], &[ErrorBound::Unbounded, fin(0.1)]),
            0.5
        ));
        assert_eq!(
            bound_weighted_sum(&[1.0, 3.0], &[ErrorBound::ZERO, ErrorBound::ZERO]),
            ErrorBound::ZERO
        );
        assert_eq!(
            bound_weighted_sum(&[1.0, 3.0], &[ErrorBound::Unbounded, ErrorBound::ZERO]),
            ErrorBound::Unbounded
        );
    }

    #[test]
    fn product_examples() {
        assert!(close(bound_product(2.0, fin(0.1), 3.0, fin(0.1)), 0.51));
        assert_eq!(
            bound_product(2.0, ErrorBound::ZERO, 3.0, ErrorBound::ZERO),
            ErrorBound::ZERO
        );
        assert!(close(bound_product(0.0, fin(1.0), 0.0, fin(1.0)), 1.0));
    }

    #[test]
    fn quotient_examples() {
        assert!(close(
            bound_quotient(1.0, fin(0.1), 2.0, fin(0.1)),
            0.3 / 3.8
        ));
        assert_eq!(
            bound_quotient(3.0, fin(0.0), 1.0, fin(1.0)),
            ErrorBound::Unbounded
        );
        assert_eq!(
            bound_quotient(1.0, ErrorBound::ZERO, 2.0, ErrorBound::ZERO),
            ErrorBound::ZERO
        );
        assert_eq!(
            bound_quotient(1.0, fin(0.1), 0.0, fin(0.0)),
            ErrorBound::Unbounded
        );
    }

    #[test]
    fn unbounded_absorbs() {
        let u = ErrorBound::Unbounded;
        assert_eq!(fin(1.0) + u, u);
        assert_eq!(u.scale(2.0), u);
        assert_eq!(bound_product(1.0, u, 1.0, fin(0.0)), u);
        assert_eq!(bound_sqrt(1.0, u).unwrap(), u);
        assert!(u > fin(f64::MAX));
    }

    #[test]
    fn serde_round_trip() {
        let json = serde_json::to_string(&[fin(0.25), ErrorBound::Unbounded]).unwrap();
        assert_eq!(json, r#"[0.25,"unbounded"]"#);
        let back: Vec<ErrorBound> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![fin(0.25), ErrorBound::Unbounded]);
        assert!(serde_json::from_str::<ErrorBound>("-1.0").is_err());
    }
}
