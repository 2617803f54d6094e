use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

use super::bound::{
    guarded, power_rule, product_rule, quotient_rule, reciprocal_rule, sqrt_rule, two_sum,
    ErrorBound, ROUNDING,
};

/// Expression tree over the derivable QoI bases.
///
/// Trees are built bottom-up; sharing a subexpression means cloning it.
#[derive(Debug, Clone, PartialEq)]
pub enum QoiExpr {
    /// The variable with the given ordinal.
    Var(usize),
    Const(f64),
    /// `a * child` for a nonzero constant `a`.
    Scale(f64, Box<QoiExpr>),
    /// Weighted sum `sum w_i * child_i` with at least one term.
    Sum(Vec<(f64, QoiExpr)>),
    Product(Box<QoiExpr>, Box<QoiExpr>),
    Quotient(Box<QoiExpr>, Box<QoiExpr>),
    /// `child ^ n` with `n >= 1`.
    Power(Box<QoiExpr>, u32),
    Sqrt(Box<QoiExpr>),
}

/// Reconstructed values and their L-infinity bounds at one data point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointContext {
    values: Vec<f64>,
    bounds: Vec<ErrorBound>,
}

impl PointContext {
    pub fn new(values: Vec<f64>, bounds: Vec<ErrorBound>) -> Result<Self> {
        if values.len() != bounds.len() {
            return Err(Error::InvalidInput(format!(
                "{} values but {} error bounds",
                values.len(),
                bounds.len()
            )));
        }
        Ok(PointContext { values, bounds })
    }

    /// Context with a single uniform bound on every variable.
    pub fn uniform(values: Vec<f64>, eps: f64) -> Self {
        let bounds = vec![ErrorBound::finite(eps); values.len()];
        PointContext { values, bounds }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> &[ErrorBound] {
        &self.bounds
    }

    /// Overwrites variable `i` so one context can be reused across points.
    pub fn set(&mut self, i: usize, value: f64, bound: ErrorBound) {
        self.values[i] = value;
        self.bounds[i] = bound;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reconstructed sums of squares can dip microscopically below zero; values
/// this close to zero are treated as zero under a square root.
fn sqrt_clamp_tolerance(value: f64) -> f64 {
    1e-12 * (1.0 + value.abs())
}

impl QoiExpr {
    pub fn var(index: usize) -> Self {
        QoiExpr::Var(index)
    }

    pub fn constant(a: f64) -> Self {
        QoiExpr::Const(a)
    }

    /// `a * e`, merging nested scales and folding constants.
    pub fn scale(a: f64, e: QoiExpr) -> Self {
        match e {
            _ if a == 1.0 => e,
            _ if a == 0.0 => QoiExpr::Const(0.0),
            QoiExpr::Const(c) => QoiExpr::Const(a * c),
            QoiExpr::Scale(b, inner) => QoiExpr::scale(a * b, *inner),
            e => QoiExpr::Scale(a, Box::new(e)),
        }
    }

    /// Weighted sum of `(weight, term)` pairs.
    ///
    /// # Panics
    ///
    /// Panics if `terms` is empty.
    pub fn sum(terms: Vec<(f64, QoiExpr)>) -> Self {
        assert!(!terms.is_empty(), "a sum needs at least one term");
        if terms.iter().all(|(_, t)| matches!(t, QoiExpr::Const(_))) {
            let mut acc = 0.0;
            for (w, t) in &terms {
                if let QoiExpr::Const(c) = t {
                    acc += w * c;
                }
            }
            return QoiExpr::Const(acc);
        }
        QoiExpr::Sum(terms)
    }

    /// `a + b`.
    #[allow(clippy::should_implement_trait)]
    pub fn add(a: QoiExpr, b: QoiExpr) -> Self {
        QoiExpr::sum(vec![(1.0, a), (1.0, b)])
    }

    /// `a - b`.
    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: QoiExpr, b: QoiExpr) -> Self {
        QoiExpr::sum(vec![(1.0, a), (-1.0, b)])
    }

    /// `a * b`; a constant factor becomes a [`QoiExpr::Scale`].
    pub fn product(a: QoiExpr, b: QoiExpr) -> Self {
        match (a, b) {
            (QoiExpr::Const(x), QoiExpr::Const(y)) => QoiExpr::Const(x * y),
            (QoiExpr::Const(x), e) | (e, QoiExpr::Const(x)) => QoiExpr::scale(x, e),
            (a, b) => QoiExpr::Product(Box::new(a), Box::new(b)),
        }
    }

    /// `a / b`. Fails when `b` is the constant 0.
    pub fn quotient(a: QoiExpr, b: QoiExpr) -> Result<Self> {
        match (a, b) {
            (_, QoiExpr::Const(0.0)) => Err(Error::Domain("division by the constant 0".into())),
            (QoiExpr::Const(x), QoiExpr::Const(y)) => Ok(QoiExpr::Const(x / y)),
            (a, b) => Ok(QoiExpr::Quotient(Box::new(a), Box::new(b))),
        }
    }

    /// `1 / (e + c)`, the radical basis.
    pub fn radical(e: QoiExpr, c: f64) -> Self {
        QoiExpr::Quotient(
            Box::new(QoiExpr::Const(1.0)),
            Box::new(QoiExpr::Sum(vec![(1.0, e), (1.0, QoiExpr::Const(c))])),
        )
    }

    /// `e ^ n`.
    ///
    /// # Panics
    ///
    /// Panics if `n == 0`.
    pub fn power(e: QoiExpr, n: u32) -> Self {
        assert!(n >= 1, "power exponent must be positive");
        match e {
            _ if n == 1 => e,
            QoiExpr::Const(c) => QoiExpr::Const(c.powi(n as i32)),
            e => QoiExpr::Power(Box::new(e), n),
        }
    }

    pub fn sqrt(e: QoiExpr) -> Result<Self> {
        match e {
            QoiExpr::Const(c) if c < 0.0 => Err(Error::Domain(format!(
                "square root of the negative constant {c}"
            ))),
            QoiExpr::Const(c) => Ok(QoiExpr::Const(c.sqrt())),
            e => Ok(QoiExpr::Sqrt(Box::new(e))),
        }
    }

    /// Ordinals of every variable the expression reads.
    pub fn variables(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        match self {
            QoiExpr::Var(i) => {
                out.insert(*i);
            }
            QoiExpr::Const(_) => {}
            QoiExpr::Scale(_, e) | QoiExpr::Power(e, _) | QoiExpr::Sqrt(e) => e.collect_vars(out),
            QoiExpr::Sum(terms) => terms.iter().for_each(|(_, t)| t.collect_vars(out)),
            QoiExpr::Product(a, b) | QoiExpr::Quotient(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Renumbers every variable through `f`.
    pub fn map_vars(&self, f: &impl Fn(usize) -> usize) -> QoiExpr {
        match self {
            QoiExpr::Var(i) => QoiExpr::Var(f(*i)),
            QoiExpr::Const(a) => QoiExpr::Const(*a),
            QoiExpr::Scale(a, e) => QoiExpr::Scale(*a, Box::new(e.map_vars(f))),
            QoiExpr::Sum(terms) => {
                QoiExpr::Sum(terms.iter().map(|(w, t)| (*w, t.map_vars(f))).collect())
            }
            QoiExpr::Product(a, b) => {
                QoiExpr::Product(Box::new(a.map_vars(f)), Box::new(b.map_vars(f)))
            }
            QoiExpr::Quotient(a, b) => {
                QoiExpr::Quotient(Box::new(a.map_vars(f)), Box::new(b.map_vars(f)))
            }
            QoiExpr::Power(e, n) => QoiExpr::Power(Box::new(e.map_vars(f)), *n),
            QoiExpr::Sqrt(e) => QoiExpr::Sqrt(Box::new(e.map_vars(f))),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + match self {
            QoiExpr::Var(_) | QoiExpr::Const(_) => 0,
            QoiExpr::Scale(_, e) | QoiExpr::Power(e, _) | QoiExpr::Sqrt(e) => e.node_count(),
            QoiExpr::Sum(terms) => terms.iter().map(|(_, t)| t.node_count()).sum(),
            QoiExpr::Product(a, b) | QoiExpr::Quotient(a, b) => a.node_count() + b.node_count(),
        }
    }

    /// Checks the structural invariants against a declared variable count.
    pub fn validate(&self, var_count: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        match self {
            QoiExpr::Var(i) if *i >= var_count => {
                bad(format!("variable #{i} but only {var_count} declared"))
            }
            QoiExpr::Var(_) => Ok(()),
            QoiExpr::Const(a) if !a.is_finite() => bad(format!("non-finite constant {a}")),
            QoiExpr::Const(_) => Ok(()),
            QoiExpr::Scale(a, _) if *a == 0.0 || !a.is_finite() => {
                bad(format!("scale factor must be finite and nonzero, got {a}"))
            }
            QoiExpr::Scale(_, e) | QoiExpr::Sqrt(e) => e.validate(var_count),
            QoiExpr::Power(_, 0) => bad("power exponent must be positive".into()),
            QoiExpr::Power(e, _) => e.validate(var_count),
            QoiExpr::Sum(terms) if terms.is_empty() => bad("empty sum".into()),
            QoiExpr::Sum(terms) => terms.iter().try_for_each(|(w, t)| {
                if !w.is_finite() {
                    return bad(format!("non-finite weight {w}"));
                }
                t.validate(var_count)
            }),
            QoiExpr::Product(a, b) | QoiExpr::Quotient(a, b) => {
                a.validate(var_count)?;
                b.validate(var_count)
            }
        }
    }

    /// Plain real evaluation.
    pub fn eval(&self, values: &[f64]) -> Result<f64> {
        Ok(match self {
            QoiExpr::Var(i) => *values
                .get(*i)
                .ok_or_else(|| Error::InvalidInput(format!("no value for variable #{i}")))?,
            QoiExpr::Const(a) => *a,
            QoiExpr::Scale(a, e) => a * e.eval(values)?,
            QoiExpr::Sum(terms) => {
                let mut acc = 0.0;
                for (w, t) in terms {
                    acc += w * t.eval(values)?;
                }
                acc
            }
            QoiExpr::Product(a, b) => a.eval(values)? * b.eval(values)?,
            QoiExpr::Quotient(a, b) => {
                let num = a.eval(values)?;
                let den = b.eval(values)?;
                if den == 0.0 {
                    return Err(Error::Domain("division by zero".into()));
                }
                num / den
            }
            QoiExpr::Power(e, n) => e.eval(values)?.powi(*n as i32),
            QoiExpr::Sqrt(e) => {
                let v = e.eval(values)?;
                if v < 0.0 {
                    return Err(Error::Domain(format!("square root of negative value {v}")));
                }
                v.sqrt()
            }
        })
    }

    /// Matches `1 / (child + c)` and returns `(child, c)`.
    fn as_radical<'a>(num: &QoiExpr, den: &'a QoiExpr) -> Option<(&'a QoiExpr, f64)> {
        match (num, den) {
            (QoiExpr::Const(one), QoiExpr::Sum(terms)) if *one == 1.0 => match terms.as_slice() {
                [(w1, child), (w2, QoiExpr::Const(c))] if *w1 == 1.0 && *w2 == 1.0 => {
                    Some((child, *c))
                }
                _ => None,
            },
            _ => None,
        }
    }

    /// Value and certified error bound of the expression at one point.
    ///
    /// Children are evaluated first and their `(value, bound)` pairs feed
    /// the parent's bound rule, so the returned bound covers every
    /// perturbation within the per-variable bounds of `ctx`. When a bound
    /// cannot be certified the value is meaningless and reported as `0`.
    pub fn propagate(&self, ctx: &PointContext) -> Result<(f64, ErrorBound)> {
        let n = self.node(ctx)?;
        Ok((n.value, n.bound))
    }

    /// Each node also carries `radius`, a bound on how far its computed
    /// value may sit from the exact one. Rules are evaluated at the least
    /// favorable center within that radius, which keeps the bounds valid
    /// for the exact real-valued expression despite rounding.
    fn node(&self, ctx: &PointContext) -> Result<Node> {
        Ok(match self {
            QoiExpr::Var(i) => {
                let value = *ctx
                    .values
                    .get(*i)
                    .ok_or_else(|| Error::InvalidInput(format!("no value for variable #{i}")))?;
                Node::new(value, ctx.bounds[*i], 0.0)
            }
            QoiExpr::Const(a) => Node::new(*a, ErrorBound::ZERO, 0.0),
            QoiExpr::Scale(a, e) => {
                let c = e.node(ctx)?;
                let v = a * c.value;
                Node::new(
                    v,
                    c.bound.scale(*a),
                    a.abs() * c.radius + ROUNDING * v.abs(),
                )
            }
            QoiExpr::Sum(terms) => {
                // Same arithmetic as `bound_weighted_sum`, without buffers.
                let mut acc = 0.0;
                let mut raw = 0.0;
                let mut unbounded = false;
                let mut radius = 0.0;
                let mut magnitude = 0.0;
                for (w, t) in terms {
                    let c = t.node(ctx)?;
                    acc += w * c.value;
                    if *w != 0.0 {
                        radius += w.abs() * c.radius;
                        magnitude += (w * c.value).abs();
                        match c.bound {
                            ErrorBound::Finite(e) => raw += w.abs() * e,
                            ErrorBound::Unbounded => unbounded = true,
                        }
                    }
                }
                let bound = if unbounded {
                    ErrorBound::Unbounded
                } else {
                    guarded(raw)
                };
                let k = terms.len() as f64 + 1.0;
                Node::new(acc, bound, radius + k * ROUNDING * magnitude)
            }
            QoiExpr::Product(a, b) => {
                let x = a.node(ctx)?;
                let y = b.node(ctx)?;
                let v = x.value * y.value;
                let bound = match (x.bound, y.bound) {
                    (ErrorBound::Finite(e1), ErrorBound::Finite(e2)) => {
                        product_rule(x.value.abs() + x.radius, e1, y.value.abs() + y.radius, e2)
                    }
                    _ => ErrorBound::Unbounded,
                };
                let radius = product_rule(x.value.abs(), x.radius, y.value.abs(), y.radius)
                    .as_f64()
                    + ROUNDING * v.abs();
                Node::new(v, bound, radius)
            }
            QoiExpr::Quotient(num, den) => {
                if let Some((child, c)) = Self::as_radical(num, den) {
                    let x = child.node(ctx)?;
                    // Same operation order as `eval` of the denominator sum.
                    let (y, err) = two_sum(0.0 + x.value, c);
                    if y == 0.0 {
                        if x.bound.is_zero() && x.radius == 0.0 {
                            return Err(Error::Domain("division by zero".into()));
                        }
                        return Ok(Node::undefined());
                    }
                    let ry = x.radius + err;
                    let v = 1.0 / y;
                    let bound = match x.bound {
                        ErrorBound::Finite(e) => reciprocal_rule(y, ry, e),
                        ErrorBound::Unbounded => ErrorBound::Unbounded,
                    };
                    let radius = reciprocal_rule(y, 0.0, ry).as_f64() + ROUNDING * v.abs();
                    Node::new(v, bound, radius)
                } else {
                    let x = num.node(ctx)?;
                    let y = den.node(ctx)?;
                    if y.value == 0.0 {
                        if y.bound.is_zero() && y.radius == 0.0 {
                            return Err(Error::Domain("division by zero".into()));
                        }
                        return Ok(Node::undefined());
                    }
                    let v = x.value / y.value;
                    let bound = match (x.bound, y.bound) {
                        (ErrorBound::Finite(e1), ErrorBound::Finite(e2)) => {
                            quotient_rule(x.value.abs() + x.radius, e1, y.value, y.radius, e2)
                        }
                        _ => ErrorBound::Unbounded,
                    };
                    let radius = quotient_rule(x.value.abs(), x.radius, y.value, 0.0, y.radius)
                        .as_f64()
                        + ROUNDING * v.abs();
                    Node::new(v, bound, radius)
                }
            }
            QoiExpr::Power(e, n) => {
                let x = e.node(ctx)?;
                let v = x.value.powi(*n as i32);
                let ax = x.value.abs();
                let bound = match x.bound {
                    ErrorBound::Finite(eps) => power_rule(*n, ax + x.radius, eps),
                    ErrorBound::Unbounded => ErrorBound::Unbounded,
                };
                let radius =
                    power_rule(*n, ax, x.radius).as_f64() + f64::from(*n) * ROUNDING * v.abs();
                Node::new(v, bound, radius)
            }
            QoiExpr::Sqrt(e) => {
                let x = e.node(ctx)?;
                let mut v = x.value;
                if v < 0.0 {
                    if v >= -(x.radius + sqrt_clamp_tolerance(v)) {
                        v = 0.0;
                    } else if x.bound.as_f64() + x.radius >= -v {
                        // The true operand may still be nonnegative; only a
                        // tighter reconstruction can tell.
                        return Ok(Node::undefined());
                    } else {
                        return Err(Error::Domain(format!(
                            "square root of {v}, which stays negative within its bound {}",
                            x.bound
                        )));
                    }
                }
                let root = v.sqrt();
                let lo = v - x.radius;
                let bound = match x.bound {
                    ErrorBound::Finite(eps) => sqrt_rule(lo, eps),
                    ErrorBound::Unbounded => ErrorBound::Unbounded,
                };
                let radius = sqrt_rule(lo, x.radius).as_f64() + ROUNDING * root;
                Node::new(root, bound, radius)
            }
        })
    }
}

/// Value, certified bound and rounding radius of one subexpression.
struct Node {
    value: f64,
    bound: ErrorBound,
    radius: f64,
}

impl Node {
    fn new(value: f64, bound: ErrorBound, radius: f64) -> Self {
        if !value.is_finite() || !radius.is_finite() {
            return Node::undefined();
        }
        Node {
            value,
            bound,
            radius,
        }
    }

    fn undefined() -> Self {
        Node {
            value: 0.0,
            bound: ErrorBound::Unbounded,
            radius: f64::INFINITY,
        }
    }
}

impl fmt::Display for QoiExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, None)
    }
}

/// [`QoiExpr`] displayed with variable names instead of `x<i>`.
pub struct Named<'a> {
    expr: &'a QoiExpr,
    names: &'a [String],
}

impl fmt::Display for Named<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.write(f, Some(self.names))
    }
}

impl QoiExpr {
    /// Displays with `names[i]` for variable `i`, falling back to `x<i>`.
    pub fn named<'a>(&'a self, names: &'a [String]) -> Named<'a> {
        Named { expr: self, names }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, names: Option<&[String]>) -> fmt::Result {
        let n = names.unwrap_or(&[]);
        match self {
            QoiExpr::Var(i) => match n.get(*i) {
                Some(name) => f.write_str(name),
                None => write!(f, "x{i}"),
            },
            QoiExpr::Const(a) => write!(f, "{a}"),
            QoiExpr::Scale(a, e) => write!(f, "({a} * {})", e.named(n)),
            QoiExpr::Sum(terms) => {
                f.write_str("(")?;
                for (k, (w, t)) in terms.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" + ")?;
                    }
                    if *w == 1.0 {
                        write!(f, "{}", t.named(n))?;
                    } else {
                        write!(f, "{w} * {}", t.named(n))?;
                    }
                }
                f.write_str(")")
            }
            QoiExpr::Product(a, b) => write!(f, "({} * {})", a.named(n), b.named(n)),
            QoiExpr::Quotient(a, b) => write!(f, "({} / {})", a.named(n), b.named(n)),
            QoiExpr::Power(e, p) => write!(f, "{}^{p}", e.named(n)),
            QoiExpr::Sqrt(e) => write!(f, "sqrt({})", e.named(n)),
        }
    }
}
