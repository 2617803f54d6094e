use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qoi::{builtin_ge_qois, parse_qoi, QoiExpr, GE_VARIABLES};

/// What a tolerance is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceMode {
    /// Relative to the QoI's range over the current reconstruction.
    Relative,
    /// Relative to a known QoI range, e.g. one taken from the original data.
    KnownRange(f64),
    /// In the QoI's own units.
    Absolute,
}

/// A named QoI with its error tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct QoiRequest {
    pub name: String,
    pub expr: QoiExpr,
    pub tolerance: f64,
    pub mode: ToleranceMode,
}

impl QoiRequest {
    pub fn new(name: impl Into<String>, expr: QoiExpr, tolerance: f64) -> Result<Self> {
        let name = name.into();
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerance of `{name}` must be positive and finite, got {tolerance}"
            )));
        }
        Ok(QoiRequest {
            name,
            expr,
            tolerance,
            mode: ToleranceMode::Relative,
        })
    }

    pub fn with_mode(mut self, mode: ToleranceMode) -> Self {
        self.mode = mode;
        self
    }
}

/// A `--qoi` argument before a tolerance is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct QoiSpec {
    pub name: String,
    pub expr: QoiExpr,
    pub tolerance: Option<f64>,
}

/// Built-in case-study QoI `name` renumbered onto `variables`.
pub fn builtin_qoi(name: &str, variables: &[String]) -> Option<Result<QoiExpr>> {
    let expr = builtin_ge_qois().remove(name)?;
    let mut map = Vec::with_capacity(GE_VARIABLES.len());
    for v in GE_VARIABLES {
        match variables.iter().position(|n| n == v) {
            Some(i) => map.push(i),
            None => {
                return Some(Err(Error::InvalidInput(format!(
                    "built-in QoI `{name}` needs variable `{v}`, which is not in the store"
                ))))
            }
        }
    }
    Some(Ok(expr.map_vars(&|i| map[i])))
}

/// Parses `name=expr@tau`, `name=expr`, `BUILTIN@tau`, `BUILTIN` or a bare
/// `expr@tau` (named after its own text).
pub fn parse_qoi_spec(spec: &str, variables: &[String]) -> Result<QoiSpec> {
    let (body, tolerance) = match spec.rsplit_once('@') {
        Some((body, tau)) => {
            let tau: f64 = tau.trim().parse().map_err(|_| {
                Error::InvalidInput(format!("invalid tolerance `{tau}` in `{spec}`"))
            })?;
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "tolerance in `{spec}` must be positive"
                )));
            }
            (body, Some(tau))
        }
        None => (spec, None),
    };
    let (name, text) = match body.split_once('=') {
        Some((name, text)) => (name.trim(), text.trim()),
        None => (body.trim(), body.trim()),
    };
    if name.is_empty() || text.is_empty() {
        return Err(Error::InvalidInput(format!("empty QoI in `{spec}`")));
    }
    let is_identifier = text.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    let builtin = if is_identifier && !variables.iter().any(|v| v == text) {
        builtin_qoi(text, variables)
    } else {
        None
    };
    let expr = match builtin {
        Some(expr) => expr?,
        None => parse_qoi(text, variables)?,
    };
    Ok(QoiSpec {
        name: name.to_string(),
        expr,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn named_expression_with_tolerance() {
        let s = parse_qoi_spec("prod = x0*x1 @ 1e-3", &names(&["x0", "x1"])).unwrap();
        assert_eq!(s.name, "prod");
        assert_eq!(s.tolerance, Some(1e-3));
        assert_eq!(
            s.expr,
            QoiExpr::Product(Box::new(QoiExpr::Var(0)), Box::new(QoiExpr::Var(1)))
        );
    }

    #[test]
    fn bare_expression_named_after_text() {
        let s = parse_qoi_spec("x1", &names(&["x0", "x1"])).unwrap();
        assert_eq!(s.name, "x1");
        assert_eq!(s.expr, QoiExpr::Var(1));
        assert_eq!(s.tolerance, None);
    }

    #[test]
    fn builtin_renumbered_onto_store_order() {
        let store = names(&["D", "P", "Vz", "Vy", "Vx"]);
        let s = parse_qoi_spec("VTOT@0.01", &store).unwrap();
        let v = s.expr.eval(&[1.0, 1.0, 0.0, 4.0, 3.0]).unwrap();
        assert_eq!(v, 5.0);
        let t = parse_qoi_spec("T", &store).unwrap().expr;
        let direct = 2e5 / (1.5 * 287.1);
        assert!((t.eval(&[1.5, 2e5, 0.0, 0.0, 0.0]).unwrap() - direct).abs() < 1e-12 * direct);
        assert!(parse_qoi_spec("VTOT", &names(&["Vx"])).is_err());
    }

    #[test]
    fn bad_specs() {
        let v = names(&["x"]);
        assert!(parse_qoi_spec("q=x@-1", &v).is_err());
        assert!(parse_qoi_spec("q=x@abc", &v).is_err());
        assert!(parse_qoi_spec("q=@1", &v).is_err());
        assert!(parse_qoi_spec("q=y@1", &v).is_err());
        assert!(QoiRequest::new("q", QoiExpr::Var(0), 0.0).is_err());
    }
}
