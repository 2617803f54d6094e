use rayon::prelude::*;

use crate::codec::OutlierMask;
use crate::error::{Error, Result};
use crate::qoi::{ErrorBound, PointContext, QoiExpr};

/// Default factor by which `reassign_eb` divides error bounds.
pub const REDUCTION_FACTOR: f64 = 1.5;

/// Cap on divisions inside one `reassign_eb` call; far more than the ~1800
/// it takes to shrink any double to zero.
const MAX_DIVISIONS: usize = 4096;

const CHUNK: usize = 4096;

/// Initial absolute bound of a variable with value range `range` that the
/// QoIs with relative tolerances `taus` depend on. `None` when no QoI uses
/// the variable and it need not be retrieved.
pub fn assign_eb(range: f64, taus: &[f64]) -> Option<f64> {
    if taus.is_empty() {
        return None;
    }
    let rel = taus.iter().fold(1.0f64, |m, &t| m.min(t));
    Some(rel * range)
}

/// Result of tightening the bounds for one violated QoI.
#[derive(Debug, Clone, PartialEq)]
pub struct Reassigned {
    pub eps: Vec<f64>,
    pub divisions: usize,
    /// Every involved variable reached its floor with the estimate still
    /// above the tolerance.
    pub unattainable: bool,
    /// Estimate at the returned bounds.
    pub estimate: ErrorBound,
}

/// Divides the bounds of every variable in `expr` by `c` until the error
/// estimate at the point `values` is at most `tau`.
///
/// `masked[v]` marks variables stored exactly at this point; their bound
/// there is zero. Bounds never go below `floors`. With `tau == 0` at most
/// one division is made, since only exact data could meet it.
pub fn reassign_eb(
    expr: &QoiExpr,
    values: &[f64],
    eps: &[f64],
    masked: &[bool],
    floors: &[f64],
    tau: f64,
    c: f64,
) -> Result<Reassigned> {
    assert!(c > 1.0, "reduction factor must exceed 1");
    assert!(
        eps.len() == values.len() && masked.len() == values.len() && floors.len() == values.len(),
        "per-variable inputs differ in length"
    );
    let vars: Vec<usize> = expr.variables().into_iter().collect();
    let mut eps = eps.to_vec();
    let estimate_at = |eps: &[f64]| -> Result<ErrorBound> {
        let bounds = eps
            .iter()
            .zip(masked)
            .map(|(&e, &m)| {
                if m {
                    ErrorBound::ZERO
                } else {
                    ErrorBound::finite(e)
                }
            })
            .collect();
        let ctx = PointContext::new(values.to_vec(), bounds)?;
        Ok(expr.propagate(&ctx)?.1)
    };
    let mut estimate = estimate_at(&eps)?;
    let mut divisions = 0;
    let mut unattainable = false;
    while !(estimate <= ErrorBound::finite(tau)) {
        let stuck = vars.iter().all(|&v| masked[v] || eps[v] <= floors[v]);
        if stuck || divisions >= MAX_DIVISIONS || (tau == 0.0 && divisions == 1) {
            unattainable = stuck || divisions >= MAX_DIVISIONS;
            break;
        }
        for &v in &vars {
            eps[v] = (eps[v] / c).max(floors[v]);
        }
        divisions += 1;
        estimate = estimate_at(&eps)?;
    }
    Ok(Reassigned {
        eps,
        divisions,
        unattainable,
        estimate,
    })
}

/// Scan result for one QoI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QoiEstimate {
    /// Largest absolute error bound over all points.
    pub max_bound: ErrorBound,
    /// First point attaining `max_bound`.
    pub index: usize,
    /// Range of the QoI over points with a finite bound, if any.
    pub value_min: f64,
    pub value_max: f64,
}

impl QoiEstimate {
    fn empty() -> Self {
        QoiEstimate {
            max_bound: ErrorBound::ZERO,
            index: 0,
            value_min: f64::INFINITY,
            value_max: f64::NEG_INFINITY,
        }
    }

    /// `max - min` of the QoI, 0 when no point had a finite bound.
    pub fn value_range(&self) -> f64 {
        if self.value_max >= self.value_min {
            self.value_max - self.value_min
        } else {
            0.0
        }
    }

    fn absorb(&mut self, i: usize, value: f64, bound: ErrorBound) {
        if bound > self.max_bound {
            self.max_bound = bound;
            self.index = i;
        }
        if bound.is_finite() {
            self.value_min = self.value_min.min(value);
            self.value_max = self.value_max.max(value);
        }
    }

    /// Merges a scan of later points; ties keep the earlier index.
    fn merge(&mut self, later: &QoiEstimate) {
        if later.max_bound > self.max_bound {
            self.max_bound = later.max_bound;
            self.index = later.index;
        }
        self.value_min = self.value_min.min(later.value_min);
        self.value_max = self.value_max.max(later.value_max);
    }
}

/// Error that carries the point where evaluation failed.
struct PointFailure {
    qoi: usize,
    index: usize,
    error: Error,
}

/// Propagates every QoI at every point and returns the worst bound of
/// each, with ties broken toward the lowest index.
///
/// `values[v]` is the reconstruction of variable `v` (an empty slice for
/// variables no QoI uses), `eps[v]` its bound and `masks[v]` its outlier
/// mask; masked points carry a zero bound, and points where all of a QoI's
/// inputs are masked contribute exactly zero. `names` only labels errors.
pub fn estimate_all(
    exprs: &[&QoiExpr],
    names: &[&str],
    values: &[&[f64]],
    eps: &[f64],
    masks: &[Option<&OutlierMask>],
) -> Result<Vec<QoiEstimate>> {
    assert_eq!(
        values.len(),
        eps.len(),
        "values and bounds differ in length"
    );
    assert_eq!(
        values.len(),
        masks.len(),
        "values and masks differ in length"
    );
    let n = values.iter().map(|v| v.len()).max().unwrap_or(0);
    let n_vars = values.len();
    let used: Vec<usize> = (0..n_vars).filter(|&v| !values[v].is_empty()).collect();
    for &v in &used {
        if values[v].len() != n {
            return Err(Error::InvalidInput(
                "reconstructions differ in length".into(),
            ));
        }
    }
    for (k, e) in exprs.iter().enumerate() {
        if let Some(&v) = e
            .variables()
            .iter()
            .find(|&&v| v >= n_vars || values[v].is_empty())
        {
            return Err(Error::InvalidInput(format!(
                "QoI `{}` uses variable #{v}, which has no reconstruction",
                names.get(k).unwrap_or(&"?")
            )));
        }
    }
    let base_bounds: Vec<ErrorBound> = eps.iter().map(|&e| ErrorBound::finite(e)).collect();
    let qoi_vars: Vec<Vec<usize>> = exprs
        .iter()
        .map(|e| e.variables().into_iter().collect())
        .collect();

    let chunks: Vec<std::result::Result<Vec<QoiEstimate>, PointFailure>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![QoiEstimate::empty(); exprs.len()];
            let mut ctx =
                PointContext::new(vec![0.0; n_vars], base_bounds.clone()).expect("equal lengths");
            #[allow(clippy::needless_range_loop)]
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                for &v in &used {
                    let masked = masks[v].is_some_and(|m| m.get(i));
                    let bound = if masked {
                        ErrorBound::ZERO
                    } else {
                        base_bounds[v]
                    };
                    ctx.set(v, values[v][i], bound);
                }
                for (k, e) in exprs.iter().enumerate() {
                    // Points where every input is masked are exact; a QoI
                    // undefined there has nothing to estimate.
                    if qoi_vars[k]
                        .iter()
                        .all(|&v| masks[v].is_some_and(|m| m.get(i)))
                    {
                        if let Ok((value, _)) = e.propagate(&ctx) {
                            acc[k].absorb(i, value, ErrorBound::ZERO);
                        }
                        continue;
                    }
                    let (value, bound) = e.propagate(&ctx).map_err(|error| PointFailure {
                        qoi: k,
                        index: i,
                        error,
                    })?;
                    acc[k].absorb(i, value, bound);
                }
            }
            Ok(acc)
        })
        .collect();

    let mut total = vec![QoiEstimate::empty(); exprs.len()];
    for chunk in chunks {
        match chunk {
            Ok(acc) => {
                for (t, a) in total.iter_mut().zip(&acc) {
                    t.merge(a);
                }
            }
            Err(f) => {
                return Err(Error::PointDomain {
                    qoi: names.get(f.qoi).unwrap_or(&"?").to_string(),
                    index: f.index,
                    values: used.iter().map(|&v| values[v][f.index]).collect(),
                    reason: f.error.to_string(),
                })
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assign_examples() {
        assert_eq!(assign_eb(100.0, &[1e-2, 1e-3]), Some(0.1));
        assert_eq!(assign_eb(100.0, &[]), None);
        assert_eq!(assign_eb(7.0, &[2.0]), Some(7.0));
    }

    #[test]
    fn reassign_hand_trace() {
        let r = reassign_eb(&QoiExpr::Var(0), &[3.0], &[0.9], &[false], &[0.0], 0.5, 1.5).unwrap();
        assert_eq!(r.divisions, 2);
        assert_eq!(r.eps, vec![0.9 / 1.5 / 1.5]);
        assert!((r.eps[0] - 0.4).abs() < 1e-15);
        assert!(!r.unattainable);
    }

    #[test]
    fn reassign_noop_when_met() {
        let r = reassign_eb(&QoiExpr::Var(0), &[3.0], &[0.4], &[false], &[0.0], 0.5, 1.5).unwrap();
        assert_eq!(r.divisions, 0);
        assert_eq!(r.eps, vec![0.4]);
    }

    #[test]
    fn reassign_through_unbounded() {
        let e = QoiExpr::Quotient(Box::new(QoiExpr::Const(1.0)), Box::new(QoiExpr::Var(0)));
        let r = reassign_eb(&e, &[1.0], &[2.0], &[false], &[0.0], 0.1, 1.5).unwrap();
        // 2 -> 1.333 -> 0.889 (finite from here on) -> ...
        assert!(r.divisions >= 3);
        assert!(r.estimate <= ErrorBound::finite(0.1));
        let before = reassign_eb(&e, &[1.0], &[2.0], &[false], &[0.0], 0.1, 1.5).unwrap();
        assert_eq!(before, r);
    }

    #[test]
    fn reassign_stops_at_floor() {
        let r = reassign_eb(&QoiExpr::Var(0), &[3.0], &[0.9], &[false], &[0.5], 0.1, 1.5).unwrap();
        assert!(r.unattainable);
        assert_eq!(r.eps, vec![0.5]);
    }

    #[test]
    fn reassign_zero_tau_single_division() {
        let r = reassign_eb(&QoiExpr::Var(0), &[3.0], &[0.9], &[false], &[0.0], 0.0, 1.5).unwrap();
        assert_eq!(r.divisions, 1);
        assert!(!r.unattainable);
    }

    #[test]
    fn three_point_hand_example() {
        // Identity QoI with per-point bounds 0.1, 0.5, 0.2 via masking is not
        // possible, so scale the bound through the value instead: x^2 at
        // eps = 0.01 has bound 0.02|x| + 1e-4.
        let x = [4.995, 24.995, 9.995];
        let e = QoiExpr::Power(Box::new(QoiExpr::Var(0)), 2);
        let est = estimate_all(&[&e], &["q"], &[&x], &[0.01], &[None]).unwrap();
        assert_eq!(est[0].index, 1);
        assert!((est[0].max_bound.as_f64() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_eps_and_ties() {
        let x = [1.0, 2.0, 2.0, 1.0];
        let e = QoiExpr::Var(0);
        let est = estimate_all(&[&e], &["q"], &[&x], &[0.0], &[None]).unwrap();
        assert_eq!(est[0].max_bound, ErrorBound::ZERO);
        assert_eq!(est[0].index, 0);
        assert_eq!(est[0].value_range(), 1.0);
        let sq = QoiExpr::Power(Box::new(QoiExpr::Var(0)), 2);
        let est = estimate_all(&[&sq], &["q"], &[&x], &[0.1], &[None]).unwrap();
        assert_eq!(est[0].index, 1);
    }

    #[test]
    fn masked_points_have_zero_bound() {
        let x = [0.0, 1.0];
        let mask = OutlierMask::from_fn(2, |i| i == 0);
        let e = QoiExpr::Sqrt(Box::new(QoiExpr::Var(0)));
        let est = estimate_all(&[&e], &["q"], &[&x], &[0.01], &[Some(&mask)]).unwrap();
        assert_eq!(est[0].index, 1);
        // Without the mask the sqrt at 0 dominates.
        let est = estimate_all(&[&e], &["q"], &[&x], &[0.01], &[None]).unwrap();
        assert_eq!(est[0].index, 0);
    }

    #[test]
    fn domain_errors_name_the_point() {
        let x = [1.0, 0.0, 0.0];
        let e = QoiExpr::Quotient(Box::new(QoiExpr::Const(2.0)), Box::new(QoiExpr::Var(0)));
        let err = estimate_all(&[&e], &["inv"], &[&x], &[0.0], &[None]).unwrap_err();
        match err {
            Error::PointDomain { qoi, index, .. } => {
                assert_eq!(qoi, "inv");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn many_chunks_keep_first_argmax() {
        let n = 3 * CHUNK + 17;
        let mut x = vec![1.0; n];
        x[CHUNK + 5] = 9.0;
        x[2 * CHUNK + 1] = 9.0;
        let e = QoiExpr::Power(Box::new(QoiExpr::Var(0)), 2);
        let est = estimate_all(&[&e], &["q"], &[&x], &[0.1], &[None]).unwrap();
        assert_eq!(est[0].index, CHUNK + 5);
    }
}
