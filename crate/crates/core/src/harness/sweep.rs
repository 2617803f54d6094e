use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::codec::SegmentStore;
use crate::error::{Error, Result};
use crate::qoi::{ErrorBound, PointContext, QoiExpr};
use crate::retrieve::{QoiRequest, RetrieveOptions, Session, ToleranceMode};

use super::ingest::{read_raw, ByteOrder, Dtype};

/// `0.1 * 2^-i` for `i = 0..20`.
pub fn default_schedule() -> Vec<f64> {
    (0..20).map(|i| 0.1 * 0.5f64.powi(i)).collect()
}

/// Parses `default`, `geom:<start>,<ratio>,<count>` or a comma separated
/// list. The result must be strictly decreasing.
pub fn parse_schedule(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidInput(format!("invalid schedule `{spec}`"));
    let taus = if spec == "default" {
        default_schedule()
    } else if let Some(rest) = spec.strip_prefix("geom:") {
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        let [start, ratio, count] = parts.as_slice() else {
            return Err(bad());
        };
        let start: f64 = start.parse().map_err(|_| bad())?;
        let ratio: f64 = ratio.parse().map_err(|_| bad())?;
        let count: i32 = count.parse().map_err(|_| bad())?;
        (0..count).map(|i| start * ratio.powi(i)).collect()
    } else {
        spec.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?
    };
    if taus.is_empty()
        || taus.iter().any(|t| !(t.is_finite() && *t > 0.0))
        || taus.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidInput(format!(
            "schedule `{spec}` must be positive and strictly decreasing"
        )));
    }
    Ok(taus)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub codec: String,
    pub qoi: String,
    pub requested_tau: f64,
    pub max_estimated: f64,
    pub max_actual: f64,
    pub bitrate: f64,
    /// Bytes fetched by the session so far.
    pub bytes: u64,
    pub iterations: usize,
    /// Original bytes of the QoI's variables over `bytes`.
    pub reduction_factor: f64,
    pub satisfied: bool,
}

/// QoI values at every point, with the same arithmetic retrieval uses.
pub fn qoi_values(expr: &QoiExpr, vars: &[&[f64]]) -> Result<Vec<f64>> {
    let n = vars.iter().map(|v| v.len()).max().unwrap_or(0);
    let mut ctx = PointContext::new(vec![0.0; vars.len()], vec![ErrorBound::ZERO; vars.len()])?;
    (0..n)
        .map(|i| {
            for (v, values) in vars.iter().enumerate() {
                ctx.set(v, values.get(i).copied().unwrap_or(0.0), ErrorBound::ZERO);
            }
            Ok(expr.propagate(&ctx)?.0)
        })
        .collect()
}

/// Reads the original data of every store variable from its recorded
/// source, or from `<dir>/<name>.f64` when `dir` is given. `None` when a
/// variable has no known source.
pub fn load_originals(store: &SegmentStore, dir: Option<&Path>) -> Result<Option<Vec<Vec<f64>>>> {
    let mut out = Vec::new();
    for rec in &store.manifest().variables {
        let values = match (dir, &rec.source) {
            (Some(d), _) => read_raw(
                &d.join(format!("{}.f64", rec.name)),
                Dtype::F64,
                ByteOrder::Little,
                0,
                rec.n_e,
            )?,
            (None, Some(src)) => read_raw(
                &src.path,
                src.dtype.parse()?,
                src.byte_order.parse()?,
                src.offset as usize,
                rec.n_e,
            )?,
            (None, None) => return Ok(None),
        };
        out.push(values);
    }
    Ok(Some(out))
}

/// Runs one retrieval session per QoI over the tolerance schedule.
///
/// With originals, tolerances are relative to the QoI's true range and the
/// actual error is measured against it; otherwise the online range is used
/// and `max_actual` is NaN.
pub fn sweep(
    store: &SegmentStore,
    qois: &[(String, QoiExpr)],
    originals: Option<&[Vec<f64>]>,
    schedule: &[f64],
    options: &RetrieveOptions,
) -> Result<Vec<SweepRow>> {
    let names = store.manifest().names();
    let n_e = store.n_e();
    if let Some(orig) = originals {
        if orig.len() != names.len() || orig.iter().any(|v| v.len() != n_e) {
            return Err(Error::InvalidInput(
                "original data do not match the store's variables".into(),
            ));
        }
    }
    let mut rows = Vec::new();
    for (name, expr) in qois {
        expr.validate(names.len())?;
        let vars: Vec<usize> = expr.variables().into_iter().collect();
        let codec = store.manifest().variables[vars[0]].codec.to_string();
        let truth = match originals {
            Some(orig) => {
                let slices: Vec<&[f64]> = orig.iter().map(|v| v.as_slice()).collect();
                let q = qoi_values(expr, &slices)?;
                let (lo, hi) = crate::codec::min_max(q.iter().copied()).unwrap_or((0.0, 0.0));
                Some((q, hi - lo))
            }
            None => None,
        };
        let mode = match &truth {
            Some((_, range)) => ToleranceMode::KnownRange(*range),
            None => ToleranceMode::Relative,
        };
        let original_bytes = 8 * n_e as u64 * vars.len() as u64;
        let mut session = Session::new(store);
        for &tau in schedule {
            let request = QoiRequest::new(name.clone(), expr.clone(), tau)?.with_mode(mode);
            let report = session.retrieve(&[request], options)?;
            let q = &report.qois[0];
            let max_actual = match &truth {
                Some((true_q, range)) => {
                    let recon: Vec<&[f64]> = names
                        .iter()
                        .map(|n| session.values(n).unwrap_or(&[]))
                        .collect();
                    match qoi_values(expr, &recon) {
                        Ok(vals) => {
                            let worst = vals
                                .iter()
                                .zip(true_q)
                                .map(|(a, b)| (a - b).abs())
                                .fold(0.0, f64::max);
                            if *range > 0.0 {
                                worst / range
                            } else {
                                worst
                            }
                        }
                        Err(_) => f64::NAN,
                    }
                }
                None => f64::NAN,
            };
            let bytes = report.total_bytes;
            rows.push(SweepRow {
                codec: codec.clone(),
                qoi: name.clone(),
                requested_tau: tau,
                max_estimated: q.max_estimated.as_f64(),
                max_actual,
                bitrate: report.bitrate,
                bytes,
                iterations: report.iterations,
                reduction_factor: if bytes == 0 {
                    f64::INFINITY
                } else {
                    original_bytes as f64 / bytes as f64
                },
                satisfied: report.satisfied,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
