//! QoI-preserving progressive retrieval.
//!
//! Each iteration reconstructs every involved variable to its current
//! error bound, scans all points for the worst estimated error of each
//! QoI, and tightens the bounds of the variables behind every violated QoI
//! at its worst point. Retrieval stops once every QoI meets its tolerance
//! or no variable can be refined any further.

mod estimate;
mod report;
mod request;

use rayon::prelude::*;

use crate::codec::{RetrievalState, SegmentStore};
use crate::error::{Error, Result};
use crate::qoi::ErrorBound;

pub use estimate::{
    assign_eb, estimate_all, reassign_eb, QoiEstimate, Reassigned, REDUCTION_FACTOR,
};
pub use report::{QoiReport, RetrievalReport, TraceRow, VariableReport};
pub use request::{builtin_qoi, parse_qoi_spec, QoiRequest, QoiSpec, ToleranceMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrieveOptions {
    /// Factor by which violated QoIs shrink their variables' bounds.
    pub reduction_factor: f64,
}

impl Default for RetrieveOptions {
    fn default() -> Self {
        RetrieveOptions {
            reduction_factor: REDUCTION_FACTOR,
        }
    }
}

/// Slack applied to derived absolute tolerances so that an estimate meeting
/// one still meets the relative tolerance after rounding.
const TOLERANCE_SLACK: f64 = 1.0 - 4.0 * f64::EPSILON;

/// Progressive retrieval state over one store. Consecutive calls to
/// [`Session::retrieve`] continue from the data already fetched.
pub struct Session<'s> {
    store: &'s SegmentStore,
    names: Vec<String>,
    states: Vec<Option<RetrievalState>>,
}

impl<'s> Session<'s> {
    pub fn new(store: &'s SegmentStore) -> Self {
        let names: Vec<String> = store
            .manifest()
            .names()
            .into_iter()
            .map(String::from)
            .collect();
        let states = names.iter().map(|_| None).collect();
        Session {
            store,
            names,
            states,
        }
    }

    pub fn store(&self) -> &SegmentStore {
        self.store
    }

    /// Store variable names; QoI variable ordinals index into this list.
    pub fn variable_names(&self) -> &[String] {
        &self.names
    }

    pub fn state(&self, name: &str) -> Option<&RetrievalState> {
        let i = self.names.iter().position(|n| n == name)?;
        self.states[i].as_ref()
    }

    /// Total bytes fetched so far, masks included.
    pub fn total_bytes(&self) -> u64 {
        self.states.iter().flatten().map(|s| s.bytes_read()).sum()
    }

    /// Runs the retrieval loop for `requests`.
    pub fn retrieve(
        &mut self,
        requests: &[QoiRequest],
        options: &RetrieveOptions,
    ) -> Result<RetrievalReport> {
        let c = options.reduction_factor;
        if !(c > 1.0 && c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "reduction factor {c} must exceed 1"
            )));
        }
        if requests.is_empty() {
            return Err(Error::InvalidInput("no QoI requested".into()));
        }
        let n_vars = self.names.len();
        for r in requests {
            r.expr.validate(n_vars)?;
            if !(r.tolerance.is_finite() && r.tolerance > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "tolerance of `{}` must be positive",
                    r.name
                )));
            }
            if let ToleranceMode::KnownRange(range) = r.mode {
                if !(range.is_finite() && range >= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "known range of `{}` must be finite and >= 0",
                        r.name
                    )));
                }
            }
        }

        let var_sets: Vec<_> = requests.iter().map(|r| r.expr.variables()).collect();
        let mut targets: Vec<Option<f64>> = (0..n_vars)
            .map(|v| {
                let taus: Vec<f64> = requests
                    .iter()
                    .zip(&var_sets)
                    .filter(|(_, vars)| vars.contains(&v))
                    .map(|(r, _)| r.tolerance)
                    .collect();
                let range = self.store.manifest().variables[v].value_range;
                assign_eb(range, &taus)
            })
            .collect();
        let involved: Vec<usize> = (0..n_vars).filter(|&v| targets[v].is_some()).collect();
        for &v in &involved {
            if self.states[v].is_none() {
                self.states[v] = Some(RetrievalState::open(self.store, &self.names[v])?);
            }
        }
        let floors: Vec<f64> = (0..n_vars)
            .map(|v| self.states[v].as_ref().map_or(0.0, |s| s.floor()))
            .collect();
        let exprs: Vec<_> = requests.iter().map(|r| &r.expr).collect();
        let qoi_names: Vec<&str> = requests.iter().map(|r| r.name.as_str()).collect();

        let mut trace = Vec::new();
        let mut unattainable = vec![false; requests.len()];
        let mut iteration = 0;
        let (estimates, denominators, satisfied) = loop {
            iteration += 1;
            let store = self.store;
            self.states
                .par_iter_mut()
                .enumerate()
                .filter_map(|(v, s)| Some((targets[v]?, s.as_mut()?)))
                .try_for_each(|(target, state)| state.reconstruct(store, target).map(|_| ()))?;

            // Estimates use the bound a fresh retrieval to each target would
            // guarantee, so the outcome does not depend on earlier requests.
            let eps_now: Vec<f64> = (0..n_vars)
                .map(|v| match (&self.states[v], targets[v]) {
                    (Some(s), Some(t)) => s.bound_for(t).max(s.achieved()),
                    _ => 0.0,
                })
                .collect();
            let values: Vec<&[f64]> = (0..n_vars)
                .map(|v| match (&self.states[v], targets[v]) {
                    (Some(s), Some(_)) => s.values(),
                    _ => &[][..],
                })
                .collect();
            let masks: Vec<_> = self
                .states
                .iter()
                .map(|s| s.as_ref().and_then(|s| s.mask()))
                .collect();
            let estimates = estimate_all(&exprs, &qoi_names, &values, &eps_now, &masks)?;

            let denominators: Vec<f64> = requests
                .iter()
                .zip(&estimates)
                .map(|(r, e)| match r.mode {
                    ToleranceMode::Relative => e.value_range(),
                    ToleranceMode::KnownRange(range) => range,
                    ToleranceMode::Absolute => 1.0,
                })
                .collect();
            let relative: Vec<ErrorBound> = estimates
                .iter()
                .zip(&denominators)
                .map(|(e, &d)| relative_bound(e.max_bound, d))
                .collect();
            let satisfied: Vec<bool> = relative
                .iter()
                .zip(requests)
                .map(|(e, r)| *e <= ErrorBound::finite(r.tolerance))
                .collect();
            trace.push(TraceRow {
                iteration,
                eps: involved.iter().map(|&v| eps_now[v]).collect(),
                estimates: relative,
                bytes: self.total_bytes(),
            });
            if satisfied.iter().all(|&s| s) {
                break (estimates, denominators, satisfied);
            }

            let mut working = eps_now.clone();
            for (k, r) in requests.iter().enumerate() {
                if satisfied[k] {
                    continue;
                }
                let i = estimates[k].index;
                let point: Vec<f64> = values
                    .iter()
                    .map(|v| v.get(i).copied().unwrap_or(0.0))
                    .collect();
                let masked: Vec<bool> = masks.iter().map(|m| m.is_some_and(|m| m.get(i))).collect();
                let tau = r.tolerance * denominators[k] * TOLERANCE_SLACK;
                let out = reassign_eb(&r.expr, &point, &working, &masked, &floors, tau, c)
                    .map_err(|e| point_error(&r.name, i, &point, e))?;
                unattainable[k] = out.unattainable;
                working = out.eps;
            }
            let mut progress = false;
            for &v in &involved {
                let state = self.states[v].as_ref().expect("opened");
                if working[v] < eps_now[v] && !state.at_full_fidelity() {
                    progress = true;
                }
                targets[v] = Some(working[v]);
            }
            if !progress {
                break (estimates, denominators, satisfied);
            }
        };

        let n_e = self.store.n_e();
        let per_point = |bytes: u64| {
            if n_e == 0 {
                0.0
            } else {
                8.0 * bytes as f64 / n_e as f64
            }
        };
        let variables = involved
            .iter()
            .map(|&v| {
                let s = self.states[v].as_ref().expect("opened");
                VariableReport {
                    name: self.names[v].clone(),
                    eps: s.achieved(),
                    target_eps: targets[v].expect("involved"),
                    bytes: s.bytes_read(),
                    bitrate: per_point(s.bytes_read()),
                    segments: s.consumed().to_vec(),
                    full_fidelity: s.at_full_fidelity(),
                }
            })
            .collect();
        let qois = requests
            .iter()
            .enumerate()
            .map(|(k, r)| QoiReport {
                name: r.name.clone(),
                expression: r.expr.named(&self.names).to_string(),
                tolerance: r.tolerance,
                mode: r.mode,
                denominator: denominators[k],
                max_estimated: relative_bound(estimates[k].max_bound, denominators[k]),
                max_estimated_abs: estimates[k].max_bound,
                index: estimates[k].index,
                satisfied: satisfied[k],
                possibly_unattainable: !satisfied[k] && unattainable[k],
            })
            .collect();
        let total_bytes = self.total_bytes();
        Ok(RetrievalReport {
            satisfied: satisfied.iter().all(|&s| s),
            iterations: iteration,
            n_e,
            total_bytes,
            bitrate: per_point(total_bytes),
            variables,
            qois,
            trace,
        })
    }

    /// Reconstruction of `name`, if it has been retrieved.
    pub fn values(&self, name: &str) -> Option<&[f64]> {
        self.state(name).map(|s| s.values())
    }
}

fn relative_bound(abs: ErrorBound, denominator: f64) -> ErrorBound {
    match abs {
        ErrorBound::Finite(0.0) => ErrorBound::ZERO,
        ErrorBound::Finite(b) if denominator > 0.0 => ErrorBound::finite(b / denominator),
        _ => ErrorBound::Unbounded,
    }
}

fn point_error(qoi: &str, index: usize, values: &[f64], e: Error) -> Error {
    match e {
        Error::Domain(reason) => Error::PointDomain {
            qoi: qoi.to_string(),
            index,
            values: values.to_vec(),
            reason,
        },
        other => other,
    }
}

/// One-shot retrieval in a fresh session.
pub fn retrieve(
    store: &SegmentStore,
    requests: &[QoiRequest],
    options: &RetrieveOptions,
) -> Result<RetrievalReport> {
    Session::new(store).retrieve(requests, options)
}
