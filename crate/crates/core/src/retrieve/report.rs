use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::qoi::ErrorBound;

use super::ToleranceMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableReport {
    pub name: String,
    /// Guaranteed L-infinity bound of the final reconstruction.
    pub eps: f64,
    /// Bound the last iteration asked for.
    pub target_eps: f64,
    /// Bytes read for this variable over the whole session.
    pub bytes: u64,
    /// `8 * bytes / n_e`.
    pub bitrate: f64,
    pub segments: Vec<usize>,
    pub full_fidelity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoiReport {
    pub name: String,
    pub expression: String,
    pub tolerance: f64,
    pub mode: ToleranceMode,
    /// Range the relative tolerance was measured against (1 in absolute
    /// mode).
    pub denominator: f64,
    /// Largest estimated error in tolerance units.
    pub max_estimated: ErrorBound,
    /// Largest estimated error in QoI units.
    pub max_estimated_abs: ErrorBound,
    /// First point attaining the maximum.
    pub index: usize,
    pub satisfied: bool,
    /// Tightening hit the store's floor with the estimate still too large.
    pub possibly_unattainable: bool,
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// Achieved bound per involved variable.
    pub eps: Vec<f64>,
    /// Estimate per QoI in tolerance units.
    pub estimates: Vec<ErrorBound>,
    /// Session bytes after this iteration's reconstruction.
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub satisfied: bool,
    pub iterations: usize,
    pub n_e: usize,
    pub total_bytes: u64,
    /// `8 * total_bytes / n_e`.
    pub bitrate: f64,
    pub variables: Vec<VariableReport>,
    pub qois: Vec<QoiReport>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl RetrievalReport {
    pub fn qoi(&self, name: &str) -> Option<&QoiReport> {
        self.qois.iter().find(|q| q.name == name)
    }

    pub fn variable(&self, name: &str) -> Option<&VariableReport> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the trace as CSV: `iteration`, `eps_<var>`..., `est_<qoi>`...,
    /// `bytes`.
    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string()];
        header.extend(self.variables.iter().map(|v| format!("eps_{}", v.name)));
        header.extend(self.qois.iter().map(|q| format!("est_{}", q.name)));
        header.push("bytes".into());
        w.write_record(&header)?;
        for row in &self.trace {
            let mut rec = vec![row.iteration.to_string()];
            rec.extend(row.eps.iter().map(|e| e.to_string()));
            rec.extend(row.estimates.iter().map(|e| match e {
                ErrorBound::Finite(v) => v.to_string(),
                ErrorBound::Unbounded => "inf".into(),
            }));
            rec.push(row.bytes.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| crate::Error::Csv(e.into()))?;
        Ok(())
    }
}
