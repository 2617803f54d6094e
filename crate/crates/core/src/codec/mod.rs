//! The progressive codec contract, the on-disk segment store and the
//! outlier mask shared by all codecs.
//!
//! Codecs only ever see the unmasked points of a variable, packed into a
//! dense array. This module handles the masking, scatters decoded values
//! back into place and keeps track of which segments were consumed.

pub mod bitpack;
mod mask;
mod state;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bitplane::{self, BitplaneConfig};
use crate::error::{Error, Result};
use crate::snapshot::{self, SnapshotLadder, SnapshotMode};

pub use mask::{build_mask, constant_mask, OutlierMask};
pub use state::{plan_ids, Plan, RetrievalState};
pub use store::{
    checksum, read_manifest, write_store, Manifest, MaskRecord, SegmentRecord, SegmentStore,
    SourceRecord, VariableRecord, FORMAT_VERSION,
};

/// One linearized floating-point field.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableData {
    name: String,
    values: Vec<f64>,
    dims: Vec<usize>,
}

impl VariableData {
    /// Rejects empty input and non-finite values.
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.is_empty() {
            return Err(Error::InvalidInput(format!(
                "variable `{name}` has no values"
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "variable `{name}` has non-finite value {} at index {i}",
                values[i]
            )));
        }
        let dims = vec![values.len()];
        Ok(VariableData { name, values, dims })
    }

    /// Records the declared shape. Only the product matters for the data.
    pub fn with_dims(mut self, dims: Vec<usize>) -> Result<Self> {
        let product: usize = dims.iter().product();
        if dims.is_empty() || product != self.values.len() {
            return Err(Error::InvalidInput(format!(
                "dims {dims:?} do not match {} values of `{}`",
                self.values.len(),
                self.name
            )));
        }
        self.dims = dims;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `max - min` over all points.
    pub fn value_range(&self) -> f64 {
        let (lo, hi) = min_max(self.values.iter().copied()).expect("non-empty");
        hi - lo
    }

    /// `(min, max)` over unmasked points, `None` when everything is masked.
    pub fn min_max_unmasked(&self, mask: Option<&OutlierMask>) -> Option<(f64, f64)> {
        match mask {
            None => min_max(self.values.iter().copied()),
            Some(m) => min_max(
                self.values
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !m.get(*i))
                    .map(|(_, v)| *v),
            ),
        }
    }
}

pub(crate) fn min_max(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecKind {
    /// Hierarchical basis plus interleaved bitplanes.
    Bitplane,
    /// Independent snapshots over an error-bound ladder.
    Snapshot,
    /// Residual snapshots over an error-bound ladder.
    Delta,
}

impl CodecKind {
    pub const ALL: [CodecKind; 3] = [CodecKind::Bitplane, CodecKind::Snapshot, CodecKind::Delta];

    /// Whether retrieval selects one segment instead of a prefix.
    pub fn is_independent(self) -> bool {
        matches!(self, CodecKind::Snapshot)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CodecKind::Bitplane => "bitplane",
            CodecKind::Snapshot => "snapshot",
            CodecKind::Delta => "delta",
        }
    }
}

impl fmt::Display for CodecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodecKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bitplane" => Ok(CodecKind::Bitplane),
            "snapshot" => Ok(CodecKind::Snapshot),
            "delta" => Ok(CodecKind::Delta),
            other => Err(Error::InvalidInput(format!(
                "unknown codec `{other}` (expected bitplane, snapshot or delta)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub kind: CodecKind,
    pub bitplane: BitplaneConfig,
    pub ladder: SnapshotLadder,
}

impl CodecConfig {
    pub fn new(kind: CodecKind) -> Self {
        CodecConfig {
            kind,
            bitplane: BitplaneConfig::default(),
            ladder: SnapshotLadder::default(),
        }
    }
}

/// One progressive chunk of a refactored variable.
///
/// `nominal_bound` is the guaranteed L-infinity error after consuming this
/// segment (and, for prefix codecs, every segment before it).
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: usize,
    pub payload: Vec<u8>,
    pub nominal_bound: f64,
}

/// Output of a codec's refactor step over the dense unmasked values.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub segments: Vec<Segment>,
    pub metadata: Vec<u8>,
}

/// Incremental decoder over the dense unmasked values.
pub(crate) trait SegmentDecoder: Send + Sync {
    fn apply(&mut self, id: usize, payload: &[u8]) -> Result<()>;
    fn values(&self) -> Vec<f64>;
}

pub(crate) fn decoder_for(
    kind: CodecKind,
    metadata: &[u8],
    len: usize,
) -> Result<Box<dyn SegmentDecoder>> {
    Ok(match kind {
        CodecKind::Bitplane => Box::new(bitplane::BitplaneDecoder::new(metadata, len)?),
        CodecKind::Snapshot => Box::new(snapshot::SnapshotDecoder::new(
            metadata,
            len,
            SnapshotMode::Independent,
        )?),
        CodecKind::Delta => Box::new(snapshot::SnapshotDecoder::new(
            metadata,
            len,
            SnapshotMode::Delta,
        )?),
    })
}

/// A refactored variable ready to be written to a store.
#[derive(Debug, Clone)]
pub struct EncodedVariable {
    pub record: VariableRecord,
    pub payloads: Vec<Vec<u8>>,
    pub mask: Option<OutlierMask>,
}

/// Refactors one variable. Masked points are left out of the codec input
/// and reconstruct to `mask_constant`.
pub fn refactor_variable(
    var: &VariableData,
    mask: Option<&OutlierMask>,
    mask_constant: f64,
    config: &CodecConfig,
) -> Result<EncodedVariable> {
    store::check_name(var.name())?;
    if let Some(m) = mask {
        if m.len() != var.len() {
            return Err(Error::InvalidInput(format!(
                "mask covers {} points but `{}` has {}",
                m.len(),
                var.name(),
                var.len()
            )));
        }
        if let Some(i) = (0..var.len()).find(|&i| m.get(i) && var.values()[i] != mask_constant) {
            return Err(Error::InvalidInput(format!(
                "`{}` is masked at {i} but holds {} instead of {mask_constant}",
                var.name(),
                var.values()[i]
            )));
        }
    }
    if !mask_constant.is_finite() {
        return Err(Error::InvalidInput("mask constant must be finite".into()));
    }

    let dense: Vec<f64> = match mask {
        None => var.values().to_vec(),
        Some(m) => var
            .values()
            .iter()
            .enumerate()
            .filter(|(i, _)| !m.get(*i))
            .map(|(_, v)| *v)
            .collect(),
    };
    let (min, max) = min_max(dense.iter().copied()).unwrap_or((mask_constant, mask_constant));
    let range = max - min;

    let encoded = if dense.is_empty() {
        Encoded {
            segments: Vec::new(),
            metadata: Vec::new(),
        }
    } else if range == 0.0 {
        Encoded {
            segments: vec![Segment {
                id: 0,
                payload: Vec::new(),
                nominal_bound: 0.0,
            }],
            metadata: Vec::new(),
        }
    } else {
        match config.kind {
            CodecKind::Bitplane => bitplane::encode(&dense, &config.bitplane)?,
            CodecKind::Snapshot => {
                snapshot::encode(&dense, range, &config.ladder, SnapshotMode::Independent)?
            }
            CodecKind::Delta => {
                snapshot::encode(&dense, range, &config.ladder, SnapshotMode::Delta)?
            }
        }
    };

    let segments = encoded
        .segments
        .iter()
        .map(|s| SegmentRecord {
            id: s.id,
            bytes: s.payload.len() as u64,
            nominal_bound: s.nominal_bound,
            checksum: checksum(&s.payload),
        })
        .collect();
    let mask_record = mask.map(|m| MaskRecord {
        constant: mask_constant,
        masked: m.count(),
        bytes: m.as_bytes().len() as u64,
        checksum: checksum(m.as_bytes()),
    });
    let record = VariableRecord {
        name: var.name().to_string(),
        codec: config.kind,
        n_e: var.len(),
        dims: var.dims().to_vec(),
        min,
        max,
        value_range: range,
        mask: mask_record,
        segments,
        metadata: store::encode_blob(&encoded.metadata),
        source: None,
    };
    record.validate()?;
    Ok(EncodedVariable {
        record,
        payloads: encoded.segments.into_iter().map(|s| s.payload).collect(),
        mask: mask.cloned(),
    })
}
