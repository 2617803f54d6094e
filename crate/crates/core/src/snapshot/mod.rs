//! Snapshot codecs over a ladder of error bounds.
//!
//! Independent mode stores one standalone quantization of the data per
//! rung and retrieval picks a single rung. Delta mode quantizes the
//! residual against the reconstruction of all previous rungs, so a prefix
//! of rungs refines the data.

mod quantize;

use std::str::FromStr;

use crate::codec::bitpack::{BitReader, BitWriter, LeReader};
use crate::codec::{Encoded, Segment, SegmentDecoder};
use crate::error::{Error, Result};

pub use quantize::{dequantize, quantize, QuantizedBlock};

const META_VERSION: u32 = 1;
const HEADER_BYTES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotMode {
    Independent,
    Delta,
}

/// Strictly decreasing relative error bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotLadder {
    relative: Vec<f64>,
}

impl Default for SnapshotLadder {
    /// `1e-1, 1e-2, ..., 1e-10`.
    fn default() -> Self {
        SnapshotLadder::decades(1, 10).expect("valid default ladder")
    }
}

impl SnapshotLadder {
    pub fn new(relative: Vec<f64>) -> Result<Self> {
        if relative.is_empty() {
            return Err(Error::InvalidInput("ladder needs at least one rung".into()));
        }
        if relative.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "ladder bounds must be positive and finite: {relative:?}"
            )));
        }
        if relative.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput(format!(
                "ladder must be strictly decreasing: {relative:?}"
            )));
        }
        Ok(SnapshotLadder { relative })
    }

    /// `10^-first, ..., 10^-last`.
    pub fn decades(first: u32, last: u32) -> Result<Self> {
        if first > last {
            return Err(Error::InvalidInput(format!(
                "empty decade ladder {first}..{last}"
            )));
        }
        let relative = (first..=last)
            .map(|i| format!("1e-{i}").parse().expect("float literal"))
            .collect();
        Self::new(relative)
    }

    pub fn relative(&self) -> &[f64] {
        &self.relative
    }

    pub fn len(&self) -> usize {
        self.relative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relative.is_empty()
    }

    pub fn absolute(&self, range: f64) -> Vec<f64> {
        self.relative.iter().map(|r| r * range).collect()
    }

    /// 1-based rung of the smallest `i` with `bound_i <= target`, or `None`
    /// when the ladder cannot go that low.
    pub fn select(&self, target: f64) -> Option<usize> {
        select_rung(&self.relative, target)
    }
}

/// 1-based index of the first bound `<= target`.
pub fn select_rung(bounds: &[f64], target: f64) -> Option<usize> {
    bounds.iter().position(|&b| b <= target).map(|i| i + 1)
}

/// Parses `1e-1..1e-10` (powers of ten between both ends) or a comma
/// separated list of bounds.
impl FromStr for SnapshotLadder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("invalid ladder `{s}`"));
        if let Some((a, b)) = s.split_once("..") {
            let decade = |t: &str| -> Result<u32> {
                let v: f64 = t.trim().parse().map_err(|_| bad())?;
                let d = -v.log10();
                let r = d.round();
                if v <= 0.0 || r < 0.0 || (d - r).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "ladder endpoint `{t}` is not a power of ten below 1"
                    )));
                }
                Ok(r as u32)
            };
            return SnapshotLadder::decades(decade(a)?, decade(b)?);
        }
        let values = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        SnapshotLadder::new(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SnapshotMeta {
    n: usize,
    mode: SnapshotMode,
    relative: Vec<f64>,
    absolute: Vec<f64>,
}

impl SnapshotMeta {
    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&META_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.push(match self.mode {
            SnapshotMode::Independent => 0,
            SnapshotMode::Delta => 1,
        });
        out.extend_from_slice(&(self.relative.len() as u32).to_le_bytes());
        for (r, a) in self.relative.iter().zip(&self.absolute) {
            out.extend_from_slice(&r.to_le_bytes());
            out.extend_from_slice(&a.to_le_bytes());
        }
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = LeReader::new(bytes, "snapshot metadata");
        let version = r.u32()?;
        if version != META_VERSION {
            return Err(Error::CorruptPayload(format!(
                "unsupported snapshot metadata version {version}"
            )));
        }
        let n = r.u64()? as usize;
        let mode = match r.u8()? {
            0 => SnapshotMode::Independent,
            1 => SnapshotMode::Delta,
            m => return Err(Error::CorruptPayload(format!("unknown snapshot mode {m}"))),
        };
        let rungs = r.u32()? as usize;
        let mut relative = Vec::new();
        let mut absolute = Vec::new();
        for _ in 0..rungs {
            relative.push(r.f64()?);
            absolute.push(r.f64()?);
        }
        r.expect_end()?;
        Ok(SnapshotMeta {
            n,
            mode,
            relative,
            absolute,
        })
    }
}

fn block_payload(rung: usize, block: &QuantizedBlock) -> Vec<u8> {
    let bits = block.codes.len() * block.bit_width as usize;
    let mut out = Vec::with_capacity(HEADER_BYTES + bits.div_ceil(8));
    out.extend_from_slice(&(rung as u32).to_le_bytes());
    out.extend_from_slice(&block.bit_width.to_le_bytes());
    out.extend_from_slice(&block.eps.to_le_bytes());
    out.extend_from_slice(&block.offset.to_le_bytes());
    out.extend_from_slice(&(block.codes.len() as u64).to_le_bytes());
    let mut w = BitWriter::with_capacity_bits(bits);
    for &c in &block.codes {
        w.write(c, block.bit_width);
    }
    out.extend_from_slice(&w.finish());
    out
}

fn parse_block(payload: &[u8], rung: usize, eps: f64, n: usize) -> Result<QuantizedBlock> {
    let mut r = LeReader::new(payload, "snapshot segment header");
    let got_rung = r.u32()? as usize;
    let bit_width = r.u32()?;
    let got_eps = r.f64()?;
    let offset = r.f64()?;
    let count = r.u64()? as usize;
    if got_rung != rung || !(got_eps > 0.5 * eps && got_eps <= eps) || count != n || bit_width > 63
    {
        return Err(Error::CorruptPayload(format!(
            "snapshot segment header (rung {got_rung}, eps {got_eps}, count {count}) \
             does not match rung {rung}"
        )));
    }
    if !offset.is_finite() {
        return Err(Error::CorruptPayload(
            "snapshot offset is not finite".into(),
        ));
    }
    let body = r.rest();
    let bits = count * bit_width as usize;
    if body.len() != bits.div_ceil(8) {
        return Err(Error::CorruptPayload(format!(
            "snapshot rung {rung} has {} code bytes, expected {}",
            body.len(),
            bits.div_ceil(8)
        )));
    }
    let mut reader = BitReader::new(body);
    let codes = (0..count)
        .map(|_| reader.read(bit_width))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedBlock {
        eps: got_eps,
        offset,
        bit_width,
        codes,
    })
}

/// Builds the snapshots of `values` whose value range is `range`.
///
/// Rungs too fine for the precision of the data end the ladder early; the
/// metadata records the rungs actually built.
pub fn encode(
    values: &[f64],
    range: f64,
    ladder: &SnapshotLadder,
    mode: SnapshotMode,
) -> Result<Encoded> {
    if values.is_empty() {
        return Err(Error::InvalidInput(
            "snapshot codec needs at least one value".into(),
        ));
    }
    if !(range.is_finite() && range >= 0.0) {
        return Err(Error::InvalidInput(format!("invalid value range {range}")));
    }
    // A constant input still gets a full ladder, quantized against a unit
    // range so that every bound is positive.
    let scale = if range > 0.0 { range } else { 1.0 };
    let mut meta = SnapshotMeta {
        n: values.len(),
        mode,
        relative: Vec::new(),
        absolute: Vec::new(),
    };
    let mut segments = Vec::new();
    let mut recon: Option<Vec<f64>> = None;
    for (i, &rel) in ladder.relative().iter().enumerate() {
        let eps = rel * scale;
        if meta.absolute.last().is_some_and(|&prev| eps >= prev) || eps <= 0.0 {
            break;
        }
        let base = match mode {
            SnapshotMode::Independent => None,
            SnapshotMode::Delta => recon.as_deref(),
        };
        let Some((block, next)) = quantize::quantize_against(values, base, eps)? else {
            break;
        };
        segments.push(Segment {
            id: i,
            payload: block_payload(i, &block),
            nominal_bound: eps,
        });
        meta.relative.push(rel);
        meta.absolute.push(eps);
        recon = Some(next);
    }
    Ok(Encoded {
        segments,
        metadata: meta.encode(),
    })
}

/// Incremental snapshot decoder.
pub struct SnapshotDecoder {
    meta: SnapshotMeta,
    recon: Vec<f64>,
    applied: usize,
}

impl SnapshotDecoder {
    pub fn new(metadata: &[u8], len: usize, mode: SnapshotMode) -> Result<Self> {
        let meta = SnapshotMeta::decode(metadata)?;
        if meta.n != len || meta.mode != mode {
            return Err(Error::CorruptPayload(format!(
                "snapshot metadata ({:?}, {} values) does not match store ({mode:?}, {len})",
                meta.mode, meta.n
            )));
        }
        Ok(SnapshotDecoder {
            recon: vec![0.0; len],
            applied: 0,
            meta,
        })
    }
}

impl SegmentDecoder for SnapshotDecoder {
    fn apply(&mut self, id: usize, payload: &[u8]) -> Result<()> {
        let Some(&eps) = self.meta.absolute.get(id) else {
            return Err(Error::CorruptPayload(format!("no snapshot rung {id}")));
        };
        let block = parse_block(payload, id, eps, self.meta.n)?;
        match self.meta.mode {
            SnapshotMode::Independent => {
                self.recon = dequantize(&block);
            }
            SnapshotMode::Delta => {
                if id != self.applied {
                    return Err(Error::CorruptPayload(format!(
                        "delta rung {id} applied after {} rungs",
                        self.applied
                    )));
                }
                quantize::accumulate(&mut self.recon, &block);
            }
        }
        self.applied += 1;
        Ok(())
    }

    fn values(&self) -> Vec<f64> {
        self.recon.clone()
    }
}
