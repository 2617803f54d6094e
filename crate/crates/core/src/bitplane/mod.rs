//! Hierarchical-basis bitplane codec.
//!
//! Values are converted to fixed point with a shared exponent, decomposed
//! with the integer hierarchical basis, and every level's coefficient
//! magnitudes are cut into bitplanes. Segment `k` carries plane `k` of
//! every level (plus the sign plane with plane 0). Truncating each level
//! after `b` planes bounds its coefficient error by `2^(e_l - b) - 1`
//! units, and the floor-average interpolation adds at most the coarser
//! levels' error, so the point error is bounded by the sum over levels.

mod hb;

use crate::codec::bitpack::{bit_width, BitReader, BitWriter, LeReader};
use crate::codec::{Encoded, Segment, SegmentDecoder};
use crate::error::{Error, Result};
use crate::qoi::GUARD;

pub use hb::{
    default_levels, hb_forward, hb_inverse, level_indices, level_of, level_sizes, HbScalar,
    MAX_LEVELS,
};

const META_VERSION: u32 = 1;
const HEADER_BYTES: usize = 16;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitplaneConfig {
    /// Level count; `None` picks [`default_levels`].
    pub levels: Option<u32>,
}

/// `x * 2^k` with intermediate steps small enough to stay in range.
pub(crate) fn ldexp(mut x: f64, mut k: i32) -> f64 {
    while k > 1000 {
        x *= 2f64.powi(1000);
        k -= 1000;
    }
    while k < -1000 {
        x *= 2f64.powi(-1000);
        k += 1000;
    }
    x * 2f64.powi(k)
}

/// Smallest `E` with `m < 2^E`, for finite `m > 0`.
fn exponent_above(m: f64) -> i32 {
    let bits = m.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    if exp == 0 {
        bit_width(bits & ((1 << 52) - 1)) as i32 - 1074
    } else {
        exp - 1023 + 1
    }
}

/// Codec parameters stored in the manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitplaneMeta {
    pub n: usize,
    pub levels: u32,
    /// Fixed-point scale: one unit is `2^-shift`.
    pub shift: i32,
    pub q_min: i64,
    pub q_max: i64,
    /// Whether fixed-point conversion rounded any value.
    pub rounded: bool,
    /// Per-level magnitude bit widths `e_l`, coarsest first.
    pub exponents: Vec<u8>,
}

impl BitplaneMeta {
    pub fn planes(&self) -> usize {
        self.exponents.iter().copied().max().unwrap_or(0) as usize
    }

    fn q_mid(&self) -> i64 {
        self.q_min + (self.q_max - self.q_min) / 2
    }

    /// Certified L-infinity bound after `b` planes.
    pub fn bound_after(&self, b: usize) -> f64 {
        let mut units: u128 = 0;
        for &e in &self.exponents {
            let e = e as usize;
            if b < e {
                units += (1u128 << (e - b)) - 1;
            }
        }
        // Sum in half units to keep the rounding term exact.
        let halves = 2 * units + self.rounded as u128;
        let mut bound = ldexp(halves as f64, -self.shift - 1);
        if self.shift > 1021 {
            // Scaling back may land in the subnormal range.
            bound += f64::from_bits(1);
        }
        bound * GUARD
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(37 + self.exponents.len());
        out.extend_from_slice(&META_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&self.levels.to_le_bytes());
        out.extend_from_slice(&self.shift.to_le_bytes());
        out.extend_from_slice(&self.q_min.to_le_bytes());
        out.extend_from_slice(&self.q_max.to_le_bytes());
        out.push(self.rounded as u8);
        out.extend_from_slice(&self.exponents);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = LeReader::new(bytes, "bitplane metadata");
        let version = r.u32()?;
        if version != META_VERSION {
            return Err(Error::CorruptPayload(format!(
                "unsupported bitplane metadata version {version}"
            )));
        }
        let n = r.u64()? as usize;
        let levels = r.u32()?;
        let shift = r.i32()?;
        let q_min = r.i64()?;
        let q_max = r.i64()?;
        let rounded = match r.u8()? {
            0 => false,
            1 => true,
            other => {
                return Err(Error::CorruptPayload(format!("bad rounding flag {other}")));
            }
        };
        let exponents = r.rest().to_vec();
        if levels > MAX_LEVELS || exponents.len() != levels as usize + 1 {
            return Err(Error::CorruptPayload(format!(
                "bitplane metadata has {} exponents for {levels} levels",
                exponents.len()
            )));
        }
        if exponents.iter().any(|&e| e > 62) || q_min > q_max {
            return Err(Error::CorruptPayload(
                "bitplane metadata out of range".into(),
            ));
        }
        Ok(BitplaneMeta {
            n,
            levels,
            shift,
            q_min,
            q_max,
            rounded,
            exponents,
        })
    }
}

/// Refactors `values` into bitplane segments.
pub fn encode(values: &[f64], config: &BitplaneConfig) -> Result<Encoded> {
    let n = values.len();
    if n == 0 {
        return Err(Error::InvalidInput(
            "bitplane codec needs at least one value".into(),
        ));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite value {v}")));
    }
    let levels = config.levels.unwrap_or_else(|| default_levels(n));
    if levels > MAX_LEVELS {
        return Err(Error::InvalidInput(format!("at most {MAX_LEVELS} levels")));
    }

    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let shift = if max_abs == 0.0 {
        0
    } else {
        53 - exponent_above(max_abs)
    };
    let mut rounded = false;
    let q: Vec<i64> = values
        .iter()
        .map(|&v| {
            let scaled = ldexp(v, shift);
            let r = scaled.round();
            rounded |= r != scaled;
            r as i64
        })
        .collect();
    let q_min = *q.iter().min().expect("non-empty");
    let q_max = *q.iter().max().expect("non-empty");
    let q_mid = q_min + (q_max - q_min) / 2;
    let centered: Vec<i64> = q.iter().map(|&x| x - q_mid).collect();
    let coef = hb_forward(&centered, levels);

    let mut exponents = vec![0u8; levels as usize + 1];
    for (i, &c) in coef.iter().enumerate() {
        let e = &mut exponents[level_of(i, levels)];
        *e = (*e).max(bit_width(c.unsigned_abs()) as u8);
    }
    let meta = BitplaneMeta {
        n,
        levels,
        shift,
        q_min,
        q_max,
        rounded,
        exponents,
    };

    let planes = meta.planes();
    if planes == 0 {
        // All coefficients are zero: the midpoint start is already exact.
        return Ok(Encoded {
            segments: vec![Segment {
                id: 0,
                payload: plane_payload(&meta, &coef, 0),
                nominal_bound: meta.bound_after(0),
            }],
            metadata: meta.encode(),
        });
    }
    let segments = (0..planes)
        .map(|k| Segment {
            id: k,
            payload: plane_payload(&meta, &coef, k),
            nominal_bound: meta.bound_after(k + 1),
        })
        .collect();
    Ok(Encoded {
        segments,
        metadata: meta.encode(),
    })
}

/// Bits of each level's section in plane `k`.
fn section_bits(meta: &BitplaneMeta, sizes: &[usize], k: usize) -> Vec<u64> {
    meta.exponents
        .iter()
        .zip(sizes)
        .map(|(&e, &size)| {
            if k < e as usize {
                size as u64 * if k == 0 { 2 } else { 1 }
            } else {
                0
            }
        })
        .collect()
}

fn plane_payload(meta: &BitplaneMeta, coef: &[i64], k: usize) -> Vec<u8> {
    let sizes = level_sizes(meta.n, meta.levels);
    let bits = section_bits(meta, &sizes, k);
    let total: u64 = bits.iter().sum();
    let mut out = Vec::with_capacity(HEADER_BYTES + 8 * bits.len() + total.div_ceil(8) as usize);
    out.extend_from_slice(&(bits.len() as u32).to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    out.extend_from_slice(&(HEADER_BYTES as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for b in &bits {
        out.extend_from_slice(&b.to_le_bytes());
    }
    let mut w = BitWriter::with_capacity_bits(total as usize);
    for (l, &e) in meta.exponents.iter().enumerate() {
        let e = e as usize;
        if k >= e {
            continue;
        }
        let bit = e - 1 - k;
        for i in level_indices(meta.n, meta.levels, l) {
            w.write_bit((coef[i].unsigned_abs() >> bit) & 1 == 1);
        }
        if k == 0 {
            for i in level_indices(meta.n, meta.levels, l) {
                w.write_bit(coef[i] < 0);
            }
        }
    }
    debug_assert_eq!(w.bit_len() as u64, total);
    out.extend_from_slice(&w.finish());
    out
}

/// Incremental bitplane decoder.
pub struct BitplaneDecoder {
    meta: BitplaneMeta,
    sizes: Vec<usize>,
    magnitudes: Vec<u64>,
    negative: Vec<bool>,
    planes: usize,
}

impl BitplaneDecoder {
    pub fn new(metadata: &[u8], len: usize) -> Result<Self> {
        let meta = BitplaneMeta::decode(metadata)?;
        if meta.n != len {
            return Err(Error::CorruptPayload(format!(
                "bitplane metadata is for {} values, store expects {len}",
                meta.n
            )));
        }
        Ok(BitplaneDecoder {
            sizes: level_sizes(meta.n, meta.levels),
            magnitudes: vec![0; len],
            negative: vec![false; len],
            planes: 0,
            meta,
        })
    }

    pub fn meta(&self) -> &BitplaneMeta {
        &self.meta
    }

    pub fn planes_applied(&self) -> usize {
        self.planes
    }

    /// Current coefficient estimates (low bits truncated).
    pub fn coefficients(&self) -> Vec<i64> {
        let levels = self.meta.levels;
        (0..self.meta.n)
            .map(|i| {
                let e = self.meta.exponents[level_of(i, levels)] as usize;
                let known = self.planes.min(e);
                let mag = (self.magnitudes[i] << (e - known)) as i64;
                if self.negative[i] {
                    -mag
                } else {
                    mag
                }
            })
            .collect()
    }
}

impl SegmentDecoder for BitplaneDecoder {
    fn apply(&mut self, id: usize, payload: &[u8]) -> Result<()> {
        let planes = self.meta.planes();
        if planes == 0 {
            return if id == 0 && payload.len() == HEADER_BYTES + 8 * self.sizes.len() {
                Ok(())
            } else {
                Err(Error::CorruptPayload(format!(
                    "unexpected bitplane segment {id}"
                )))
            };
        }
        if id != self.planes || id >= planes {
            return Err(Error::CorruptPayload(format!(
                "bitplane segment {id} applied after {} planes",
                self.planes
            )));
        }
        let mut r = LeReader::new(payload, "bitplane segment header");
        let level_count = r.u32()? as usize;
        let plane = r.u32()? as usize;
        let table_offset = r.u32()? as usize;
        let _flags = r.u32()?;
        if level_count != self.sizes.len() || plane != id || table_offset != HEADER_BYTES {
            return Err(Error::CorruptPayload(format!(
                "bitplane segment {id} header does not match metadata"
            )));
        }
        let expected = section_bits(&self.meta, &self.sizes, id);
        for (l, &want) in expected.iter().enumerate() {
            let got = r.u64()?;
            if got != want {
                return Err(Error::CorruptPayload(format!(
                    "level {l} of plane {id} has {got} bits, expected {want}"
                )));
            }
        }
        let total: u64 = expected.iter().sum();
        let body = r.rest();
        if body.len() as u64 != total.div_ceil(8) {
            return Err(Error::CorruptPayload(format!(
                "plane {id} body has {} bytes, expected {}",
                body.len(),
                total.div_ceil(8)
            )));
        }
        let mut bits = BitReader::new(body);
        let (n, levels) = (self.meta.n, self.meta.levels);
        for (l, &e) in self.meta.exponents.iter().enumerate() {
            if id >= e as usize {
                continue;
            }
            for i in level_indices(n, levels, l) {
                self.magnitudes[i] = (self.magnitudes[i] << 1) | bits.read_bit()? as u64;
            }
            if id == 0 {
                for i in level_indices(n, levels, l) {
                    self.negative[i] = bits.read_bit()?;
                }
            }
        }
        self.planes += 1;
        Ok(())
    }

    fn values(&self) -> Vec<f64> {
        let centered = hb_inverse(&self.coefficients(), self.meta.levels);
        let mid = self.meta.q_mid();
        let shift = self.meta.shift;
        centered
            .into_iter()
            .map(|c| {
                // The data lie in [q_min, q_max], so clamping never hurts and
                // keeps the integer exactly representable.
                let q = (c + mid).clamp(self.meta.q_min, self.meta.q_max);
                ldexp(q as f64, -shift)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decode_prefix(enc: &Encoded, b: usize) -> Vec<f64> {
        let mut d = BitplaneDecoder::new(
            &enc.metadata,
            BitplaneMeta::decode(&enc.metadata).unwrap().n,
        )
        .unwrap();
        for s in &enc.segments[..b] {
            d.apply(s.id, &s.payload).unwrap();
        }
        d.values()
    }

    fn linf(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn exponent_above_is_strict() {
        assert_eq!(exponent_above(1.0), 1);
        assert_eq!(exponent_above(0.99), 0);
        assert_eq!(exponent_above(7.0), 3);
        assert_eq!(exponent_above(8.0), 4);
        assert_eq!(exponent_above(f64::from_bits(1)), -1073);
    }

    #[test]
    fn ldexp_extremes() {
        assert_eq!(ldexp(1.0, 1500), f64::INFINITY);
        assert_eq!(ldexp(3.0, -2), 0.75);
        assert_eq!(ldexp(ldexp(1.5, -1060), 1060), 1.5);
        assert_eq!(ldexp(ldexp(1.5, 1020), -1020), 1.5);
    }

    #[test]
    fn every_prefix_meets_its_bound() {
        let values: Vec<f64> = (0..1000)
            .map(|i| {
                let x = i as f64 / 1000.0;
                (7.0 * x).sin() * 3.0 + (31.0 * x).cos() * 0.2 + 5.0
            })
            .collect();
        let enc = encode(&values, &BitplaneConfig::default()).unwrap();
        let mut prev = f64::INFINITY;
        for (k, seg) in enc.segments.iter().enumerate() {
            let err = linf(&decode_prefix(&enc, k + 1), &values);
            assert!(
                err <= seg.nominal_bound,
                "plane {k}: {err} > {}",
                seg.nominal_bound
            );
            assert!(seg.nominal_bound < prev);
            prev = seg.nominal_bound;
        }
        let meta = BitplaneMeta::decode(&enc.metadata).unwrap();
        let full = decode_prefix(&enc, enc.segments.len());
        assert!(linf(&full, &values) <= ldexp(0.5, -meta.shift));
        assert_eq!(prev, meta.bound_after(meta.planes()));
    }

    #[test]
    fn dyadic_data_is_lossless() {
        let values: Vec<f64> = (0..300)
            .map(|i| ((i * 37) % 101) as f64 * 0.125 - 4.0)
            .collect();
        let enc = encode(&values, &BitplaneConfig::default()).unwrap();
        assert_eq!(enc.segments.last().unwrap().nominal_bound, 0.0);
        assert_eq!(decode_prefix(&enc, enc.segments.len()), values);
    }

    #[test]
    fn zero_array_single_empty_segment() {
        let enc = encode(&[0.0; 10], &BitplaneConfig::default()).unwrap();
        assert_eq!(enc.segments.len(), 1);
        assert_eq!(enc.segments[0].nominal_bound, 0.0);
        assert_eq!(decode_prefix(&enc, 1), vec![0.0; 10]);
    }

    #[test]
    fn corrupt_payloads_rejected() {
        let values: Vec<f64> = (0..100).map(|i| (i as f64).sqrt()).collect();
        let enc = encode(&values, &BitplaneConfig::default()).unwrap();
        let mut d = BitplaneDecoder::new(&enc.metadata, 100).unwrap();
        let mut short = enc.segments[0].payload.clone();
        short.pop();
        assert!(d.apply(0, &short).is_err());
        assert!(d.apply(1, &enc.segments[1].payload).is_err());
        assert!(BitplaneDecoder::new(&enc.metadata, 99).is_err());
        d.apply(0, &enc.segments[0].payload).unwrap();
        assert!(d.apply(0, &enc.segments[0].payload).is_err());
    }

    #[test]
    fn bound_halves_per_plane() {
        let meta = BitplaneMeta {
            n: 8,
            levels: 0,
            shift: 0,
            q_min: 0,
            q_max: 7,
            rounded: false,
            exponents: vec![3],
        };
        assert_eq!(meta.bound_after(2), 1.0 * GUARD);
        assert_eq!(meta.bound_after(1), 3.0 * GUARD);
        assert_eq!(meta.bound_after(3), 0.0);
    }
}
