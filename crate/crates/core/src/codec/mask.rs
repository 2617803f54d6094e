use crate::error::{Error, Result};

use super::VariableData;

/// Bitmap of points stored exactly and excluded from lossy refactoring.
///
/// Bit `i` set means point `i` is masked. The packed form is LSB-first
/// within each byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutlierMask {
    len: usize,
    bits: Vec<u8>,
}

impl OutlierMask {
    pub fn empty(len: usize) -> Self {
        OutlierMask {
            len,
            bits: vec![0; len.div_ceil(8)],
        }
    }

    pub fn from_fn(len: usize, mut masked: impl FnMut(usize) -> bool) -> Self {
        let mut m = Self::empty(len);
        for i in 0..len {
            if masked(i) {
                m.set(i, true);
            }
        }
        m
    }

    /// Parses the packed form; padding bits past `len` must be zero.
    pub fn from_bytes(len: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::CorruptPayload(format!(
                "mask for {len} points needs {} bytes, got {}",
                len.div_ceil(8),
                bytes.len()
            )));
        }
        if len % 8 != 0 {
            let pad = bytes[bytes.len() - 1] >> (len % 8);
            if pad != 0 {
                return Err(Error::CorruptPayload("mask padding bits are set".into()));
            }
        }
        Ok(OutlierMask {
            len,
            bits: bytes.to_vec(),
        })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.bits[i / 8] >> (i % 8)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, masked: bool) {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        let bit = 1u8 << (i % 8);
        if masked {
            self.bits[i / 8] |= bit;
        } else {
            self.bits[i / 8] &= !bit;
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Indices of unmasked points, in order.
    pub fn unmasked_indices(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| !self.get(i)).collect()
    }
}

/// Marks every point where `predicate` holds for the tuple of values
/// `(vars[0][i], vars[1][i], ...)`.
pub fn build_mask(
    vars: &[&VariableData],
    predicate: impl Fn(&[f64]) -> bool,
) -> Result<OutlierMask> {
    let Some(first) = vars.first() else {
        return Err(Error::InvalidInput(
            "build_mask needs at least one variable".into(),
        ));
    };
    let n = first.len();
    if let Some(v) = vars.iter().find(|v| v.len() != n) {
        return Err(Error::InvalidInput(format!(
            "variable `{}` has {} points, expected {n}",
            v.name(),
            v.len()
        )));
    }
    let mut tuple = vec![0.0; vars.len()];
    Ok(OutlierMask::from_fn(n, |i| {
        for (slot, v) in tuple.iter_mut().zip(vars) {
            *slot = v.values()[i];
        }
        predicate(&tuple)
    }))
}

/// Masks points where every variable equals `constant` exactly.
pub fn constant_mask(vars: &[&VariableData], constant: f64) -> Result<OutlierMask> {
    build_mask(vars, |t| t.iter().all(|&x| x == constant))
}
