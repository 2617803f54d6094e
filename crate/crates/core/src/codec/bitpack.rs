//! LSB-first bit packing and little-endian header helpers.

use crate::error::{Error, Result};

/// Appends values of arbitrary width (0..=64 bits) to a byte buffer,
/// least significant bit first.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    filled: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity_bits(bits: usize) -> Self {
        BitWriter {
            bytes: Vec::with_capacity(bits.div_ceil(8)),
            acc: 0,
            filled: 0,
        }
    }

    /// Writes the low `width` bits of `value`.
    pub fn write(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        if width == 0 {
            return;
        }
        let value = if width == 64 {
            value
        } else {
            value & ((1u64 << width) - 1)
        };
        let room = 64 - self.filled;
        if width < room {
            self.acc |= value << self.filled;
            self.filled += width;
        } else {
            // Fill the accumulator, flush it, keep the remainder.
            self.acc |= value.checked_shl(self.filled).unwrap_or(0);
            self.bytes.extend_from_slice(&self.acc.to_le_bytes());
            let used = room;
            self.acc = if used == 64 { 0 } else { value >> used };
            self.filled = width - used;
        }
    }

    pub fn write_bit(&mut self, bit: bool) {
        self.write(bit as u64, 1);
    }

    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8 + self.filled as usize
    }

    pub fn finish(mut self) -> Vec<u8> {
        let tail = self.filled.div_ceil(8) as usize;
        self.bytes
            .extend_from_slice(&self.acc.to_le_bytes()[..tail]);
        self.bytes
    }
}

/// Reads values written by [`BitWriter`].
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    pub fn remaining_bits(&self) -> usize {
        self.bytes.len() * 8 - self.pos
    }

    pub fn read(&mut self, width: u32) -> Result<u64> {
        debug_assert!(width <= 64);
        if width as usize > self.remaining_bits() {
            return Err(Error::CorruptPayload(format!(
                "bit stream ends after {} bits, {} more requested",
                self.pos, width
            )));
        }
        let mut out = 0u64;
        let mut got = 0u32;
        while got < width {
            let byte = self.bytes[self.pos / 8];
            let offset = (self.pos % 8) as u32;
            let take = (8 - offset).min(width - got);
            let chunk = (byte as u64 >> offset) & ((1u64 << take) - 1);
            out |= chunk << got;
            got += take;
            self.pos += take as usize;
        }
        Ok(out)
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        if self.pos >= self.bytes.len() * 8 {
            return Err(Error::CorruptPayload("bit stream exhausted".into()));
        }
        let bit = (self.bytes[self.pos / 8] >> (self.pos % 8)) & 1;
        self.pos += 1;
        Ok(bit == 1)
    }
}

/// Number of bits needed to represent `v` (0 for 0).
pub fn bit_width(v: u64) -> u32 {
    64 - v.leading_zeros()
}

/// Little-endian cursor over a fixed header.
pub(crate) struct LeReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> LeReader<'a> {
    pub fn new(bytes: &'a [u8], what: &'static str) -> Self {
        LeReader {
            bytes,
            pos: 0,
            what,
        }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::CorruptPayload(format!("{} truncated at byte {}", self.what, self.pos))
        })?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }
    pub fn u32(&mut self) -> Result<u32> {
        self.take().map(u32::from_le_bytes)
    }
    pub fn u64(&mut self) -> Result<u64> {
        self.take().map(u64::from_le_bytes)
    }
    pub fn i32(&mut self) -> Result<i32> {
        self.take().map(i32::from_le_bytes)
    }
    pub fn i64(&mut self) -> Result<i64> {
        self.take().map(i64::from_le_bytes)
    }
    pub fn f64(&mut self) -> Result<f64> {
        self.take().map(f64::from_le_bytes)
    }

    pub fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::CorruptPayload(format!(
                "{}: {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )))
        }
    }
}
