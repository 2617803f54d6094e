use crate::codec::bitpack::bit_width;
use crate::error::{Error, Result};

/// Uniform scalar quantization with bins of width `2 * eps` starting at
/// `offset`. `eps` is the half-width actually used, which may sit a few ulps
/// under the requested bound.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBlock {
    pub eps: f64,
    pub offset: f64,
    pub bit_width: u32,
    pub codes: Vec<u64>,
}

impl QuantizedBlock {
    #[inline]
    fn value(&self, code: u64) -> f64 {
        self.offset + code as f64 * (2.0 * self.eps)
    }
}

pub fn dequantize(block: &QuantizedBlock) -> Vec<f64> {
    block.codes.iter().map(|&c| block.value(c)).collect()
}

/// Adds the dequantized block onto `recon`.
pub(crate) fn accumulate(recon: &mut [f64], block: &QuantizedBlock) {
    for (r, &c) in recon.iter_mut().zip(&block.codes) {
        *r += block.value(c);
    }
}

/// Quantizes `values` with offset `min(values)` so that every dequantized
/// value is within `eps`.
pub fn quantize(values: &[f64], eps: f64) -> Result<QuantizedBlock> {
    match quantize_against(values, None, eps)? {
        Some((block, _)) => Ok(block),
        None => Err(Error::InvalidInput(format!(
            "error bound {eps} is below the floating-point precision of the data"
        ))),
    }
}

/// Quantizes the residual `x - base` so that `base + dequantized` is within
/// `eps` of `x`, checked with exactly the arithmetic the decoder uses.
/// Returns the block and the new reconstruction, or `None` when `eps` is
/// too small for the precision of the data.
pub(crate) fn quantize_against(
    x: &[f64],
    base: Option<&[f64]>,
    eps: f64,
) -> Result<Option<(QuantizedBlock, Vec<f64>)>> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidInput(format!(
            "quantizer bound must be positive, got {eps}"
        )));
    }
    if let Some(b) = base {
        assert_eq!(b.len(), x.len(), "base and data lengths differ");
    }
    let residual: Vec<f64> = match base {
        None => x.to_vec(),
        Some(b) => x.iter().zip(b).map(|(v, r)| v - r).collect(),
    };
    let (lo, hi) = crate::codec::min_max(residual.iter().copied()).unwrap_or((0.0, 0.0));
    let span = (hi - lo) / (2.0 * eps);
    // Codes must fit in 63 bits.
    if !(span.round() < (1u64 << 63) as f64) {
        let bits = (span + 1.0).log2().ceil().min(u32::MAX as f64) as u32;
        return Err(Error::QuantizerOverflow { bits: bits.max(64) });
    }
    // Points on a bin midpoint can miss by a rounding error; a second pass
    // with bins narrowed by a few ulps of the data magnitude absorbs that.
    let magnitude = x
        .iter()
        .chain(&residual)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let narrowed = eps - 8.0 * f64::EPSILON * 2.0 * magnitude;
    for half in [eps, narrowed] {
        if !(half > 0.5 * eps) {
            break;
        }
        if let Some(out) = quantize_with(x, base, &residual, lo, eps, half)? {
            return Ok(Some(out));
        }
    }
    Ok(None)
}

fn quantize_with(
    x: &[f64],
    base: Option<&[f64]>,
    residual: &[f64],
    lo: f64,
    eps: f64,
    half: f64,
) -> Result<Option<(QuantizedBlock, Vec<f64>)>> {
    let width = 2.0 * half;
    let mut block = QuantizedBlock {
        eps: half,
        offset: lo,
        bit_width: 0,
        codes: Vec::with_capacity(x.len()),
    };
    let mut recon = Vec::with_capacity(x.len());
    let mut max_code = 0u64;
    for (i, (&xi, &ri)) in x.iter().zip(residual).enumerate() {
        let guess = ((ri - lo) / width).round() as u64;
        let at = |code: u64| match base {
            None => block.value(code),
            Some(b) => b[i] + block.value(code),
        };
        let candidates = [Some(guess), guess.checked_sub(1), guess.checked_add(1)];
        let Some((code, value)) = candidates
            .into_iter()
            .flatten()
            .map(|c| (c, at(c)))
            .find(|&(_, v)| (xi - v).abs() <= eps)
        else {
            return Ok(None);
        };
        max_code = max_code.max(code);
        block.codes.push(code);
        recon.push(value);
    }
    block.bit_width = bit_width(max_code);
    if block.bit_width > 63 {
        return Err(Error::QuantizerOverflow {
            bits: block.bit_width,
        });
    }
    Ok(Some((block, recon)))
}
