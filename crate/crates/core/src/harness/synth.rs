use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::VariableData;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// `x0, x1, x2`: sums of random sinusoids; `x2` lies in `[1, 3]`.
    SinusoidMix,
    /// `x0, x1, x2`: box-filtered white noise; `x2` lies in `[1, 3]`.
    SmoothedNoise,
    /// `Vx, Vy, Vz`: sinusoid mixes sharing one contiguous patch of exact
    /// zeros.
    ZeroPatchVelocity,
}

impl SynthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::SinusoidMix => "sinusoid-mix",
            SynthKind::SmoothedNoise => "smoothed-noise",
            SynthKind::ZeroPatchVelocity => "zero-patch-velocity",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SynthKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinusoid-mix" => Ok(SynthKind::SinusoidMix),
            "smoothed-noise" => Ok(SynthKind::SmoothedNoise),
            "zero-patch-velocity" => Ok(SynthKind::ZeroPatchVelocity),
            other => Err(Error::InvalidInput(format!(
                "unknown synthetic kind `{other}` \
                 (sinusoid-mix, smoothed-noise or zero-patch-velocity)"
            ))),
        }
    }
}

/// Fraction of points in the zero patch by default.
pub const DEFAULT_ZERO_FRACTION: f64 = 0.1;

fn sinusoid_mix(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let comps: Vec<(f64, f64, f64)> = (0..6)
        .map(|k| {
            let k = k as f64 + 1.0;
            let amp = rng.random_range(0.2..1.0) / k;
            let freq = rng.random_range(0.5..4.0) * k;
            let phase = rng.random_range(0.0..TAU);
            (amp, freq, phase)
        })
        .collect();
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            comps
                .iter()
                .map(|(a, f, p)| a * (TAU * f * t + p).sin())
                .sum()
        })
        .collect()
}

fn box_filter(x: &[f64], half: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in x.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn smoothed_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let half = (n / 256).clamp(2, 64);
    box_filter(&box_filter(&noise, half), half)
}

/// Scales `x` so that `max |x| == 1` (unless `x` is all zero).
fn normalize(mut x: Vec<f64>) -> Vec<f64> {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v /= m);
    }
    x
}

fn fields(
    names: [&str; 3],
    scales: [f64; 3],
    mut make: impl FnMut() -> Vec<f64>,
) -> Result<Vec<VariableData>> {
    names
        .iter()
        .zip(scales)
        .enumerate()
        .map(|(k, (name, scale))| {
            let base = normalize(make());
            let values = if k == 2 && name.starts_with('x') {
                base.iter().map(|v| 2.0 + v).collect()
            } else {
                base.iter().map(|v| scale * v).collect()
            };
            VariableData::new(*name, values)
        })
        .collect()
}

/// Deterministic synthetic fields of `n` points.
pub fn synth(kind: SynthKind, n: usize, seed: u64) -> Result<Vec<VariableData>> {
    synth_with(kind, n, seed, DEFAULT_ZERO_FRACTION)
}

/// Like [`synth`], with the zero-patch fraction for
/// [`SynthKind::ZeroPatchVelocity`].
pub fn synth_with(
    kind: SynthKind,
    n: usize,
    seed: u64,
    zero_fraction: f64,
) -> Result<Vec<VariableData>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "synthetic data needs n >= 2, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&zero_fraction) {
        return Err(Error::InvalidInput(format!(
            "zero fraction {zero_fraction} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SynthKind::SinusoidMix => fields(["x0", "x1", "x2"], [50.0, 30.0, 1.0], || {
            sinusoid_mix(&mut rng, n)
        }),
        SynthKind::SmoothedNoise => fields(["x0", "x1", "x2"], [50.0, 30.0, 1.0], || {
            smoothed_noise(&mut rng, n)
        }),
        SynthKind::ZeroPatchVelocity => {
            let len = (zero_fraction * n as f64).round() as usize;
            let start = rng.random_range(0..=n - len);
            let vars = fields(["Vx", "Vy", "Vz"], [120.0, 80.0, 40.0], || {
                sinusoid_mix(&mut rng, n)
            })?;
            vars.into_iter()
                .map(|v| {
                    let name = v.name().to_string();
                    let mut values = v.into_values();
                    values[start..start + len].iter_mut().for_each(|x| *x = 0.0);
                    VariableData::new(name, values)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        for kind in [
            SynthKind::SinusoidMix,
            SynthKind::SmoothedNoise,
            SynthKind::ZeroPatchVelocity,
        ] {
            assert_eq!(synth(kind, 1000, 7).unwrap(), synth(kind, 1000, 7).unwrap());
            assert_ne!(synth(kind, 1000, 7).unwrap(), synth(kind, 1000, 8).unwrap());
        }
    }

    #[test]
    fn shapes_and_ranges() {
        let v = synth(SynthKind::SinusoidMix, 5000, 1).unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|x| x.value_range() > 0.0 && x.len() == 5000));
        assert!(v[2].values().iter().all(|&x| (1.0..=3.0).contains(&x)));
        let v = synth(SynthKind::SmoothedNoise, 5000, 1).unwrap();
        assert!(v[2].values().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn zero_patch_fraction() {
        let n = 10_000;
        for frac in [0.0, 0.05, 0.1, 0.333] {
            let v = synth_with(SynthKind::ZeroPatchVelocity, n, 3, frac).unwrap();
            let zeros = (0..n)
                .filter(|&i| v.iter().all(|x| x.values()[i] == 0.0))
                .count();
            let want = frac * n as f64;
            assert!((zeros as f64 - want).abs() <= 1.0, "{zeros} vs {want}");
            // One contiguous patch.
            let idx: Vec<_> = (0..n).filter(|&i| v[0].values()[i] == 0.0).collect();
            if let (Some(a), Some(b)) = (idx.first(), idx.last()) {
                assert_eq!(b - a + 1, idx.len());
            }
        }
        assert!(synth(SynthKind::SinusoidMix, 1, 0).is_err());
    }
}
