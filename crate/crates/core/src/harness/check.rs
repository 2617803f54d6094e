use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::qoi::{builtin_ge_qois, ge_closed_form};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QoiCheckReport {
    pub trials: usize,
    pub seed: u64,
    /// Largest relative deviation per built-in QoI.
    pub max_relative_deviation: BTreeMap<String, f64>,
    pub overall: f64,
}

/// Compares the built-in QoI trees with direct closed-form evaluation on
/// random states with `P` in `[1e4, 1e6]`, `D` in `[0.1, 5]` and each
/// velocity component in `[-500, 500]`.
pub fn qoi_check(trials: usize, seed: u64) -> Result<QoiCheckReport> {
    let qois = builtin_ge_qois();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: BTreeMap<String, f64> = qois.keys().map(|k| (k.to_string(), 0.0)).collect();
    for _ in 0..trials {
        let state = [
            rng.random_range(-500.0..=500.0),
            rng.random_range(-500.0..=500.0),
            rng.random_range(-500.0..=500.0),
            rng.random_range(1e4..=1e6),
            rng.random_range(0.1..=5.0),
        ];
        for (name, expr) in &qois {
            let tree = expr.eval(&state)?;
            let direct = ge_closed_form(name, &state).expect("built-in name");
            let dev = if direct == 0.0 {
                tree.abs()
            } else {
                ((tree - direct) / direct).abs()
            };
            let w = worst.get_mut(*name).expect("known name");
            *w = w.max(dev);
        }
    }
    let overall = worst.values().copied().fold(0.0, f64::max);
    Ok(QoiCheckReport {
        trials,
        seed,
        max_relative_deviation: worst,
        overall,
    })
}
