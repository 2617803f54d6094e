mod common;

use common::{build_store, check_prefixes, config, linf, smooth_field};
use proptest::prelude::*;
use proqoi_core::bitplane::{hb_forward, hb_inverse, level_of, BitplaneConfig};
use proqoi_core::snapshot::{dequantize, quantize, SnapshotLadder};
use proqoi_core::{CodecConfig, CodecKind, OutlierMask, RetrievalState, VariableData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn var(name: &str, values: Vec<f64>) -> VariableData {
    VariableData::new(name, values).unwrap()
}

fn noisy(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| rng.random_range(-1.0..1.0) * scale)
        .collect()
}

#[test]
fn every_prefix_within_nominal_bound() {
    let arrays = [
        vec![3.5],
        vec![-1.0, 2.0],
        smooth_field(17, 1),
        noisy(300, 2, 1e-3),
        smooth_field(4097, 3),
        noisy(5000, 4, 1e8),
        (0..2000).map(|i| (i as f64 * 0.01).exp()).collect(),
        smooth_field(30_000, 5),
    ];
    for kind in CodecKind::ALL {
        for (k, values) in arrays.iter().enumerate() {
            let dir = tempfile::tempdir().unwrap();
            let v = var("x", values.clone());
            let store = build_store(dir.path(), std::slice::from_ref(&v), &config(kind), None);
            let last = check_prefixes(&store, &v).unwrap_or_else(|e| panic!("{kind} #{k}: {e}"));
            let rec = store.variable("x").unwrap();
            let floor = rec.segments.last().unwrap().nominal_bound;
            assert!(last <= floor, "{kind} #{k}");
            let bounds: Vec<f64> = rec.segments.iter().map(|s| s.nominal_bound).collect();
            assert!(
                bounds.windows(2).all(|w| w[1] < w[0]),
                "{kind} #{k}: {bounds:?}"
            );
        }
    }
}

#[test]
fn bitplane_full_retrieval_reaches_lossless_threshold() {
    for seed in 0..4 {
        let values = smooth_field(10_000, seed);
        let dir = tempfile::tempdir().unwrap();
        let v = var("x", values.clone());
        let store = build_store(
            dir.path(),
            std::slice::from_ref(&v),
            &config(CodecKind::Bitplane),
            None,
        );
        let rec = store.variable("x").unwrap();
        let max_abs = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let levels = proqoi_core::bitplane::default_levels(values.len()).max(1) as f64;
        let threshold = 2f64.powi(-52) * 2f64.powi(max_abs.log2().ceil() as i32) * levels;
        let last = rec.segments.last().unwrap().nominal_bound;
        assert!(last <= threshold, "{last} > {threshold}");
        let mut state = RetrievalState::open(&store, "x").unwrap();
        state.reconstruct(&store, 0.0).unwrap();
        assert!(state.at_full_fidelity());
        assert!(linf(state.values(), &values) <= last);
    }
}

#[test]
fn bitplane_exhaustive_eight_values() {
    let cfg = CodecConfig {
        bitplane: BitplaneConfig { levels: Some(0) },
        ..CodecConfig::new(CodecKind::Bitplane)
    };
    let mut arrays: Vec<Vec<f64>> = vec![(0..8).map(f64::from).collect()];
    for a in 0..8 {
        for b in 0..8 {
            for c in 0..8 {
                arrays.push(vec![f64::from(a), f64::from(b), f64::from(c)]);
            }
        }
    }
    for values in arrays {
        let dir = tempfile::tempdir().unwrap();
        let v = var("x", values.clone());
        let store = build_store(dir.path(), std::slice::from_ref(&v), &cfg, None);
        check_prefixes(&store, &v).unwrap();
        let rec = store.variable("x").unwrap();
        if rec.segments.len() >= 2 {
            // Two planes of a three-bit magnitude leave at most 2 units.
            assert!(rec.segments[1].nominal_bound <= 2.0, "{values:?}");
        }
        let mut state = RetrievalState::open(&store, "x").unwrap();
        state.reconstruct(&store, 0.0).unwrap();
        assert_eq!(state.values(), &values[..]);
    }
}

#[test]
fn hb_error_stays_within_level_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for &(n, levels) in &[(1000usize, 4u32), (257, 8), (64, 1), (5000, 6)] {
        let values = smooth_field(n, 2);
        let coef = hb_forward(&values, levels);
        let back = hb_inverse(&coef, levels);
        let scale = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(linf(&back, &values) <= 4.0 * f64::EPSILON * scale * f64::from(levels + 1));

        let e: Vec<f64> = (0..=levels).map(|_| rng.random_range(0.0..1e-3)).collect();
        let perturbed: Vec<f64> = coef
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let l = level_of(i, levels);
                c + rng.random_range(-e[l]..=e[l])
            })
            .collect();
        let recon = hb_inverse(&perturbed, levels);
        let total: f64 = e.iter().sum();
        let err = linf(&recon, &back);
        assert!(
            err <= total * (1.0 + 1e-9) + 1e-12 * scale,
            "{err} > {total}"
        );
    }
}

#[test]
fn hb_linear_ramp_has_zero_details() {
    let ramp: Vec<f64> = (0..5).map(f64::from).collect();
    let coef = hb_forward(&ramp, 2);
    for (i, c) in coef.iter().enumerate() {
        if level_of(i, 2) > 0 {
            assert_eq!(*c, 0.0, "index {i}");
        }
    }
    assert_eq!(hb_forward(&[4.25], 0), vec![4.25]);
}

#[test]
fn constant_and_masked_inputs() {
    for kind in CodecKind::ALL {
        let dir = tempfile::tempdir().unwrap();
        let v = var("c", vec![5.0; 4]);
        let store = build_store(dir.path(), std::slice::from_ref(&v), &config(kind), None);
        let rec = store.variable("c").unwrap();
        assert_eq!(rec.segments.len(), 1, "{kind}");
        assert_eq!(rec.segments[0].nominal_bound, 0.0);
        let mut s = RetrievalState::open(&store, "c").unwrap();
        assert_eq!(s.values(), &[5.0; 4]);
        s.reconstruct(&store, 0.0).unwrap();
        assert_eq!(s.values(), &[5.0; 4]);

        let dir = tempfile::tempdir().unwrap();
        let z = var("z", vec![0.0; 6]);
        let mask = OutlierMask::from_fn(6, |_| true);
        let store = build_store(
            dir.path(),
            std::slice::from_ref(&z),
            &config(kind),
            Some(&mask),
        );
        let rec = store.variable("z").unwrap();
        assert!(rec.segments.is_empty());
        assert_eq!(rec.mask.as_ref().unwrap().masked, 6);
        let s = RetrievalState::open(&store, "z").unwrap();
        assert_eq!(s.values(), &[0.0; 6]);
        assert!(s.at_full_fidelity());
    }
}

#[test]
fn masked_points_exact_at_every_prefix() {
    let n = 3000;
    let base = smooth_field(n, 4);
    let values: Vec<f64> = base
        .iter()
        .enumerate()
        .map(|(i, v)| if (1000..1400).contains(&i) { 0.0 } else { *v })
        .collect();
    let v = var("Vx", values);
    let mask = OutlierMask::from_fn(n, |i| (1000..1400).contains(&i));
    for kind in CodecKind::ALL {
        let dir = tempfile::tempdir().unwrap();
        let store = build_store(
            dir.path(),
            std::slice::from_ref(&v),
            &config(kind),
            Some(&mask),
        );
        // check_prefixes treats any masked mismatch as an infinite error.
        check_prefixes(&store, &v).unwrap();
    }
}

#[test]
fn incremental_bytes_match_one_shot() {
    let values = smooth_field(20_000, 6);
    let range = 2.0 * values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for kind in CodecKind::ALL {
        let dir = tempfile::tempdir().unwrap();
        let v = var("x", values.clone());
        let store = build_store(dir.path(), std::slice::from_ref(&v), &config(kind), None);
        let mut inc = RetrievalState::open(&store, "x").unwrap();
        inc.reconstruct(&store, 1e-2 * range).unwrap();
        let after_first = inc.bytes_read();
        inc.reconstruct(&store, 1e-2 * range).unwrap();
        assert_eq!(inc.bytes_read(), after_first, "{kind}: idempotent");
        inc.reconstruct(&store, 1e-4 * range).unwrap();
        let mut one = RetrievalState::open(&store, "x").unwrap();
        one.reconstruct(&store, 1e-4 * range).unwrap();
        assert_eq!(inc.achieved(), one.achieved());
        if kind.is_independent() {
            let rec = store.variable("x").unwrap();
            let picked: u64 = inc.consumed().iter().map(|&i| rec.segments[i].bytes).sum();
            assert_eq!(inc.bytes_read(), picked);
            assert!(inc.bytes_read() > one.bytes_read());
        } else {
            assert_eq!(inc.bytes_read(), one.bytes_read(), "{kind}");
        }
        assert_eq!(inc.values(), one.values(), "{kind}");
    }
}

#[test]
fn independent_snapshots_selection_and_staircase() {
    let values = smooth_field(5000, 7);
    let dir = tempfile::tempdir().unwrap();
    let v = var("x", values);
    let store = build_store(
        dir.path(),
        std::slice::from_ref(&v),
        &config(CodecKind::Snapshot),
        None,
    );
    let rec = store.variable("x").unwrap();
    let range = rec.value_range;
    let state = RetrievalState::open(&store, "x").unwrap();
    // Between the third and fourth rung the fourth is picked.
    assert_eq!(state.plan(3e-4 * range).ids, vec![3]);
    assert_eq!(state.plan(1e-1 * range).ids, vec![0]);
    assert!(state.plan(1e-12 * range).exhausted);
    let a = state.plan(9.9e-3 * range).ids;
    let b = state.plan(1.1e-3 * range).ids;
    assert_eq!(a, b);
}

#[test]
fn ladder_parsing() {
    let l: SnapshotLadder = "1e-1..1e-10".parse().unwrap();
    assert_eq!(l.len(), 10);
    assert_eq!(l.select(3e-4), Some(4));
    assert_eq!(l.select(1e-1), Some(1));
    assert_eq!(l.select(1e-12), None);
    let c: SnapshotLadder = "0.1,0.01".parse().unwrap();
    assert_eq!(c.relative(), &[0.1, 0.01]);
    assert!("0.01,0.1".parse::<SnapshotLadder>().is_err());
}

#[test]
fn quantizer_example_and_bulk() {
    let block = quantize(&[0.0, 0.30], 0.05).unwrap();
    assert_eq!(block.codes[1], 3);
    assert!((dequantize(&block)[1] - 0.30).abs() <= 0.05);
    let values = noisy(1_000_000, 8, 50.0);
    let block = quantize(&values, 1e-3).unwrap();
    assert!(linf(&dequantize(&block), &values) <= 1e-3);
    let wide = quantize(&values, 1e3).unwrap();
    assert!(wide.codes.iter().all(|&c| c == wide.codes[0]));
    assert!(linf(&dequantize(&wide), &values) <= 1e3);
}

fn finite_values() -> impl Strategy<Value = Vec<f64>> {
    let element = prop_oneof![-1e3f64..1e3, Just(0.0), (-1e12f64..1e12), (-1e-9f64..1e-9),];
    prop::collection::vec(element, 1..120)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prefixes_within_nominal_on_random_arrays(values in finite_values(), k in 0usize..3) {
        let kind = CodecKind::ALL[k];
        let dir = tempfile::tempdir().unwrap();
        let v = var("x", values);
        let store = build_store(dir.path(), std::slice::from_ref(&v), &config(kind), None);
        prop_assert!(check_prefixes(&store, &v).is_ok(), "{:?}", check_prefixes(&store, &v));
    }

    #[test]
    fn plan_is_pure_and_matches_reconstruct(values in finite_values(), t in 1e-12f64..1.0, k in 0usize..3) {
        let kind = CodecKind::ALL[k];
        let dir = tempfile::tempdir().unwrap();
        let v = var("x", values);
        let store = build_store(dir.path(), std::slice::from_ref(&v), &config(kind), None);
        let target = t * v.value_range().max(1e-300);
        let mut s = RetrievalState::open(&store, "x").unwrap();
        let plan = s.plan(target);
        prop_assert_eq!(&plan, &s.plan(target));
        let done = s.reconstruct(&store, target).unwrap();
        prop_assert_eq!(&plan, &done);
        let rec = store.variable("x").unwrap();
        let planned: u64 = plan.ids.iter().map(|&i| rec.segments[i].bytes).sum();
        prop_assert_eq!(s.bytes_read(), planned);
    }
}
