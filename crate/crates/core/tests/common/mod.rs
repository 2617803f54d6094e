#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use std::path::Path;

use proqoi_core::codec::write_store;
use proqoi_core::{
    refactor_variable, CodecConfig, CodecKind, OutlierMask, QoiExpr, RetrievalState, SegmentStore,
    VariableData,
};
use rand::Rng;
use twofloat::TwoFloat;

/// Largest `|f(x) - f(x0)|` over a grid of `n` points per axis on the box
/// `x0 ± eps`, corners included. Points are formed exactly in double-double
/// and points where `f` is undefined are skipped.
pub fn grid_sup(
    f: impl Fn(&[TwoFloat]) -> Option<TwoFloat>,
    x0: &[f64],
    eps: &[f64],
    n: usize,
) -> f64 {
    assert!(n >= 2);
    let center: Vec<TwoFloat> = x0.iter().map(|&v| TwoFloat::from(v)).collect();
    let f0 = f(&center).expect("center in domain");
    let d = x0.len();
    let total = n.pow(d as u32);
    let mut point = center.clone();
    let mut sup = 0.0f64;
    for mut idx in 0..total {
        for k in 0..d {
            let i = idx % n;
            idx /= n;
            let delta = if i + 1 == n {
                eps[k]
            } else {
                (-eps[k] + 2.0 * eps[k] * (i as f64 / (n - 1) as f64)).clamp(-eps[k], eps[k])
            };
            point[k] = TwoFloat::new_add(x0[k], delta);
        }
        if let Some(v) = f(&point) {
            sup = sup.max((v - f0).abs().hi());
        }
    }
    sup
}

/// Double-double quotient. The crate's own division is only good to about
/// one double ulp, so one Newton correction is applied.
pub fn dd_div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q = a / b;
    let residual = a - q * b;
    q + residual.hi() / b.hi()
}

/// Double-double evaluation; `None` outside the domain.
pub fn eval_dd(e: &QoiExpr, x: &[TwoFloat]) -> Option<TwoFloat> {
    Some(match e {
        QoiExpr::Var(i) => x[*i],
        QoiExpr::Const(a) => TwoFloat::from(*a),
        QoiExpr::Scale(a, c) => eval_dd(c, x)? * *a,
        QoiExpr::Sum(terms) => {
            let mut acc = TwoFloat::from(0.0);
            for (w, t) in terms {
                acc += eval_dd(t, x)? * *w;
            }
            acc
        }
        QoiExpr::Product(a, b) => eval_dd(a, x)? * eval_dd(b, x)?,
        QoiExpr::Quotient(a, b) => {
            let d = eval_dd(b, x)?;
            if d == TwoFloat::from(0.0) {
                return None;
            }
            dd_div(eval_dd(a, x)?, d)
        }
        QoiExpr::Power(c, n) => {
            let v = eval_dd(c, x)?;
            let mut acc = v;
            for _ in 1..*n {
                acc *= v;
            }
            acc
        }
        QoiExpr::Sqrt(c) => {
            let v = eval_dd(c, x)?;
            if v < TwoFloat::from(0.0) {
                return None;
            }
            v.sqrt()
        }
    })
}

/// Random expression over `vars` variables using every basis function.
pub fn random_tree<R: Rng>(rng: &mut R, depth: u32, vars: usize) -> QoiExpr {
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.85) {
            QoiExpr::var(rng.random_range(0..vars))
        } else {
            QoiExpr::constant(rng.random_range(0.5..2.0))
        };
    }
    let d = depth - 1;
    match rng.random_range(0..8) {
        0 => QoiExpr::power(random_tree(rng, d, vars), rng.random_range(1..=4)),
        1 => {
            // Keep the operand mostly positive so the point is in the domain.
            let inner = random_tree(rng, d, vars);
            let shifted = QoiExpr::sum(vec![
                (1.0, QoiExpr::power(inner, 2)),
                (1.0, QoiExpr::constant(rng.random_range(0.0..1.0))),
            ]);
            // Constant folding can reject a raw operand; fall back to the shifted one.
            let raw = random_tree(rng, d, vars);
            match rng.random_bool(0.5).then(|| QoiExpr::sqrt(raw)) {
                Some(Ok(e)) => e,
                _ => QoiExpr::sqrt(shifted).expect("non-negative operand"),
            }
        }
        2 => QoiExpr::radical(random_tree(rng, d, vars), rng.random_range(0.5..3.0)),
        3 => {
            let k = rng.random_range(2..=3);
            QoiExpr::sum(
                (0..k)
                    .map(|_| (rng.random_range(-2.0..2.0), random_tree(rng, d, vars)))
                    .collect(),
            )
        }
        4 => QoiExpr::product(random_tree(rng, d, vars), random_tree(rng, d, vars)),
        5 => {
            let (a, b) = (random_tree(rng, d, vars), random_tree(rng, d, vars));
            QoiExpr::quotient(a.clone(), b.clone()).unwrap_or_else(|_| QoiExpr::product(a, b))
        }
        6 => QoiExpr::scale(rng.random_range(-3.0..3.0), random_tree(rng, d, vars)),
        _ => QoiExpr::sub(random_tree(rng, d, vars), random_tree(rng, d, vars)),
    }
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Smooth test field of length `n`.
pub fn smooth_field(n: usize, seed: u64) -> Vec<f64> {
    let s = seed as f64;
    (0..n)
        .map(|i| {
            let t = i as f64 / n.max(2) as f64;
            (3.0 + s) * (6.3 * t + s).sin() + 0.4 * (41.0 * t * (1.0 + 0.1 * s)).cos() + s * 0.7
        })
        .collect()
}

pub fn config(kind: CodecKind) -> CodecConfig {
    CodecConfig::new(kind)
}

/// Refactors `vars` with one codec (and optional shared mask) into `dir`.
pub fn build_store(
    dir: &Path,
    vars: &[VariableData],
    config: &CodecConfig,
    mask: Option<&OutlierMask>,
) -> SegmentStore {
    let encoded: Vec<_> = vars
        .iter()
        .map(|v| refactor_variable(v, mask, 0.0, config).expect("refactor"))
        .collect();
    write_store(dir, &encoded).expect("write store");
    SegmentStore::open(dir).expect("open store")
}

/// Checks every prefix of one stored variable against its nominal bound,
/// over unmasked points. Returns the final measured error.
pub fn check_prefixes(store: &SegmentStore, var: &VariableData) -> Result<f64, String> {
    let rec = store
        .variable(var.name())
        .map_err(|e| e.to_string())?
        .clone();
    let mut state = RetrievalState::open(store, var.name()).map_err(|e| e.to_string())?;
    let mask = state.mask().cloned();
    let unmasked = |i: usize| mask.as_ref().map_or(true, |m| !m.get(i));
    let err_of = |values: &[f64]| {
        values
            .iter()
            .zip(var.values())
            .enumerate()
            .map(|(i, (a, b))| {
                if unmasked(i) {
                    (a - b).abs()
                } else if *a == *b {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    };
    let init = err_of(state.values());
    if init > state.achieved() {
        return Err(format!("initial error {init} > {}", state.achieved()));
    }
    let mut last = init;
    for seg in &rec.segments {
        state
            .reconstruct(store, seg.nominal_bound)
            .map_err(|e| e.to_string())?;
        last = err_of(state.values());
        if !(last <= seg.nominal_bound) {
            return Err(format!(
                "`{}` segment {}: error {last} > nominal {}",
                var.name(),
                seg.id,
                seg.nominal_bound
            ));
        }
        if state.achieved() > seg.nominal_bound {
            return Err(format!("segment {}: target not reached", seg.id));
        }
    }
    Ok(last)
}

pub const BASIS_RULES: [&str; 6] = [
    "power",
    "sqrt",
    "radical",
    "weighted sum",
    "product",
    "quotient",
];

fn tf(v: f64) -> TwoFloat {
    TwoFloat::from(v)
}

fn pick_eps<R: Rng>(rng: &mut R, x: f64) -> f64 {
    let rel = 10f64.powf(rng.random_range(-4.0..0.3));
    if rng.random_bool(0.2) {
        rel
    } else {
        rel * x.abs().max(1e-3)
    }
}

/// One random case of basis rule `rule` (index into [`BASIS_RULES`]):
/// `(certified bound, grid supremum)`, or `None` when the rule declines to
/// certify (unbounded), which is always sound.
pub fn rule_case<R: Rng>(rule: usize, rng: &mut R) -> Option<(f64, f64)> {
    use proqoi_core::qoi::*;
    let fin = ErrorBound::finite;
    let (bound, sup) = match rule {
        0 => {
            let n = rng.random_range(1..=5u32);
            let x = rng.random_range(-5.0..5.0);
            let e = pick_eps(rng, x);
            let b = bound_power(n, x, fin(e));
            let sup = grid_sup(|p| Some(p[0].powi(n as i32)), &[x], &[e], 10_000);
            (b, sup)
        }
        1 => {
            let x = if rng.random_bool(0.05) {
                0.0
            } else {
                rng.random_range(0.0..10.0)
            };
            let e = pick_eps(rng, x);
            let b = bound_sqrt(x, fin(e)).expect("x >= 0");
            let sup = grid_sup(
                |p| (p[0] >= tf(0.0)).then(|| p[0].sqrt()),
                &[x],
                &[e],
                10_000,
            );
            (b, sup)
        }
        2 => {
            let c = rng.random_range(-3.0..3.0);
            let x = rng.random_range(-5.0..5.0);
            let e = pick_eps(rng, x + c);
            let b = bound_radical(c, x, fin(e));
            let sup = grid_sup(
                |p| {
                    let y = p[0] + c;
                    (y != tf(0.0)).then(|| dd_div(tf(1.0), y))
                },
                &[x],
                &[e],
                10_000,
            );
            (b, sup)
        }
        3 => {
            let k = rng.random_range(1..=3);
            let w: Vec<f64> = (0..k)
                .map(|_| {
                    if rng.random_bool(0.1) {
                        0.0
                    } else {
                        rng.random_range(-4.0..4.0)
                    }
                })
                .collect();
            let x: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
            let e: Vec<f64> = x.iter().map(|&v| pick_eps(rng, v)).collect();
            let eb: Vec<ErrorBound> = e.iter().map(|&v| fin(v)).collect();
            let b = bound_weighted_sum(&w, &eb);
            let per_axis = [0, 10_000, 100, 21][k];
            let sup = grid_sup(
                |p| {
                    let mut acc = tf(0.0);
                    for (wi, pi) in w.iter().zip(p) {
                        acc += *pi * *wi;
                    }
                    Some(acc)
                },
                &x,
                &e,
                per_axis,
            );
            (b, sup)
        }
        4 => {
            let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let e = [pick_eps(rng, x[0]), pick_eps(rng, x[1])];
            let b = bound_product(x[0], fin(e[0]), x[1], fin(e[1]));
            let sup = grid_sup(|p| Some(p[0] * p[1]), &x, &e, 100);
            (b, sup)
        }
        5 => {
            let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let e = [pick_eps(rng, x[0]), pick_eps(rng, x[1])];
            let b = bound_quotient(x[0], fin(e[0]), x[1], fin(e[1]));
            let sup = grid_sup(
                |p| (p[1] != tf(0.0)).then(|| dd_div(p[0], p[1])),
                &x,
                &e,
                100,
            );
            (b, sup)
        }
        _ => panic!("no basis rule {rule}"),
    };
    bound.value().map(|b| (b, sup))
}

/// Outcome of fuzzing one random expression tree.
#[derive(Debug, Default, Clone, Copy)]
pub struct TreeFuzz {
    pub checked: usize,
    /// Perturbed points outside the expression's domain.
    pub undefined: usize,
    pub violations: usize,
    /// Largest `|actual change| / bound` seen.
    pub worst_ratio: f64,
}

/// Draws a random tree and point with a finite certified bound, then checks
/// `perturbations` in-box points (a quarter of them box corners).
pub fn fuzz_tree<R: Rng>(rng: &mut R, perturbations: usize) -> (QoiExpr, TreeFuzz) {
    use proqoi_core::PointContext;
    loop {
        let vars = rng.random_range(1..=4);
        let depth = rng.random_range(1..=5);
        let expr = random_tree(rng, depth, vars);
        let x: Vec<f64> = (0..vars)
            .map(|_| {
                let m = rng.random_range(0.2..3.0);
                if rng.random_bool(0.2) {
                    -m
                } else {
                    m
                }
            })
            .collect();
        let e: Vec<f64> = x
            .iter()
            .map(|v| {
                if rng.random_bool(0.1) {
                    0.0
                } else {
                    10f64.powf(rng.random_range(-5.0..-1.0)) * v.abs()
                }
            })
            .collect();
        let bounds = e
            .iter()
            .map(|&v| proqoi_core::ErrorBound::finite(v))
            .collect();
        let ctx = PointContext::new(x.clone(), bounds).expect("lengths");
        let Ok((_, bound)) = expr.propagate(&ctx) else {
            continue;
        };
        let Some(bound) = bound.value() else { continue };
        let center: Vec<TwoFloat> = x.iter().map(|&v| tf(v)).collect();
        let Some(f0) = eval_dd(&expr, &center) else {
            continue;
        };
        if !f0.hi().is_finite() || bound > 1e6 * f0.hi().abs().max(1.0) {
            continue;
        }
        let mut out = TreeFuzz::default();
        let mut point = center.clone();
        for k in 0..perturbations {
            let corner = k % 4 == 0;
            for v in 0..vars {
                let d = if corner {
                    if rng.random_bool(0.5) {
                        e[v]
                    } else {
                        -e[v]
                    }
                } else if e[v] > 0.0 {
                    rng.random_range(-e[v]..=e[v])
                } else {
                    0.0
                };
                point[v] = TwoFloat::new_add(x[v], d);
            }
            match eval_dd(&expr, &point) {
                Some(f) if f.hi().is_finite() => {
                    let actual = (f - f0).abs().hi();
                    out.checked += 1;
                    if actual > bound {
                        out.violations += 1;
                    }
                    if bound > 0.0 {
                        out.worst_ratio = out.worst_ratio.max(actual / bound);
                    } else if actual > 0.0 {
                        out.worst_ratio = f64::INFINITY;
                    }
                }
                _ => out.undefined += 1,
            }
        }
        return (expr, out);
    }
}

/// Smooth fields named like the case-study variables, in physical ranges:
/// velocities within ±300, `P` in `[1e4, 1e6]`, `D` in `[0.1, 5]`.
pub fn ge_fields(n: usize, seed: u64) -> Vec<VariableData> {
    let s = seed as f64;
    let wave = |i: usize, f: f64, p: f64| (f * i as f64 / n.max(2) as f64 + p + s).sin();
    let make = |name: &str, g: &dyn Fn(usize) -> f64| {
        VariableData::new(name, (0..n).map(g).collect()).expect("finite")
    };
    vec![
        make("Vx", &|i| {
            250.0 * wave(i, 6.0, 0.0) + 40.0 * wave(i, 37.0, 1.0)
        }),
        make("Vy", &|i| {
            180.0 * wave(i, 4.0, 2.0) - 30.0 * wave(i, 23.0, 0.5)
        }),
        make("Vz", &|i| 90.0 * wave(i, 9.0, 4.0)),
        make("P", &|i| {
            5.05e5 + 4.9e5 * wave(i, 3.0, 0.3) * (0.8 + 0.2 * wave(i, 17.0, 0.0))
        }),
        make("D", &|i| {
            2.55 + 2.4 * wave(i, 5.0, 1.7) * (0.9 + 0.1 * wave(i, 29.0, 0.0))
        }),
    ]
}
