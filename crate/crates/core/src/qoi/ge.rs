//! Built-in QoIs of the turbine CFD case study over `(Vx, Vy, Vz, P, D)`.

use std::collections::BTreeMap;

use super::QoiExpr;

/// Variable order the built-in trees index into.
pub const GE_VARIABLES: [&str; 5] = ["Vx", "Vy", "Vz", "P", "D"];

/// Physical constants of the case study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeConstants {
    /// Specific gas constant `R`.
    pub gas_constant: f64,
    /// Heat capacity ratio `gamma`.
    pub gamma: f64,
    /// Exponent of the total-pressure ratio.
    pub pt_exponent: f64,
    /// Sutherland reference viscosity `mu_r`.
    pub mu_ref: f64,
    /// Sutherland reference temperature `T_r`.
    pub t_ref: f64,
    /// Sutherland constant `S`.
    pub sutherland: f64,
}

pub const GE: GeConstants = GeConstants {
    gas_constant: 287.1,
    gamma: 1.4,
    pt_exponent: 3.5,
    mu_ref: 1.716e-5,
    t_ref: 273.15,
    sutherland: 110.4,
};

fn var(name: &str) -> QoiExpr {
    let idx = GE_VARIABLES
        .iter()
        .position(|v| *v == name)
        .expect("GE variable");
    QoiExpr::Var(idx)
}

fn vtot() -> QoiExpr {
    let squares = ["Vx", "Vy", "Vz"]
        .iter()
        .map(|v| (1.0, QoiExpr::power(var(v), 2)))
        .collect();
    QoiExpr::Sqrt(Box::new(QoiExpr::sum(squares)))
}

fn temperature() -> QoiExpr {
    QoiExpr::Quotient(
        Box::new(var("P")),
        Box::new(QoiExpr::scale(GE.gas_constant, var("D"))),
    )
}

fn sound_speed() -> QoiExpr {
    QoiExpr::Sqrt(Box::new(QoiExpr::scale(
        GE.gamma * GE.gas_constant,
        temperature(),
    )))
}

fn mach() -> QoiExpr {
    QoiExpr::Quotient(Box::new(vtot()), Box::new(sound_speed()))
}

/// `P * B^3.5` with `B = 1 + gamma/2 * Mach * Mach`, written as
/// `P * (B^3 * sqrt(B))`.
fn total_pressure() -> QoiExpr {
    let base = QoiExpr::sum(vec![
        (1.0, QoiExpr::Const(1.0)),
        (
            1.0,
            QoiExpr::scale(
                GE.gamma / 2.0,
                QoiExpr::Product(Box::new(mach()), Box::new(mach())),
            ),
        ),
    ]);
    let ratio = QoiExpr::Product(
        Box::new(QoiExpr::power(base.clone(), 3)),
        Box::new(QoiExpr::Sqrt(Box::new(base))),
    );
    QoiExpr::Product(Box::new(var("P")), Box::new(ratio))
}

/// Sutherland's law `mu_r (T/T_r)^1.5 (T_r + S)/(T + S)`, written as
/// `mu_r (T_r + S) * ((T/T_r) * sqrt(T/T_r)) * 1/(T + S)`.
fn viscosity() -> QoiExpr {
    let reduced = || QoiExpr::Quotient(Box::new(temperature()), Box::new(QoiExpr::Const(GE.t_ref)));
    let pow15 = QoiExpr::Product(
        Box::new(reduced()),
        Box::new(QoiExpr::Sqrt(Box::new(reduced()))),
    );
    let radical = QoiExpr::radical(temperature(), GE.sutherland);
    QoiExpr::scale(
        GE.mu_ref * (GE.t_ref + GE.sutherland),
        QoiExpr::Product(Box::new(pow15), Box::new(radical)),
    )
}

/// The six case-study QoIs, fully expanded into primitive nodes.
pub fn builtin_ge_qois() -> BTreeMap<&'static str, QoiExpr> {
    BTreeMap::from([
        ("VTOT", vtot()),
        ("T", temperature()),
        ("C", sound_speed()),
        ("Mach", mach()),
        ("PT", total_pressure()),
        ("MU", viscosity()),
    ])
}

/// Direct closed-form evaluation of the six QoIs from `(Vx, Vy, Vz, P, D)`,
/// independent of the expression trees.
pub fn ge_closed_form(name: &str, s: &[f64; 5]) -> Option<f64> {
    let [vx, vy, vz, p, d] = *s;
    let c = GE;
    let v_total = (vx * vx + vy * vy + vz * vz).sqrt();
    let t = p / (d * c.gas_constant);
    let sound = (c.gamma * c.gas_constant * t).sqrt();
    let mach = v_total / sound;
    Some(match name {
        "VTOT" => v_total,
        "T" => t,
        "C" => sound,
        "Mach" => mach,
        "PT" => p * (1.0 + c.gamma / 2.0 * mach * mach).powf(c.pt_exponent),
        "MU" => c.mu_ref * (t / c.t_ref).powf(1.5) * (c.t_ref + c.sutherland) / (t + c.sutherland),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn temperature_example() {
        let q = builtin_ge_qois();
        let t = q["T"].eval(&[0.0, 0.0, 0.0, 101325.0, 1.2]).unwrap();
        assert!(rel(t, 101325.0 / (1.2 * 287.1)) < 1e-14);
        assert!((t - 294.105).abs() < 1e-3);
    }

    #[test]
    fn sound_speed_at_reference_temperature() {
        // Choose P so that T = 273.15 exactly in real arithmetic.
        let d = 1.0;
        let p = 273.15 * 287.1 * d;
        let c = builtin_ge_qois()["C"].eval(&[0.0, 0.0, 0.0, p, d]).unwrap();
        assert!(rel(c, (1.4f64 * 287.1 * 273.15).sqrt()) < 1e-13);
        assert!((c - 331.32).abs() < 0.05);
    }

    #[test]
    fn vtot_example() {
        let v = builtin_ge_qois()["VTOT"]
            .eval(&[3.0, 4.0, 0.0, 1e5, 1.0])
            .unwrap();
        assert_eq!(v, 5.0);
    }

    #[test]
    fn trees_are_valid_and_radical_present() {
        for (name, e) in builtin_ge_qois() {
            e.validate(GE_VARIABLES.len())
                .unwrap_or_else(|err| panic!("{name}: {err}"));
        }
        let mu = &builtin_ge_qois()["MU"];
        assert!(format!("{mu}").contains("(1 / ("));
    }

    #[test]
    fn trees_match_closed_form() {
        let s = [120.0, -35.0, 8.0, 2.5e5, 1.7];
        for (name, e) in builtin_ge_qois() {
            let tree = e.eval(&s).unwrap();
            let direct = ge_closed_form(name, &s).unwrap();
            assert!(rel(tree, direct) < 1e-12, "{name}: {tree} vs {direct}");
        }
        assert!(ge_closed_form("nope", &s).is_none());
    }
}
