//! Built-in consistency checks run by `tripod validate`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use serde_json::{json, Value};
use tripod_core::dynamics::{default_step, lindblad_channel, propagator, NoiseModel, QubitChannel, ShiftModel};
use tripod_core::harness::fringe::{phase_grid, run_fringe};
use tripod_core::harness::presets::{preset, PRESET_NAMES};
use tripod_core::harness::tables::load_fixture;
use tripod_core::pulse::{full_gate_schedule, SquarePulse};
use tripod_core::quantum::{unitarity_deviation, Level, C64};
use tripod_core::tomography::{
    fidelity_closed_form, fidelity_ideal_reference, fidelity_variance, record_fidelity, HadamardSign, IdealSide,
    VarianceMethod,
};
use tripod_core::tripod::{target_unitary, verify_dark_states, FieldAmplitudes};
use tripod_core::Result;

use crate::report::Report;

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

fn dark_states() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for name in PRESET_NAMES {
        let p = preset(name)?.params;
        let f = FieldAmplitudes {
            omega0: p.omega0_max(),
            omega1: C64::from_polar(p.omega1_max(), p.phi1),
            omega2: C64::from_polar(p.omega2_max, p.phase_step),
            ..Default::default()
        };
        worst = worst.max(verify_dark_states(&f, 1e-12)?.max_residual());
    }
    Ok((true, format!("max residual {worst:.2e} over {} presets", PRESET_NAMES.len())))
}

fn gate_quality(name: &str) -> Result<(bool, String)> {
    let p = preset(name)?.params;
    let s = full_gate_schedule(&p);
    let u = propagator(&s, &ShiftModel::none(), default_step(&s, &ShiftModel::none()))?;
    let ch = QubitChannel::from_unitary(&u);
    let f = ch.average_fidelity(&target_unitary(p.theta1, p.phi1, p.phase_step));
    let leak = 1.0 - (0..2).map(|i| u[(i, 0)].norm_sqr()).sum::<f64>();
    let dev = unitarity_deviation(&u);
    Ok((f >= 0.99 && leak <= 0.01 && dev < 1e-9, format!("fidelity {f:.6}, leakage {leak:.2e}, unitarity {dev:.1e}")))
}

fn master_equation_consistency() -> Result<(bool, String)> {
    let pulse = SquarePulse::with_area(Level::One, 2.0 * PI * 100e3, 0.3, FRAC_PI_2)?;
    let step = default_step(&pulse, &ShiftModel::none());
    let unitary = QubitChannel::from_unitary(&propagator(&pulse, &ShiftModel::none(), step)?);
    let mixed = lindblad_channel(&pulse, &NoiseModel::noiseless(), step)?;
    let mut worst: f64 = 0.0;
    for k in [Level::Zero, Level::One, Level::Two, Level::Upper] {
        let rho = tripod_core::quantum::DensityMatrix::pure(k);
        worst = worst.max((unitary.apply_matrix(rho.matrix()) - mixed.apply_matrix(rho.matrix())).norm());
    }
    Ok((worst < 1e-9, format!("max difference {worst:.1e}")))
}

fn table1_values(sign: HadamardSign) -> Result<(bool, String)> {
    let recs = load_fixture("table1")?;
    let want = [0.965, 0.931, 0.965];
    let mut ok = true;
    let mut parts = Vec::new();
    for (rec, w) in recs.iter().zip(want) {
        let cf = fidelity_closed_form(rec, sign)?;
        let tr = record_fidelity(rec);
        ok &= (cf - w).abs() <= 0.002 && (cf - tr).abs() < 1e-12;
        parts.push(format!("{} {cf:.4}", rec.label));
    }
    Ok((ok, parts.join(", ")))
}

fn table1_intervals() -> Result<(bool, String)> {
    let recs = load_fixture("table1")?;
    let cis: Vec<f64> = recs.iter().map(|r| fidelity_variance(r, VarianceMethod::Pairwise).ci68).collect();
    let ok = cis.iter().all(|c| (c - 0.038).abs() <= 0.002);
    Ok((ok, format!("68% CI {:.4} {:.4} {:.4}", cis[0], cis[1], cis[2])))
}

fn reference_columns() -> Result<(bool, String)> {
    let recs = load_fixture("table1")?;
    let want = [(0.985, 0.974), (0.973, 0.955), (0.989, 0.975)];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for (rec, (wi, wf)) in recs.iter().zip(want) {
        let fi = fidelity_ideal_reference(rec, IdealSide::Initial, VarianceMethod::Pairwise).value;
        let ff = fidelity_ideal_reference(rec, IdealSide::Final, VarianceMethod::Pairwise).value;
        worst = worst.max((fi - wi).abs()).max((ff - wf).abs());
        ok &= (fi - wi).abs() <= 0.005 && (ff - wf).abs() <= 0.005;
    }
    Ok((ok, format!("max deviation {worst:.4}")))
}

fn table3_values() -> Result<(bool, String)> {
    let recs = load_fixture("table3")?;
    let want = [0.960, 0.905, 0.936, 0.952];
    let values: Vec<f64> = recs.iter().map(record_fidelity).collect();
    let ok = values.len() == 4 && values.iter().zip(want).all(|(v, w)| (v - w).abs() <= 0.005);
    let shown: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    Ok((ok, shown.join(" ")))
}

fn seed_determinism() -> Result<(bool, String)> {
    let p = preset("x-pi-optical")?.params;
    let grid = phase_grid(5);
    let a = run_fringe(tripod_core::harness::GateFamily::X, &p, &grid, &NoiseModel::noiseless(), Some(100), 17)?;
    let b = run_fringe(tripod_core::harness::GateFamily::X, &p, &grid, &NoiseModel::noiseless(), Some(100), 17)?;
    Ok((a == b, "two seeded fringe scans compared".into()))
}

pub fn run_validation(sign: HadamardSign, config: Value) -> Report {
    let checks = vec![
        check("dark-state-residuals", dark_states),
        check("x-pi-optical-gate", || gate_quality("x-pi-optical")),
        check("z-pi-optical-gate", || gate_quality("z-pi-optical")),
        check("master-equation-consistency", master_equation_consistency),
        check("table1-closed-form", || table1_values(sign)),
        check("table1-intervals", table1_intervals),
        check("table1-ideal-reference", reference_columns),
        check("table3-trace-formula", table3_values),
        check("seed-determinism", seed_determinism),
    ];
    let passed = checks.iter().all(|c| c.passed);
    let mut text = String::new();
    for c in &checks {
        let _ = writeln!(text, "{} {:<30} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let _ = writeln!(text, "{} checks, {failed} failed", checks.len());
    let results = json!({
        "hadamard_sign": match sign { HadamardSign::Corrected => "corrected", HadamardSign::Verbatim => "verbatim" },
        "checks": checks.iter().map(|c| json!({"name": c.name, "passed": c.passed, "detail": c.detail})).collect::<Vec<_>>(),
    });
    Report { command: "validate", config, results, text, files: vec![], passed }
}
