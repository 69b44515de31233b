use std::f64::consts::PI;

use tripod_core::dynamics::NoiseModel;
use tripod_core::harness::tables::load_fixture;
use tripod_core::harness::{fit_fringe, phase_grid, preset, reproduce_tables, run_fringe, GateFamily, RunConfig};
use tripod_core::tomography::{
    parse_records_str, record_fidelity, simulate_tomography, write_records, GateKind, HadamardSign, RecordLabel,
    TomographySetup, VarianceMethod,
};

#[test]
fn config_overrides_preset_values() {
    let cfg = RunConfig::parse("[gate]\npreset = \"x-pi-optical\"\nduration = \"240 us\"\n").unwrap();
    let spec = cfg.gate_spec(None).unwrap();
    assert!((spec.params.duration() - 240e-6).abs() < 1e-12);
    assert!((spec.params.omega2_max - 2.0 * PI * 170e3).abs() < 1e-6);
}

#[test]
fn fixtures_round_trip_through_text() {
    let recs = load_fixture("table3").unwrap();
    let mut buf = Vec::new();
    write_records(&mut buf, &recs).unwrap();
    let back = parse_records_str(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(recs.len(), back.len());
    for (a, b) in recs.iter().zip(&back) {
        assert!((record_fidelity(a) - record_fidelity(b)).abs() < 1e-12);
    }
}

#[test]
fn simulated_pi_gates_reproduce_high_fidelity() {
    let mut records = Vec::new();
    for (name, gate) in [("x-pi-optical", GateKind::XPi), ("z-pi-optical", GateKind::ZPi)] {
        let setup = TomographySetup::new(RecordLabel::standard(gate), preset(name).unwrap().params);
        records.push(simulate_tomography(&setup, &NoiseModel::noiseless(), None, 0).unwrap());
    }
    let report = reproduce_tables(&records, VarianceMethod::Pairwise, HadamardSign::Corrected);
    for row in &report.rows {
        assert!(row.fidelity.value >= 0.99, "{} {}", row.label, row.fidelity.value);
    }
}

#[test]
fn noise_lowers_fringe_contrast() {
    let p = preset("x-pi-optical").unwrap().params;
    let grid = phase_grid(5);
    let clean = fit_fringe(&run_fringe(GateFamily::X, &p, &grid, &NoiseModel::noiseless(), None, 0).unwrap()).unwrap();
    let noisy_model = NoiseModel::from_linewidths(3000.0, 300.0, [1.0; 3]);
    let noisy = fit_fringe(&run_fringe(GateFamily::X, &p, &grid, &noisy_model, None, 0).unwrap()).unwrap();
    assert!(noisy.contrast < clean.contrast);
}
