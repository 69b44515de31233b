//! Population tomography of the qubit before and after a gate, fidelity
//! estimators, their variances and a shot-noise simulator.
//!
//! A measurement along one axis maps `|0>` to `|u>` with a pi pulse,
//! optionally applies an analysis pi/2 pulse on `|u>-|1>`, and records the
//! probability `P` of not finding the ion in `|u>`. Three such
//! probabilities give the Bloch vector `r = 1 - 2P` on the `(u, 1)` pair.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::dynamics::{default_step, lindblad_channel, propagator, NoiseModel, QubitChannel};
use crate::error::{Error, Result};
use crate::pulse::{full_gate_schedule, Drive, GateParams, PulseSchedule, SquarePulse};
use crate::quantum::{
    bloch_of_2x2, bloch_to_density_unchecked, density_2x2, expm_hermitian, outer, BlochVector, DensityMatrix, Level,
    LevelPair, Mat2, Mat4, Operator, C64, I,
};
use crate::tripod::{hamiltonian_matrix, ideal_hadamard, ideal_x, ideal_z, target_unitary};

/// Gates covered by the tomography protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    XPi,
    ZPi,
    Hadamard,
    XHalfPi,
    ZHalfPi,
}

impl GateKind {
    pub fn label(self) -> &'static str {
        match self {
            GateKind::XPi => "x-pi",
            GateKind::ZPi => "z-pi",
            GateKind::Hadamard => "hadamard",
            GateKind::XHalfPi => "x-halfpi",
            GateKind::ZHalfPi => "z-halfpi",
        }
    }

    /// `theta1` of the gate's rotation axis.
    pub fn theta1(self) -> f64 {
        match self {
            GateKind::XPi | GateKind::XHalfPi => FRAC_PI_4,
            GateKind::ZPi | GateKind::ZHalfPi => 0.0,
            GateKind::Hadamard => 3.0 * PI / 8.0,
        }
    }

    /// Phase step `Phi`. A rotation by `+pi/2` corresponds to `Phi = -pi/2`.
    pub fn phase_step(self) -> f64 {
        match self {
            GateKind::XPi | GateKind::ZPi | GateKind::Hadamard => PI,
            GateKind::XHalfPi | GateKind::ZHalfPi => -FRAC_PI_2,
        }
    }

    pub fn target(self) -> Mat2 {
        match self {
            GateKind::XPi => ideal_x(),
            GateKind::ZPi => ideal_z(),
            GateKind::Hadamard => ideal_hadamard(),
            _ => target_unitary(self.theta1(), 0.0, self.phase_step()),
        }
    }

    pub fn is_half_pi(self) -> bool {
        matches!(self, GateKind::XHalfPi | GateKind::ZHalfPi)
    }
}

/// How raw analysis-frame Bloch components relate to the qubit frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnalysisFrame {
    /// Analysis phases share the reference of the preparation pulses.
    Lab,
    /// Analysis reference advanced by a quarter turn about `z`.
    Quarter,
}

impl AnalysisFrame {
    pub fn label(self) -> &'static str {
        match self {
            AnalysisFrame::Lab => "lab",
            AnalysisFrame::Quarter => "quarter",
        }
    }

    fn rotation(self) -> f64 {
        match self {
            AnalysisFrame::Lab => 0.0,
            AnalysisFrame::Quarter => FRAC_PI_2,
        }
    }
}

/// Nominal initial qubit state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preparation {
    /// `|+z> = |0>`.
    Zero,
    /// `|+x> = (|0> + |1>)/sqrt 2`.
    PlusX,
    /// `cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>`.
    Angles { theta: f64, phi: f64 },
}

impl Preparation {
    /// Bloch polar and azimuthal angles.
    pub fn angles(self) -> (f64, f64) {
        match self {
            Preparation::Zero => (0.0, 0.0),
            Preparation::PlusX => (FRAC_PI_2, 0.0),
            Preparation::Angles { theta, phi } => (theta, phi),
        }
    }

    pub fn bloch(self) -> BlochVector {
        let (theta, phi) = self.angles();
        BlochVector::unchecked(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
    }

    pub fn density(self) -> Mat2 {
        density_2x2(&self.bloch())
    }

    fn tag(self) -> String {
        match self {
            Preparation::Zero => "+z".into(),
            Preparation::PlusX => "+x".into(),
            Preparation::Angles { theta, phi } => format!("{theta}/{phi}"),
        }
    }

    fn parse_tag(tag: &str) -> std::result::Result<Self, String> {
        match tag {
            "+x" => Ok(Preparation::PlusX),
            "+z" => Ok(Preparation::Zero),
            _ => {
                let bad = || format!("unknown preparation '{tag}'");
                let (a, b) = tag.split_once('/').ok_or_else(bad)?;
                let theta = a.trim().parse().map_err(|_| bad())?;
                let phi = b.trim().parse().map_err(|_| bad())?;
                Ok(Preparation::Angles { theta, phi })
            }
        }
    }
}

/// Gate, preparation and analysis frame of one tomography record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordLabel {
    pub gate: GateKind,
    pub prep: Preparation,
    pub frame: AnalysisFrame,
}

impl RecordLabel {
    /// Label with the default preparation and frame for the gate.
    pub fn standard(gate: GateKind) -> Self {
        let prep = match gate {
            GateKind::ZPi => Preparation::PlusX,
            _ => Preparation::Zero,
        };
        RecordLabel { gate, prep, frame: Self::default_frame(gate) }
    }

    pub fn half_pi(gate: GateKind, prep: Preparation) -> Self {
        RecordLabel { gate, prep, frame: Self::default_frame(gate) }
    }

    fn default_frame(gate: GateKind) -> AnalysisFrame {
        if gate.is_half_pi() {
            AnalysisFrame::Quarter
        } else {
            AnalysisFrame::Lab
        }
    }
}

impl fmt::Display for RecordLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.gate.label())?;
        if self.gate.is_half_pi() {
            write!(f, "({})", self.prep.tag())?;
        } else if self.prep != RecordLabel::standard(self.gate).prep {
            write!(f, "({})", self.prep.tag())?;
        }
        if self.frame != RecordLabel::default_frame(self.gate) {
            write!(f, "@{}", self.frame.label())?;
        }
        Ok(())
    }
}

impl FromStr for RecordLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (body, frame) = match s.split_once('@') {
            Some((b, "lab")) => (b, Some(AnalysisFrame::Lab)),
            Some((b, "quarter")) => (b, Some(AnalysisFrame::Quarter)),
            Some((_, other)) => return Err(format!("unknown analysis frame '{other}'")),
            None => (s, None),
        };
        let (name, prep) = match body.split_once('(') {
            Some((n, rest)) => {
                let tag = rest.strip_suffix(')').ok_or_else(|| format!("unbalanced parenthesis in '{s}'"))?;
                (n, Some(Preparation::parse_tag(tag)?))
            }
            None => (body, None),
        };
        let gate = match name {
            "x-pi" => GateKind::XPi,
            "z-pi" => GateKind::ZPi,
            "hadamard" => GateKind::Hadamard,
            "x-halfpi" => GateKind::XHalfPi,
            "z-halfpi" => GateKind::ZHalfPi,
            _ => return Err(format!("unknown gate label '{name}'")),
        };
        if gate.is_half_pi() && prep.is_none() {
            return Err(format!("'{name}' needs a preparation tag such as (+x)"));
        }
        let mut label = RecordLabel::standard(gate);
        if let Some(p) = prep {
            label.prep = p;
        }
        if let Some(fr) = frame {
            label.frame = fr;
        }
        Ok(label)
    }
}

/// Measured populations before and after a gate.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyRecord {
    pub label: RecordLabel,
    /// `(P_x, P_y, P_z)` of the prepared state.
    pub initial: [f64; 3],
    /// `(P_x, P_y, P_z)` after the gate.
    pub final_pops: [f64; 3],
    pub shots: u64,
    raw: Option<String>,
}

impl TomographyRecord {
    pub fn new(label: RecordLabel, initial: [f64; 3], final_pops: [f64; 3], shots: u64) -> Result<Self> {
        for p in initial.iter().chain(&final_pops) {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Domain(format!("population {p} outside [0, 1]")));
            }
        }
        if shots == 0 {
            return Err(Error::Domain("shot count must be at least 1".into()));
        }
        Ok(TomographyRecord { label, initial, final_pops, shots, raw: None })
    }

    pub fn with_shots(&self, shots: u64) -> Result<Self> {
        Self::new(self.label, self.initial, self.final_pops, shots)
    }

    /// The six populations in file order.
    pub fn populations(&self) -> [f64; 6] {
        let (i, f) = (self.initial, self.final_pops);
        [i[0], i[1], i[2], f[0], f[1], f[2]]
    }

    /// One comma-separated line; the original text when the record was parsed.
    pub fn to_line(&self) -> String {
        if let Some(raw) = &self.raw {
            return raw.clone();
        }
        let p = self.populations();
        format!("{},{},{},{},{},{},{},{}", self.label, p[0], p[1], p[2], p[3], p[4], p[5], self.shots)
    }
}

fn parse_line(text: &str, line: usize) -> Result<Option<TomographyRecord>> {
    let body = text.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let err = |message: String| Error::Parse { line, message };
    let fields: Vec<&str> = body.split(',').map(str::trim).collect();
    if fields.len() != 8 {
        return Err(err(format!("expected 8 comma-separated fields, found {}", fields.len())));
    }
    let label: RecordLabel = fields[0].parse().map_err(err)?;
    let mut p = [0.0; 6];
    for (k, v) in fields[1..7].iter().enumerate() {
        p[k] = v.parse().map_err(|_| err(format!("'{v}' is not a number")))?;
    }
    let shots: u64 = fields[7].parse().map_err(|_| err(format!("'{}' is not a shot count", fields[7])))?;
    let mut rec = TomographyRecord::new(label, [p[0], p[1], p[2]], [p[3], p[4], p[5]], shots).map_err(|e| match e {
        Error::Domain(m) => err(m),
        other => other,
    })?;
    rec.raw = Some(body.to_string());
    Ok(Some(rec))
}

/// Reads records, one per line; `#` starts a comment.
pub fn parse_records<R: BufRead>(input: R) -> Result<Vec<TomographyRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        if let Some(rec) = parse_line(&line, i + 1)? {
            out.push(rec);
        }
    }
    Ok(out)
}

pub fn parse_records_str(text: &str) -> Result<Vec<TomographyRecord>> {
    parse_records(text.as_bytes())
}

pub fn write_records<W: Write>(mut out: W, records: &[TomographyRecord]) -> io::Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_line())?;
    }
    Ok(())
}

/// `R = -i|0><u| - i|u><0| + |1><1| + |2><2|`.
pub fn mapping_unitary() -> Operator {
    let (z, u) = (Level::Zero, Level::Upper);
    let m = (outer(z, u) + outer(u, z)) * (-I) + outer(Level::One, Level::One) + outer(Level::Two, Level::Two);
    Operator::unitary(m).expect("mapping operator is unitary")
}

/// Linear-inversion estimate on the `(u, 1)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub bloch: BlochVector,
    pub density: DensityMatrix,
    /// `|r| <= 1`; estimates outside the ball are kept, not projected.
    pub physical: bool,
}

pub fn reconstruct_observed_density(px: f64, py: f64, pz: f64) -> Reconstruction {
    let bloch = BlochVector::unchecked(1.0 - 2.0 * px, 1.0 - 2.0 * py, 1.0 - 2.0 * pz);
    Reconstruction { physical: bloch.is_physical(), density: bloch_to_density_unchecked(&bloch, LevelPair::readout()), bloch }
}

/// `R^dagger rho R`.
pub fn undo_mapping(rho_obs: &DensityMatrix) -> DensityMatrix {
    let r = mapping_unitary();
    rho_obs.conjugate(&r.matrix().adjoint())
}

/// Qubit-frame density block for measured populations.
pub fn qubit_density(pops: &[f64; 3], frame: AnalysisFrame) -> Mat2 {
    let rec = reconstruct_observed_density(pops[0], pops[1], pops[2]);
    let block = undo_mapping(&rec.density).qubit_block();
    let rz = crate::quantum::z_rotation(frame.rotation());
    rz * block * rz.adjoint()
}

/// `tr(rho_f U rho_i U^dagger)` on the qubit manifold.
pub fn fidelity_trace(rho_i: &Mat2, rho_f: &Mat2, u: &Mat2) -> f64 {
    (rho_f * u * rho_i * u.adjoint()).trace().re
}

pub fn fidelity_trace_4x4(rho_i: &DensityMatrix, rho_f: &DensityMatrix, u: &Mat2) -> f64 {
    fidelity_trace(&rho_i.qubit_block(), &rho_f.qubit_block(), u)
}

/// Full pipeline: reconstruct, undo the mapping, rotate into the analysis
/// frame and evaluate the trace formula against the record's gate.
pub fn record_fidelity(rec: &TomographyRecord) -> f64 {
    let f = rec.label.frame;
    fidelity_trace(&qubit_density(&rec.initial, f), &qubit_density(&rec.final_pops, f), &rec.label.gate.target())
}

/// Sign of the `P_y,i P_z,f` term in the Hadamard closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HadamardSign {
    /// `-2 P_y,i P_z,f`, consistent with the trace formula.
    #[default]
    Corrected,
    /// `+2 P_y,i P_z,f`.
    Verbatim,
}

/// Polynomial fidelity expressions for the pi gates.
pub fn fidelity_closed_form(rec: &TomographyRecord, sign: HadamardSign) -> Result<f64> {
    let [xi, yi, zi] = rec.initial;
    let [xf, yf, zf] = rec.final_pops;
    let pair = |a: f64, b: f64| a + b - 2.0 * a * b;
    match rec.label.gate {
        GateKind::XPi => Ok(pair(xi, xf) - pair(yi, yf) + pair(zi, zf)),
        GateKind::ZPi => Ok(pair(xi, xf) + pair(yi, yf) - pair(zi, zf)),
        GateKind::Hadamard => {
            let s = match sign {
                HadamardSign::Corrected => -2.0,
                HadamardSign::Verbatim => 2.0,
            };
            Ok(pair(xi, xf) + yi + zf + s * yi * zf + pair(zi, yf) - 1.0)
        }
        other => Err(Error::Domain(format!("no closed form for gate '{}'", other.label()))),
    }
}

/// Fidelity with its variance and 68% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityEstimate {
    pub value: f64,
    pub variance: f64,
    pub ci68: f64,
}

impl FidelityEstimate {
    pub fn new(value: f64, variance: f64) -> Self {
        let variance = variance.max(0.0);
        FidelityEstimate { value, variance, ci68: variance.sqrt() }
    }
}

/// How population variances are propagated to the fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceMethod {
    /// Pairwise sums `V(P_a)(1 + 4 P_b^2) + V(P_b)(1 + 4 P_a^2)` over the
    /// population pairs coupled by the gate.
    #[default]
    Pairwise,
    /// First-order (delta-method) propagation of the trace formula.
    FirstOrder,
}

/// `M` with `F = 1/2 (1 + r_f . M r_i)` in raw analysis coordinates.
fn coupling_matrix(gate: GateKind, frame: AnalysisFrame) -> Matrix3<f64> {
    let u = gate.target();
    let density = |r: [f64; 3]| {
        let block = undo_mapping(&bloch_to_density_unchecked(&BlochVector::from_array(r), LevelPair::readout()))
            .qubit_block();
        let rz = crate::quantum::z_rotation(frame.rotation());
        rz * block * rz.adjoint()
    };
    let unit = |k: usize| {
        let mut r = [0.0; 3];
        r[k] = 1.0;
        r
    };
    Matrix3::from_fn(|k, j| {
        // with r_i = e_j and r_f = e_k the trace gives (1 + M_kj) / 2; the
        // affine identity part cancels against the two zero-vector terms
        let f = |ri: [f64; 3], rf: [f64; 3]| fidelity_trace(&density(ri), &density(rf), &u);
        2.0 * (f(unit(j), unit(k)) - f(unit(j), [0.0; 3]) - f([0.0; 3], unit(k)) + f([0.0; 3], [0.0; 3]))
    })
}

fn binomial_variance(p: f64, shots: u64) -> f64 {
    p * (1.0 - p) / shots as f64
}

fn propagate(
    m: &Matrix3<f64>,
    pi: &[f64; 3],
    vi: &[f64; 3],
    pf: &[f64; 3],
    vf: &[f64; 3],
    method: VarianceMethod,
) -> f64 {
    match method {
        VarianceMethod::Pairwise => {
            let mut v = 0.0;
            for k in 0..3 {
                for j in 0..3 {
                    let w = m[(k, j)] * m[(k, j)];
                    v += w * (vi[j] * (1.0 + 4.0 * pf[k] * pf[k]) + vf[k] * (1.0 + 4.0 * pi[j] * pi[j]));
                }
            }
            v
        }
        VarianceMethod::FirstOrder => {
            let ri = nalgebra::Vector3::from_fn(|k, _| 1.0 - 2.0 * pi[k]);
            let rf = nalgebra::Vector3::from_fn(|k, _| 1.0 - 2.0 * pf[k]);
            let gi = m.transpose() * rf;
            let gf = m * ri;
            (0..3).map(|k| vi[k] * gi[k] * gi[k] + vf[k] * gf[k] * gf[k]).sum()
        }
    }
}

/// Trace-formula fidelity of a record with its propagated variance.
pub fn fidelity_variance(rec: &TomographyRecord, method: VarianceMethod) -> FidelityEstimate {
    let m = coupling_matrix(rec.label.gate, rec.label.frame);
    let vi = rec.initial.map(|p| binomial_variance(p, rec.shots));
    let vf = rec.final_pops.map(|p| binomial_variance(p, rec.shots));
    FidelityEstimate::new(record_fidelity(rec), propagate(&m, &rec.initial, &vi, &rec.final_pops, &vf, method))
}

/// Which side of the record is replaced by the nominal state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdealSide {
    Initial,
    Final,
}

/// Raw analysis populations that a qubit state would produce.
pub fn ideal_populations(rho: &Mat2, frame: AnalysisFrame) -> [f64; 3] {
    let rz = crate::quantum::z_rotation(frame.rotation());
    let q = bloch_of_2x2(&(rz.adjoint() * rho * rz));
    // the qubit frame relates to the (u, 1) frame by R: (x, y, z) -> (y, -x, z)
    let obs = [-q.y, q.x, q.z];
    obs.map(|r| 0.5 * (1.0 - r))
}

/// Fidelity with the nominal preparation (or its ideal image) substituted
/// for one measured side; the substituted side carries no variance.
pub fn fidelity_ideal_reference(rec: &TomographyRecord, side: IdealSide, method: VarianceMethod) -> FidelityEstimate {
    let frame = rec.label.frame;
    let u = rec.label.gate.target();
    let prep = rec.label.prep.density();
    let m = coupling_matrix(rec.label.gate, frame);
    let var = |p: &[f64; 3]| p.map(|x| binomial_variance(x, rec.shots));
    match side {
        IdealSide::Initial => {
            let value = fidelity_trace(&prep, &qubit_density(&rec.final_pops, frame), &u);
            let pi = ideal_populations(&prep, frame);
            let v = propagate(&m, &pi, &[0.0; 3], &rec.final_pops, &var(&rec.final_pops), method);
            FidelityEstimate::new(value, v)
        }
        IdealSide::Final => {
            let ideal_f = u * prep * u.adjoint();
            let value = fidelity_trace(&qubit_density(&rec.initial, frame), &ideal_f, &u);
            let pf = ideal_populations(&ideal_f, frame);
            let v = propagate(&m, &rec.initial, &var(&rec.initial), &pf, &[0.0; 3], method);
            FidelityEstimate::new(value, v)
        }
    }
}

/// Generator for run `stream` of an experiment seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `Binomial(shots, p) / shots` drawn from `rng`.
pub fn sample_population_with(rng: &mut ChaCha8Rng, p_true: f64, shots: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_true) {
        return Err(Error::Domain(format!("probability {p_true} outside [0, 1]")));
    }
    if shots == 0 {
        return Err(Error::Domain("shot count must be at least 1".into()));
    }
    let dist = Binomial::new(shots, p_true).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(dist.sample(rng) as f64 / shots as f64)
}

pub fn sample_populations(p_true: f64, shots: u64, seed: u64) -> Result<f64> {
    sample_population_with(&mut stream_rng(seed, 0), p_true, shots)
}

/// How the `|0>-|u>` mapping pulse is applied in simulation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MappingPulse {
    /// The exact mapping unitary.
    #[default]
    Ideal,
    /// A square pi pulse of the given Rabi frequency (rad/s) evolved with the
    /// noise model.
    Finite { rabi: f64 },
}

/// One simulated tomography experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographySetup {
    pub label: RecordLabel,
    pub gate: GateParams,
    pub mapping: MappingPulse,
    /// Rabi frequency of the preparation and analysis pulses (rad/s).
    pub pulse_rabi: f64,
    /// Integration step; `None` picks a default for the gate.
    pub step: Option<f64>,
}

impl TomographySetup {
    pub fn new(label: RecordLabel, gate: GateParams) -> Self {
        TomographySetup { label, gate, mapping: MappingPulse::Ideal, pulse_rabi: 2.0 * PI * 100e3, step: None }
    }
}

/// Exact outcome probabilities `(initial, final)` of a setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TomographyProbabilities {
    pub initial: [f64; 3],
    pub final_pops: [f64; 3],
}

pub(crate) fn pulse_unitary(p: &SquarePulse) -> Mat4 {
    expm_hermitian(&hamiltonian_matrix(&p.on_fields()), p.duration())
}

pub(crate) fn transfer(lower: Level, rabi: f64, phase: f64, area: f64) -> Result<SquarePulse> {
    SquarePulse::with_area(lower, rabi, phase, area)
}

pub(crate) fn preparation_unitary(prep: Preparation, rabi: f64) -> Result<Mat4> {
    let to_zero = pulse_unitary(&transfer(Level::Zero, rabi, 0.0, PI)?);
    let (theta, phi) = prep.angles();
    if theta == 0.0 {
        return Ok(to_zero);
    }
    // |u> -> cos(theta/2)|u> - i e^{i phi} sin(theta/2)|1>, then |u> -> -i|0>
    Ok(to_zero * pulse_unitary(&transfer(Level::One, rabi, -phi, theta)?))
}

/// Phase of the analysis pulse for one axis (`None` for `z`).
fn analysis_phase(axis: usize, frame: AnalysisFrame) -> Option<f64> {
    let base = match axis {
        0 => -1.5 * PI,
        1 => 0.0,
        _ => return None,
    };
    Some(base - frame.rotation())
}

fn measure(rho: &Mat4, setup: &TomographySetup, noise: &NoiseModel) -> Result<[f64; 3]> {
    let mapped = match setup.mapping {
        MappingPulse::Ideal => {
            let r = mapping_unitary();
            r.matrix() * rho * r.matrix().adjoint()
        }
        MappingPulse::Finite { rabi } => {
            let pulse = transfer(Level::Zero, rabi, 0.0, PI)?;
            let step = default_step(&pulse, &noise.shifts);
            lindblad_channel(&pulse, noise, step)?.apply_matrix(rho)
        }
    };
    let mut out = [0.0; 3];
    for (axis, slot) in out.iter_mut().enumerate() {
        let final_rho = match analysis_phase(axis, setup.label.frame) {
            Some(phase) => {
                let u = pulse_unitary(&transfer(Level::One, setup.pulse_rabi, phase, FRAC_PI_2)?);
                u * mapped * u.adjoint()
            }
            None => mapped,
        };
        let pu = final_rho[(3, 3)].re;
        *slot = (1.0 - pu).clamp(0.0, 1.0);
    }
    Ok(out)
}

fn gate_channel(schedule: &PulseSchedule, noise: &NoiseModel, step: f64) -> Result<QubitChannel> {
    if noise.is_dissipative() {
        lindblad_channel(schedule, noise, step)
    } else {
        Ok(QubitChannel::from_unitary(&propagator(schedule, &noise.shifts, step)?))
    }
}

/// Outcome probabilities of the preparation alone and of preparation
/// followed by the gate.
pub fn tomography_probabilities(setup: &TomographySetup, noise: &NoiseModel) -> Result<TomographyProbabilities> {
    noise.validate()?;
    let u = Level::Upper.index();
    let mut start = Mat4::zeros();
    start[(u, u)] = C64::from(1.0);
    let prep = preparation_unitary(setup.label.prep, setup.pulse_rabi)?;
    let prepared = prep * start * prep.adjoint();
    let schedule = full_gate_schedule(&setup.gate);
    let step = setup.step.unwrap_or_else(|| default_step(&schedule, &noise.shifts));
    let after = if schedule.duration() > 0.0 {
        gate_channel(&schedule, noise, step)?.apply_matrix(&prepared)
    } else {
        prepared
    };
    Ok(TomographyProbabilities { initial: measure(&prepared, setup, noise)?, final_pops: measure(&after, setup, noise)? })
}

/// Draws a record from exact probabilities.
pub fn sample_record(
    label: RecordLabel,
    probs: &TomographyProbabilities,
    shots: u64,
    rng: &mut ChaCha8Rng,
) -> Result<TomographyRecord> {
    let mut draw = |p: &[f64; 3]| -> Result<[f64; 3]> {
        Ok([
            sample_population_with(rng, p[0], shots)?,
            sample_population_with(rng, p[1], shots)?,
            sample_population_with(rng, p[2], shots)?,
        ])
    };
    let initial = draw(&probs.initial)?;
    let final_pops = draw(&probs.final_pops)?;
    TomographyRecord::new(label, initial, final_pops, shots)
}

/// End-to-end simulated experiment. `shots = None` returns the exact
/// probabilities as a record with a nominal shot count of one.
pub fn simulate_tomography(
    setup: &TomographySetup,
    noise: &NoiseModel,
    shots: Option<u64>,
    seed: u64,
) -> Result<TomographyRecord> {
    let probs = tomography_probabilities(setup, noise)?;
    match shots {
        Some(n) => sample_record(setup.label, &probs, n, &mut stream_rng(seed, 0)),
        None => TomographyRecord::new(setup.label, probs.initial, probs.final_pops, 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{unitarity_deviation, QuantumState, ONE};
    use proptest::prelude::*;

    fn table1() -> Vec<TomographyRecord> {
        vec![
            TomographyRecord::new(RecordLabel::standard(GateKind::XPi), [0.510, 0.549, 0.026], [0.463, 0.555, 0.985], 1500)
                .unwrap(),
            TomographyRecord::new(RecordLabel::standard(GateKind::ZPi), [0.509, 0.045, 0.502], [0.472, 0.973, 0.499], 1500)
                .unwrap(),
            TomographyRecord::new(
                RecordLabel::standard(GateKind::Hadamard),
                [0.497, 0.515, 0.025],
                [0.485, 0.989, 0.488],
                1500,
            )
            .unwrap(),
        ]
    }

    #[test]
    fn mapping_properties() {
        let r = mapping_unitary();
        let m = r.matrix();
        assert!(unitarity_deviation(m) < 1e-15);
        let out = m * QuantumState::basis(Level::Upper).amplitudes();
        assert!((out[0] - C64::new(0.0, -1.0)).norm() < 1e-15);
        let sq = m * m;
        let mut want = Mat4::identity();
        want[(0, 0)] = -ONE;
        want[(3, 3)] = -ONE;
        assert!((sq - want).norm() < 1e-15);
    }

    #[test]
    fn reconstruction_examples() {
        let r = reconstruct_observed_density(0.5, 0.5, 0.0);
        assert!((r.density.matrix() - outer(Level::Upper, Level::Upper)).norm() < 1e-15);
        let r = reconstruct_observed_density(0.510, 0.549, 0.026);
        assert!((r.bloch.x + 0.020).abs() < 1e-12);
        assert!((r.bloch.y + 0.098).abs() < 1e-12);
        assert!((r.bloch.z - 0.948).abs() < 1e-12);
        let r = reconstruct_observed_density(0.5, 0.5, 0.5);
        let mut half = Mat4::zeros();
        half[(1, 1)] = C64::from(0.5);
        half[(3, 3)] = C64::from(0.5);
        assert!((r.density.matrix() - half).norm() < 1e-15);
        assert!(!reconstruct_observed_density(0.0, 0.0, 0.0).physical);
    }

    #[test]
    fn undo_mapping_examples() {
        let rho = undo_mapping(&DensityMatrix::pure(Level::Upper));
        assert!((rho.matrix() - outer(Level::Zero, Level::Zero)).norm() < 1e-15);
        let rho = undo_mapping(&DensityMatrix::pure(Level::One));
        assert!((rho.matrix() - outer(Level::One, Level::One)).norm() < 1e-15);
    }

    #[test]
    fn table2_values() {
        let t = table1();
        let fx = fidelity_closed_form(&t[0], HadamardSign::Corrected).unwrap();
        let fz = fidelity_closed_form(&t[1], HadamardSign::Corrected).unwrap();
        let fh = fidelity_closed_form(&t[2], HadamardSign::Corrected).unwrap();
        assert!((fx - 0.9659).abs() < 1e-4, "{fx}");
        assert!((fz - 0.9309).abs() < 1e-4, "{fz}");
        assert!((fh - 0.9648).abs() < 1e-4, "{fh}");
        let verbatim = fidelity_closed_form(&t[2], HadamardSign::Verbatim).unwrap();
        assert!((verbatim - 1.970).abs() < 1e-3);
        for rec in &t {
            let cf = fidelity_closed_form(rec, HadamardSign::Corrected).unwrap();
            assert!((cf - record_fidelity(rec)).abs() < 1e-12);
            let est = fidelity_variance(rec, VarianceMethod::Pairwise);
            assert!((est.ci68 - 0.038).abs() < 0.001, "{}", est.ci68);
        }
    }

    #[test]
    fn table2_ideal_columns() {
        let t = table1();
        let want = [(0.985, 0.974), (0.973, 0.955), (0.989, 0.975)];
        for (rec, (wi, wf)) in t.iter().zip(want) {
            let fi = fidelity_ideal_reference(rec, IdealSide::Initial, VarianceMethod::Pairwise);
            let ff = fidelity_ideal_reference(rec, IdealSide::Final, VarianceMethod::Pairwise);
            assert!((fi.value - wi).abs() < 0.005, "{} vs {wi}", fi.value);
            assert!((ff.value - wf).abs() < 0.005, "{} vs {wf}", ff.value);
        }
        let x_i = fidelity_ideal_reference(&t[0], IdealSide::Initial, VarianceMethod::Pairwise);
        let x_f = fidelity_ideal_reference(&t[0], IdealSide::Final, VarianceMethod::Pairwise);
        assert!((x_i.ci68 - 0.026).abs() < 0.0005, "{}", x_i.ci68);
        assert!((x_f.ci68 - 0.027).abs() < 0.0005, "{}", x_f.ci68);
    }

    #[test]
    fn closed_form_rejects_half_pi() {
        let rec = TomographyRecord::new(
            RecordLabel::half_pi(GateKind::XHalfPi, Preparation::PlusX),
            [0.5; 3],
            [0.5; 3],
            10,
        )
        .unwrap();
        assert!(matches!(fidelity_closed_form(&rec, HadamardSign::Corrected), Err(Error::Domain(_))));
    }

    #[test]
    fn table4_values() {
        let rows = [
            (GateKind::XHalfPi, Preparation::PlusX, [0.009, 0.505, 0.515], [0.029, 0.611, 0.622], 0.960, 0.039),
            (GateKind::XHalfPi, Preparation::Zero, [0.526, 0.540, 0.006], [0.595, 0.916, 0.363], 0.905, 0.037),
            (GateKind::ZHalfPi, Preparation::PlusX, [0.009, 0.505, 0.515], [0.592, 0.055, 0.515], 0.936, 0.038),
            (GateKind::ZHalfPi, Preparation::Zero, [0.526, 0.540, 0.006], [0.546, 0.534, 0.041], 0.952, 0.038),
        ];
        for (gate, prep, i, f, want, ci) in rows {
            let rec = TomographyRecord::new(RecordLabel::half_pi(gate, prep), i, f, 1500).unwrap();
            let est = fidelity_variance(&rec, VarianceMethod::Pairwise);
            assert!((est.value - want).abs() < 0.005, "{gate:?} {prep:?}: {}", est.value);
            assert!((est.ci68 - ci).abs() < 0.001, "{gate:?} {prep:?}: {}", est.ci68);
        }
    }

    #[test]
    fn variance_edge_cases() {
        let rec =
            TomographyRecord::new(RecordLabel::standard(GateKind::XPi), [0.5, 0.5, 0.0], [0.5, 0.5, 1.0], 1500).unwrap();
        let det = TomographyRecord::new(RecordLabel::standard(GateKind::XPi), [0.0, 1.0, 0.0], [1.0, 0.0, 1.0], 100)
            .unwrap();
        assert_eq!(fidelity_variance(&det, VarianceMethod::Pairwise).variance, 0.0);
        assert_eq!(fidelity_variance(&det, VarianceMethod::FirstOrder).variance, 0.0);
        for method in [VarianceMethod::Pairwise, VarianceMethod::FirstOrder] {
            let a = fidelity_variance(&table1()[0], method);
            let b = fidelity_variance(&table1()[0].with_shots(6000).unwrap(), method);
            assert!((a.ci68 / b.ci68 - 2.0).abs() < 1e-12);
            let e = fidelity_variance(&rec, method);
            assert!((e.ci68 * e.ci68 - e.variance).abs() < 1e-15);
        }
    }

    #[test]
    fn z_and_x_variances_coincide() {
        for rec in table1() {
            let as_x = TomographyRecord::new(RecordLabel::standard(GateKind::XPi), rec.initial, rec.final_pops, 1500)
                .unwrap();
            let as_z = TomographyRecord::new(RecordLabel::standard(GateKind::ZPi), rec.initial, rec.final_pops, 1500)
                .unwrap();
            let vx = fidelity_variance(&as_x, VarianceMethod::Pairwise).variance;
            let vz = fidelity_variance(&as_z, VarianceMethod::Pairwise).variance;
            assert!((vx - vz).abs() < 1e-15);
        }
    }

    #[test]
    fn pairwise_matches_explicit_sums() {
        let rec = &table1()[2];
        let v = |p: f64| p * (1.0 - p) / 1500.0;
        let [xi, yi, zi] = rec.initial;
        let [xf, yf, zf] = rec.final_pops;
        let term = |a: f64, b: f64| v(a) + v(b) + 4.0 * a * a * v(b) + 4.0 * b * b * v(a);
        let want = term(xi, xf) + term(yi, zf) + term(zi, yf);
        let got = fidelity_variance(rec, VarianceMethod::Pairwise).variance;
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn sampling_edges() {
        assert_eq!(sample_populations(0.0, 1500, 3).unwrap(), 0.0);
        assert_eq!(sample_populations(1.0, 1500, 3).unwrap(), 1.0);
        assert!(sample_populations(1.5, 10, 3).is_err());
        assert_eq!(sample_populations(0.3, 1500, 7).unwrap(), sample_populations(0.3, 1500, 7).unwrap());
    }

    #[test]
    fn sampling_statistics() {
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|s| sample_populations(0.5, 1500, s).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.5).abs() < 0.005);
        assert!((var / (0.25 / 1500.0) - 1.0).abs() < 0.1, "{var}");
    }

    fn identity_gate() -> GateParams {
        GateParams::from_peaks(2.0 * PI * 125e3, 2.0 * PI * 125e3, 2.0 * PI * 170e3, 120e-6, 0.85)
            .unwrap()
            .with_phase_step(0.0)
    }

    #[test]
    fn identity_gate_pattern() {
        let off = GateParams { omega_max: 0.0, omega2_max: 0.0, ..identity_gate() };
        let setup = TomographySetup::new(RecordLabel::standard(GateKind::XPi), off);
        let p = tomography_probabilities(&setup, &NoiseModel::noiseless()).unwrap();
        for (a, b) in p.initial.iter().chain(&p.final_pops).zip([0.5, 0.5, 0.0, 0.5, 0.5, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        // a zero phase step closes the loop without a rotation
        let setup = TomographySetup::new(RecordLabel::standard(GateKind::XPi), identity_gate());
        let p = tomography_probabilities(&setup, &NoiseModel::noiseless()).unwrap();
        for (a, b) in p.final_pops.iter().zip([0.5, 0.5, 0.0]) {
            assert!((a - b).abs() < 0.03, "{:?}", p.final_pops);
        }
    }

    #[test]
    fn simulated_preparations_reconstruct() {
        for frame in [AnalysisFrame::Lab, AnalysisFrame::Quarter] {
            for prep in [Preparation::Zero, Preparation::PlusX, Preparation::Angles { theta: 1.0, phi: 0.6 }] {
                let label = RecordLabel { gate: GateKind::XPi, prep, frame };
                let setup = TomographySetup::new(label, identity_gate());
                let p = tomography_probabilities(&setup, &NoiseModel::noiseless()).unwrap();
                let rho = qubit_density(&p.initial, frame);
                assert!((rho - prep.density()).norm() < 1e-12, "{frame:?} {prep:?}");
                assert!((ideal_populations(&prep.density(), frame)[2] - p.initial[2]).abs() < 1e-12);
                let ip = ideal_populations(&prep.density(), frame);
                for k in 0..3 {
                    assert!((ip[k] - p.initial[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn simulated_x_and_hadamard_runs() {
        let x = GateParams::from_peaks(2.0 * PI * 125e3, 2.0 * PI * 125e3, 2.0 * PI * 170e3, 120e-6, 0.85).unwrap();
        let rec = simulate_tomography(
            &TomographySetup::new(RecordLabel::standard(GateKind::XPi), x),
            &NoiseModel::noiseless(),
            None,
            0,
        )
        .unwrap();
        assert!(fidelity_closed_form(&rec, HadamardSign::Corrected).unwrap() >= 0.99);

        let (s, c) = (3.0 * PI / 8.0).sin_cos();
        let om = 2.0 * PI * 176.8e3;
        let h = GateParams::from_peaks(om * c, om * s, 2.0 * PI * 170e3, 120e-6, 0.85).unwrap();
        let rec = simulate_tomography(
            &TomographySetup::new(RecordLabel::standard(GateKind::Hadamard), h),
            &NoiseModel::noiseless(),
            None,
            0,
        )
        .unwrap();
        assert!(record_fidelity(&rec) >= 0.99);
    }

    #[test]
    fn finite_mapping_equals_ideal_without_noise() {
        let mut setup = TomographySetup::new(RecordLabel::standard(GateKind::ZPi), identity_gate());
        let a = tomography_probabilities(&setup, &NoiseModel::noiseless()).unwrap();
        setup.mapping = MappingPulse::Finite { rabi: 2.0 * PI * 100e3 };
        let b = tomography_probabilities(&setup, &NoiseModel::noiseless()).unwrap();
        for k in 0..3 {
            assert!((a.final_pops[k] - b.final_pops[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn label_round_trip() {
        for s in ["x-pi", "z-pi", "hadamard", "x-halfpi(+x)", "z-halfpi(+z)", "x-pi@quarter", "z-halfpi(+x)@lab", "x-pi(1/0.6)"] {
            let l: RecordLabel = s.parse().unwrap();
            assert_eq!(l.to_string(), s);
        }
        assert!("y-pi".parse::<RecordLabel>().is_err());
        assert!("x-halfpi".parse::<RecordLabel>().is_err());
        assert!("x-pi@tilted".parse::<RecordLabel>().is_err());
    }

    #[test]
    fn record_file_echo() {
        let text = "# table\nx-pi,0.510,0.549,0.026,0.463,0.555,0.985,1500\n\nz-pi, 0.509,0.045,0.502,0.472,0.973,0.499,1500 # z\n";
        let recs = parse_records_str(text).unwrap();
        assert_eq!(recs.len(), 2);
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let out = String::from_utf8(buf).unwrap();
        assert_eq!(
            out,
            "x-pi,0.510,0.549,0.026,0.463,0.555,0.985,1500\nz-pi, 0.509,0.045,0.502,0.472,0.973,0.499,1500\n"
        );
        assert_eq!(parse_records_str(&out).unwrap(), recs);
    }

    #[test]
    fn record_file_errors() {
        let e = parse_records_str("x-pi,0.5,0.5,0.5,0.5,0.5,0.5,1500\nx-pi,0.5,0.5\n").unwrap_err();
        assert_eq!(e, Error::Parse { line: 2, message: "expected 8 comma-separated fields, found 3".into() });
        let e = parse_records_str("x-pi,0.5,0.5,1.5,0.5,0.5,0.5,1500").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = parse_records_str("x-pi,0.5,0.5,0.5,0.5,0.5,0.5,0").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        assert!(parse_records_str("").unwrap().is_empty());
    }

    fn brute_force_frame_rule(r: [f64; 3]) -> [f64; 3] {
        let obs = bloch_to_density_unchecked(&BlochVector::from_array(r), LevelPair::readout());
        let m = mapping_unitary();
        let rho = m.matrix().adjoint() * obs.matrix() * m.matrix();
        let block: Mat2 = rho.fixed_view::<2, 2>(0, 0).into_owned();
        bloch_of_2x2(&block).as_array()
    }

    proptest! {
        #[test]
        fn frame_rule_matches_conjugation(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let q = brute_force_frame_rule([x, y, z]);
            prop_assert!((q[0] - y).abs() < 1e-12);
            prop_assert!((q[1] + x).abs() < 1e-12);
            prop_assert!((q[2] - z).abs() < 1e-12);
        }

        #[test]
        fn undo_mapping_is_a_similarity(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let obs = bloch_to_density_unchecked(&BlochVector::unchecked(x, y, z), LevelPair::readout());
            let back = undo_mapping(&obs);
            prop_assert!((back.trace() - obs.trace()).norm() < 1e-12);
            prop_assert!(back.hermiticity_deviation() < 1e-12);
            let eig = |m: &Mat4| {
                let mut v: Vec<f64> = nalgebra::SymmetricEigen::new(*m).eigenvalues.iter().copied().collect();
                v.sort_by(f64::total_cmp);
                v
            };
            for (a, b) in eig(obs.matrix()).iter().zip(eig(back.matrix())) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn closed_forms_match_trace(p in prop::array::uniform6(0.0f64..=1.0), which in 0usize..3) {
            let gate = [GateKind::XPi, GateKind::ZPi, GateKind::Hadamard][which];
            let rec = TomographyRecord::new(RecordLabel::standard(gate), [p[0], p[1], p[2]], [p[3], p[4], p[5]], 100).unwrap();
            let cf = fidelity_closed_form(&rec, HadamardSign::Corrected).unwrap();
            prop_assert!((cf - record_fidelity(&rec)).abs() < 1e-9);
        }

        #[test]
        fn perfect_gate_gives_unit_fidelity(theta in 0.0f64..PI, phi in 0.0f64..(2.0 * PI), which in 0usize..5) {
            let gate = [GateKind::XPi, GateKind::ZPi, GateKind::Hadamard, GateKind::XHalfPi, GateKind::ZHalfPi][which];
            let u = gate.target();
            let psi = nalgebra::Vector2::new(C64::from((theta / 2.0).cos()), C64::from_polar((theta / 2.0).sin(), phi));
            let rho = psi * psi.adjoint();
            prop_assert!((fidelity_trace(&rho, &(u * rho * u.adjoint()), &u) - 1.0).abs() < 1e-12);
        }
    }
}
