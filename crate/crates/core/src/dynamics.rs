//! Time evolution of the tripod under a drive: Schrödinger propagation and
//! a Lindblad master equation with level-projector dephasing.
//!
//! Both integrators split the drive at its breakpoints, take uniform steps
//! no longer than the requested step inside each segment, and multiply the
//! exact exponentials of the midpoint generator.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::{Drive, PulseSchedule, Window};
use crate::quantum::{
    expm_hermitian, hermiticity_deviation, unitarity_deviation, DensityMatrix, Level, Mat2, Mat4, QuantumState, C64,
    ONE, ZERO,
};
use crate::tripod::{dark_bright_basis, hamiltonian_matrix, FieldAmplitudes, TripodAngles};

type Super = SMatrix<C64, 16, 16>;
type VecRho = SMatrix<C64, 16, 1>;

/// Largest allowed phase advance per step, `step * rate`.
pub const MAX_STEP_PHASE: f64 = 0.05;
/// Minimum number of steps across a drive.
pub const MIN_STEPS: f64 = 1e3;

/// An off-resonant coupling that shifts a lower level by
/// `(scale |Omega_source(t)|)^2 / (4 Delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarkCoupling {
    /// Shifted level (one of the three lower levels).
    pub target: Level,
    /// Drive line whose envelope sets the coupling: the `|u>-|k>` line with `k = source`.
    pub source: Level,
    /// Ratio of the off-resonant Rabi frequency to the drive's.
    pub scale: f64,
    /// Detuning of the off-resonant coupling (rad/s), nonzero.
    pub detuning: f64,
}

impl StarkCoupling {
    pub fn validate(&self) -> Result<()> {
        if self.target == Level::Upper || self.source == Level::Upper {
            return Err(Error::Config("Stark couplings act on the lower levels and drive lines".into()));
        }
        if !(self.detuning.is_finite() && self.detuning != 0.0) {
            return Err(Error::Config(format!("Stark coupling needs a nonzero detuning, got {}", self.detuning)));
        }
        if !self.scale.is_finite() {
            return Err(Error::Config("Stark scale must be finite".into()));
        }
        Ok(())
    }

    fn source_rabi(&self, f: &FieldAmplitudes) -> f64 {
        match self.source {
            Level::Zero => f.omega0.abs(),
            Level::One => f.omega1.norm(),
            Level::Two => f.omega2.norm(),
            Level::Upper => 0.0,
        }
    }

    /// Instantaneous shift for the given drive fields.
    pub fn shift(&self, f: &FieldAmplitudes) -> f64 {
        let om = self.scale * self.source_rabi(f);
        om * om / (4.0 * self.detuning)
    }
}

/// Static and AC-Stark level shifts added to the lower levels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShiftModel {
    pub static_offsets: [f64; 3],
    pub stark: Vec<StarkCoupling>,
}

impl ShiftModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.static_offsets.iter().all(|d| *d == 0.0) && self.stark.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.static_offsets.iter().all(|d| d.is_finite()) {
            return Err(Error::Config("static offsets must be finite".into()));
        }
        self.stark.iter().try_for_each(StarkCoupling::validate)
    }

    /// Level offsets `delta_k` for the given drive fields.
    pub fn offsets(&self, f: &FieldAmplitudes) -> [f64; 3] {
        let mut d = self.static_offsets;
        for c in &self.stark {
            d[c.target.index()] += c.shift(f);
        }
        d
    }

    /// Bound on `|delta_k|` over a drive.
    pub fn peak_offset(&self, drive: &dyn Drive) -> f64 {
        let mut d = self.static_offsets.map(f64::abs);
        for c in &self.stark {
            let om = c.scale * drive.peak_coupling(c.source);
            d[c.target.index()] += om * om / (4.0 * c.detuning.abs());
        }
        d.into_iter().fold(0.0, f64::max)
    }

    fn apply(&self, mut f: FieldAmplitudes) -> FieldAmplitudes {
        if !self.is_zero() {
            let d = self.offsets(&f);
            for k in 0..3 {
                f.level_offsets[k] += d[k];
            }
        }
        f
    }
}

/// Dephasing rates and level shifts for the master equation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    /// `gamma_k` (rad/s) of the projector `|k><k|`, in level order `0, 1, 2, u`.
    pub dephasing: [f64; 4],
    pub shifts: ShiftModel,
}

/// Default relative magnetic sensitivities of the three lower levels.
pub const DEFAULT_ZEEMAN_WEIGHTS: [f64; 3] = [1.0, 1.0, 1.0];

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self::default()
    }

    /// Rates from a laser linewidth and a magnetic-field fluctuation scale,
    /// both in Hz. The linewidth dephases `|u>`; the magnetic scale dephases
    /// each lower level in proportion to its Zeeman weight.
    pub fn from_linewidths(laser_linewidth_hz: f64, magnetic_hz: f64, zeeman_weights: [f64; 3]) -> Self {
        let w = 2.0 * PI;
        NoiseModel {
            dephasing: [
                w * magnetic_hz * zeeman_weights[0],
                w * magnetic_hz * zeeman_weights[1],
                w * magnetic_hz * zeeman_weights[2],
                w * laser_linewidth_hz,
            ],
            shifts: ShiftModel::none(),
        }
    }

    pub fn with_shifts(self, shifts: ShiftModel) -> Self {
        NoiseModel { shifts, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.dephasing.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
            return Err(Error::Config(format!("dephasing rates must be finite and >= 0, got {g}")));
        }
        self.shifts.validate()
    }

    pub fn is_dissipative(&self) -> bool {
        self.dephasing.iter().any(|g| *g > 0.0)
    }
}

/// State at the end of (or during) an evolution.
#[derive(Debug, Clone, PartialEq)]
pub enum EvolvedState {
    Pure(QuantumState),
    Mixed(DensityMatrix),
}

impl EvolvedState {
    pub fn populations(&self) -> [f64; 4] {
        match self {
            EvolvedState::Pure(s) => s.populations(),
            EvolvedState::Mixed(r) => r.populations(),
        }
    }

    pub fn leakage(&self) -> f64 {
        let p = self.populations();
        p[2] + p[3]
    }

    pub fn density(&self) -> DensityMatrix {
        match self {
            EvolvedState::Pure(s) => s.density(),
            EvolvedState::Mixed(r) => r.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub state: EvolvedState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult {
    pub final_state: EvolvedState,
    /// Sampled states; empty unless recording was requested.
    pub trajectory: Vec<TrajectoryPoint>,
    /// Final `|2>` plus `|u>` population, for inputs inside `{|0>, |1>}`.
    pub leakage: Option<f64>,
    /// `<i|U|j>` for `i, j` in `{0, 1}`; unitary runs only.
    pub qubit_map: Option<Mat2>,
}

/// Step size used when none is configured: well inside the precondition and
/// small enough for the step-halving check on the gate presets.
pub fn default_step(drive: &dyn Drive, shifts: &ShiftModel) -> f64 {
    let rate = drive.peak_rate().max(shifts.peak_offset(drive));
    let by_rate = if rate > 0.0 { 0.005 / rate } else { f64::INFINITY };
    (drive.duration() / 2e4).min(by_rate)
}

fn check_step(drive: &dyn Drive, shifts: &ShiftModel, step: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("step must be positive, got {step}")));
    }
    let dur = drive.duration();
    if step > dur / MIN_STEPS * (1.0 + 1e-12) {
        return Err(Error::Config(format!("step {step:e} s exceeds duration/1e3 = {:e} s", dur / MIN_STEPS)));
    }
    let rate = drive.peak_rate().max(shifts.peak_offset(drive));
    if step * rate > MAX_STEP_PHASE * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "step {step:e} s times peak rate {rate:e} rad/s exceeds {MAX_STEP_PHASE}"
        )));
    }
    Ok(())
}

/// `(start, length)` of every step.
fn step_plan(drive: &dyn Drive, step: f64) -> Vec<(f64, f64)> {
    let dur = drive.duration();
    let mut nodes = vec![0.0];
    let mut bps = drive.breakpoints();
    bps.retain(|t| *t > 0.0 && *t < dur);
    bps.sort_by(f64::total_cmp);
    nodes.extend(bps);
    nodes.push(dur);
    let mut plan = Vec::new();
    for w in nodes.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let n = (len / step).ceil().max(1.0) as usize;
        let h = len / n as f64;
        plan.extend((0..n).map(|i| (w[0] + i as f64 * h, h)));
    }
    plan
}

fn midpoint_hamiltonian(drive: &dyn Drive, shifts: &ShiftModel, start: f64, h: f64) -> Mat4 {
    hamiltonian_matrix(&shifts.apply(drive.fields(start + 0.5 * h)))
}

fn checked_plan(drive: &dyn Drive, shifts: &ShiftModel, step: f64) -> Result<Vec<(f64, f64)>> {
    shifts.validate()?;
    if drive.duration() == 0.0 {
        return Ok(Vec::new());
    }
    check_step(drive, shifts, step)?;
    Ok(step_plan(drive, step))
}

fn check_norm(u: &Mat4) -> Result<()> {
    let dev = unitarity_deviation(u);
    if dev > 1e-6 {
        return Err(Error::Integration(format!("propagator lost unitarity ({dev:e})")));
    }
    Ok(())
}

/// Full 4x4 propagator of a drive.
pub fn propagator(drive: &dyn Drive, shifts: &ShiftModel, step: f64) -> Result<Mat4> {
    let mut u = Mat4::identity();
    for (t, h) in checked_plan(drive, shifts, step)? {
        u = expm_hermitian(&midpoint_hamiltonian(drive, shifts, t, h), h) * u;
    }
    check_norm(&u)?;
    Ok(u)
}

/// `M[i][j] = <i|U|j>` on the qubit manifold.
pub fn extract_qubit_map(drive: &dyn Drive, shifts: &ShiftModel, step: f64) -> Result<Mat2> {
    Ok(qubit_block(&propagator(drive, shifts, step)?))
}

fn qubit_block(u: &Mat4) -> Mat2 {
    u.fixed_view::<2, 2>(0, 0).into_owned()
}

fn leakage_if_qubit(psi0: &QuantumState, fin: &EvolvedState) -> Option<f64> {
    psi0.in_qubit_manifold(1e-12).then(|| fin.leakage())
}

pub fn evolve_schrodinger(
    drive: &dyn Drive,
    psi0: &QuantumState,
    shifts: &ShiftModel,
    step: f64,
) -> Result<EvolutionResult> {
    evolve_schrodinger_recorded(drive, psi0, shifts, step, 0)
}

/// As [`evolve_schrodinger`], keeping the state every `every` steps
/// (0 records nothing).
pub fn evolve_schrodinger_recorded(
    drive: &dyn Drive,
    psi0: &QuantumState,
    shifts: &ShiftModel,
    step: f64,
    every: usize,
) -> Result<EvolutionResult> {
    let plan = checked_plan(drive, shifts, step)?;
    let mut u = Mat4::identity();
    let mut trajectory = Vec::new();
    if every > 0 {
        trajectory.push(TrajectoryPoint { time: 0.0, state: EvolvedState::Pure(psi0.clone()) });
    }
    for (i, &(t, h)) in plan.iter().enumerate() {
        u = expm_hermitian(&midpoint_hamiltonian(drive, shifts, t, h), h) * u;
        if every > 0 && ((i + 1) % every == 0 || i + 1 == plan.len()) {
            trajectory.push(TrajectoryPoint { time: t + h, state: EvolvedState::Pure(psi0.evolve(&u)) });
        }
    }
    check_norm(&u)?;
    let psi = psi0.evolve(&u);
    let drift = (psi.norm() - psi0.norm()).abs();
    if drift > 1e-6 {
        return Err(Error::Integration(format!("norm drifted by {drift:e}")));
    }
    let final_state = EvolvedState::Pure(psi);
    Ok(EvolutionResult {
        leakage: leakage_if_qubit(psi0, &final_state),
        final_state,
        trajectory,
        qubit_map: Some(qubit_block(&u)),
    })
}

fn vec_index(i: usize, j: usize) -> usize {
    i + 4 * j
}

/// Column-stacked Liouvillian for `H` and projector dephasing.
fn liouvillian(h: &Mat4, gamma: &[f64; 4]) -> Super {
    let mut g = Super::zeros();
    let mi = C64::new(0.0, -1.0);
    for i in 0..4 {
        for j in 0..4 {
            let row = vec_index(i, j);
            for k in 0..4 {
                // -i H rho: H_ik rho_kj
                g[(row, vec_index(k, j))] += mi * h[(i, k)];
                // +i rho H: rho_ik H_kj
                g[(row, vec_index(i, k))] -= mi * h[(k, j)];
            }
            if i != j {
                g[(row, row)] += C64::from(-0.5 * (gamma[i] + gamma[j]));
            }
        }
    }
    g
}

fn vectorize(rho: &Mat4) -> VecRho {
    VecRho::from_fn(|r, _| rho[(r % 4, r / 4)])
}

fn unvectorize(v: &VecRho) -> Mat4 {
    Mat4::from_fn(|i, j| v[vec_index(i, j)])
}

fn lindblad_steps(
    drive: &dyn Drive,
    noise: &NoiseModel,
    step: f64,
    mut visit: impl FnMut(usize, f64, &Super),
) -> Result<Super> {
    noise.validate()?;
    let plan = checked_plan(drive, &noise.shifts, step)?;
    let mut s = Super::identity();
    for (i, &(t, h)) in plan.iter().enumerate() {
        let gen = liouvillian(&midpoint_hamiltonian(drive, &noise.shifts, t, h), &noise.dephasing);
        s = (gen * C64::from(h)).exp() * s;
        visit(i, t + h, &s);
    }
    Ok(s)
}

fn check_density(rho: &Mat4) -> Result<DensityMatrix> {
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(Error::Integration(format!("trace drifted to {tr}")));
    }
    let herm = hermiticity_deviation(rho);
    if herm > 1e-9 {
        return Err(Error::Integration(format!("lost Hermiticity ({herm:e})")));
    }
    let r = DensityMatrix::from_matrix_unchecked((rho + rho.adjoint()) * C64::from(0.5));
    let min = r.min_eigenvalue();
    if min < -1e-6 {
        return Err(Error::Integration(format!("negative eigenvalue {min:e}")));
    }
    Ok(r)
}

pub fn evolve_lindblad(
    drive: &dyn Drive,
    rho0: &DensityMatrix,
    noise: &NoiseModel,
    step: f64,
) -> Result<EvolutionResult> {
    evolve_lindblad_recorded(drive, rho0, noise, step, 0)
}

pub fn evolve_lindblad_recorded(
    drive: &dyn Drive,
    rho0: &DensityMatrix,
    noise: &NoiseModel,
    step: f64,
    every: usize,
) -> Result<EvolutionResult> {
    let v0 = vectorize(rho0.matrix());
    let mut trajectory = Vec::new();
    if every > 0 {
        trajectory.push(TrajectoryPoint { time: 0.0, state: EvolvedState::Mixed(rho0.clone()) });
    }
    let n_steps = if drive.duration() == 0.0 { 0 } else { step_plan(drive, step).len() };
    let s = lindblad_steps(drive, noise, step, |i, t, s| {
        if every > 0 && ((i + 1) % every == 0 || i + 1 == n_steps) {
            let r = DensityMatrix::from_matrix_unchecked(unvectorize(&(s * v0)));
            trajectory.push(TrajectoryPoint { time: t, state: EvolvedState::Mixed(r) });
        }
    })?;
    let rho = check_density(&unvectorize(&(s * v0)))?;
    let in_qubit = rho0.leakage().abs() <= 1e-12;
    let final_state = EvolvedState::Mixed(rho);
    Ok(EvolutionResult {
        leakage: in_qubit.then(|| final_state.leakage()),
        final_state,
        trajectory,
        qubit_map: None,
    })
}

/// A linear map on 4x4 density matrices produced by a Lindblad evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitChannel {
    superop: Super,
}

impl QubitChannel {
    pub fn from_unitary(u: &Mat4) -> Self {
        let uc = u.conjugate();
        // vec(U rho U^dagger) = (conj(U) kron U) vec(rho)
        QubitChannel { superop: uc.kronecker(u) }
    }

    pub fn apply_matrix(&self, rho: &Mat4) -> Mat4 {
        unvectorize(&(self.superop * vectorize(rho)))
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        DensityMatrix::from_matrix_unchecked(self.apply_matrix(rho.matrix()))
    }

    /// Channel applied after `self`.
    pub fn then(&self, next: &QubitChannel) -> QubitChannel {
        QubitChannel { superop: next.superop * self.superop }
    }

    /// Average fidelity over qubit-manifold pure inputs against a 2x2 target;
    /// population left outside the manifold counts as error.
    pub fn average_fidelity(&self, target: &Mat2) -> f64 {
        let mut coherent = ZERO;
        let mut kept = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let mut e = Mat4::zeros();
                e[(i, j)] = ONE;
                let out = self.apply_matrix(&e);
                let block: Mat2 = out.fixed_view::<2, 2>(0, 0).into_owned();
                let rotated = target.adjoint() * block * target;
                coherent += rotated[(i, j)];
                if i == j {
                    kept += block.trace().re;
                }
            }
        }
        (coherent.re + kept) / 6.0
    }
}

/// Channel of a drive under the master equation.
pub fn lindblad_channel(drive: &dyn Drive, noise: &NoiseModel, step: f64) -> Result<QubitChannel> {
    let superop = lindblad_steps(drive, noise, step, |_, _, _| {})?;
    let ch = QubitChannel { superop };
    for level in [Level::Zero, Level::One] {
        check_density(&ch.apply_matrix(DensityMatrix::pure(level).matrix()))?;
    }
    Ok(ch)
}

/// Population lost from the adiabatic dark state `|D2>` over the first
/// half of the gate.
pub fn dark_state_leakage(schedule: &PulseSchedule, step: f64) -> Result<f64> {
    let p = schedule.params();
    let angles = |theta2| TripodAngles { theta1: p.theta1, phi1: p.phi1, theta2, phi2: 0.0 };
    let t3 = schedule.midpoint();
    let start = dark_bright_basis(&angles(crate::pulse::mixing_angle(p, 0.0))).d2;
    let end = dark_bright_basis(&angles(crate::pulse::mixing_angle(p, t3))).d2;
    let half = Window::new(schedule, 0.0, t3)?;
    let res = evolve_schrodinger(&half, &start, &ShiftModel::none(), step)?;
    let EvolvedState::Pure(psi) = res.final_state else { unreachable!("unitary run") };
    Ok((1.0 - end.inner(&psi).norm_sqr()).max(0.0))
}

/// Writes a trajectory as `t` (us) and the four populations, tab separated.
pub fn write_trajectory<W: Write>(mut out: W, trajectory: &[TrajectoryPoint]) -> io::Result<()> {
    writeln!(out, "t_us\tp0\tp1\tp2\tpu")?;
    for pt in trajectory {
        let p = pt.state.populations();
        writeln!(out, "{:.6}\t{:.9}\t{:.9}\t{:.9}\t{:.9}", pt.time * 1e6, p[0], p[1], p[2], p[3])?;
    }
    Ok(())
}
