//! The tripod Hamiltonian, its dark/bright basis and the ideal gate map.

use nalgebra::Vector4;

use crate::error::{Error, Result};
use crate::quantum::{outer, pauli_x, pauli_y, pauli_z, Level, Mat2, Mat4, Operator, QuantumState, C64, I, ONE, ZERO};

/// Rabi frequencies and detunings at one instant (rad/s, hbar = 1).
///
/// `level_offsets` adds `delta_k |k><k|` for the three lower levels; they
/// stay zero in the ideal model and carry AC-Stark or static shifts otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldAmplitudes {
    pub omega0: f64,
    pub omega1: C64,
    pub omega2: C64,
    pub detuning: f64,
    pub level_offsets: [f64; 3],
}

impl FieldAmplitudes {
    /// Common envelope `Omega = (Omega0^2 + |Omega1|^2)^(1/2)`.
    pub fn omega(&self) -> f64 {
        self.omega0.hypot(self.omega1.norm())
    }

    pub fn omega_total(&self) -> f64 {
        self.omega().hypot(self.omega2.norm())
    }

    /// Tripod angles implied by these fields.
    pub fn angles(&self) -> TripodAngles {
        let om = self.omega();
        TripodAngles {
            theta1: self.omega1.norm().atan2(self.omega0),
            phi1: if self.omega1.norm() > 0.0 { self.omega1.arg() } else { 0.0 },
            theta2: self.omega2.norm().atan2(om),
            phi2: if self.omega2.norm() > 0.0 { self.omega2.arg() } else { 0.0 },
        }
    }

    fn has_offsets(&self) -> bool {
        self.level_offsets.iter().any(|d| *d != 0.0)
    }
}

/// `H = -delta |u><u| + 1/2 sum_k (Omega_k |u><k| + h.c.) + sum_k delta_k |k><k|`.
pub fn build_hamiltonian(f: &FieldAmplitudes) -> Operator {
    Operator::hermitian(hamiltonian_matrix(f)).expect("Hamiltonian is Hermitian by construction")
}

pub(crate) fn hamiltonian_matrix(f: &FieldAmplitudes) -> Mat4 {
    let u = Level::Upper.index();
    let mut h = Mat4::zeros();
    h[(u, u)] = C64::from(-f.detuning);
    for (k, om) in [C64::from(f.omega0), f.omega1, f.omega2].into_iter().enumerate() {
        h[(u, k)] = om * 0.5;
        h[(k, u)] = om.conj() * 0.5;
        h[(k, k)] = C64::from(f.level_offsets[k]);
    }
    h
}

/// Angles parametrizing the dark/bright decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripodAngles {
    pub theta1: f64,
    pub phi1: f64,
    pub theta2: f64,
    pub phi2: f64,
}

/// The labelled states `C1, D1, C2, D2, B+, B-`.
#[derive(Debug, Clone, PartialEq)]
pub struct DarkBrightBasis {
    pub c1: QuantumState,
    pub d1: QuantumState,
    pub c2: QuantumState,
    pub d2: QuantumState,
    pub b_plus: QuantumState,
    pub b_minus: QuantumState,
}

pub fn dark_bright_basis(a: &TripodAngles) -> DarkBrightBasis {
    let (s1, c1) = a.theta1.sin_cos();
    let (s2, c2) = a.theta2.sin_cos();
    let e1 = C64::from_polar(1.0, -a.phi1);
    let e2 = C64::from_polar(1.0, -a.phi2);

    let cv1 = Vector4::new(C64::from(c1), e1 * s1, ZERO, ZERO);
    let dv1 = Vector4::new(C64::from(-s1), e1 * c1, ZERO, ZERO);
    let ket2 = Vector4::new(ZERO, ZERO, ONE, ZERO);
    let ketu = Vector4::new(ZERO, ZERO, ZERO, ONE);
    let cv2 = cv1 * C64::from(c2) + ket2 * (e2 * s2);
    let dv2 = cv1 * C64::from(-s2) + ket2 * (e2 * c2);
    let r = C64::from(std::f64::consts::FRAC_1_SQRT_2);

    DarkBrightBasis {
        c1: QuantumState::from_vector_unchecked(cv1),
        d1: QuantumState::from_vector_unchecked(dv1),
        c2: QuantumState::from_vector_unchecked(cv2),
        d2: QuantumState::from_vector_unchecked(dv2),
        b_plus: QuantumState::from_vector_unchecked((cv2 + ketu) * r),
        b_minus: QuantumState::from_vector_unchecked((cv2 - ketu) * r),
    }
}

/// Residual norms of the eigen-relations of the tripod Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct DarkStateReport {
    pub d1: f64,
    pub d2: f64,
    /// `|H B+ - (Omega_total/2) B+|`, only when the detuning is zero.
    pub b_plus: Option<f64>,
    pub b_minus: Option<f64>,
    pub omega_total: f64,
}

impl DarkStateReport {
    pub fn max_residual(&self) -> f64 {
        [Some(self.d1), Some(self.d2), self.b_plus, self.b_minus].into_iter().flatten().fold(0.0, f64::max)
    }
}

/// Checks `H|D1> = H|D2> = 0` and, at zero detuning,
/// `H|B+-> = +-(Omega_total/2)|B+->`. Residuals are relative to
/// `max(Omega_total, 1)`.
pub fn verify_dark_states(f: &FieldAmplitudes, tol: f64) -> Result<DarkStateReport> {
    if f.has_offsets() {
        return Err(Error::Domain("dark-state check requires zero level offsets".into()));
    }
    let h = hamiltonian_matrix(f);
    let basis = dark_bright_basis(&f.angles());
    let om = f.omega_total();
    let scale = om.max(1.0);
    let residual = |psi: &QuantumState, eig: f64| {
        (h * psi.amplitudes() - psi.amplitudes() * C64::from(eig)).norm() / scale
    };
    let report = DarkStateReport {
        d1: residual(&basis.d1, 0.0),
        d2: residual(&basis.d2, 0.0),
        b_plus: (f.detuning == 0.0).then(|| residual(&basis.b_plus, om / 2.0)),
        b_minus: (f.detuning == 0.0).then(|| residual(&basis.b_minus, -om / 2.0)),
        omega_total: om,
    };
    if report.max_residual() > tol {
        return Err(Error::ModelInconsistency(format!(
            "dark/bright residual {:e} exceeds {tol:e}",
            report.max_residual()
        )));
    }
    Ok(report)
}

/// The reduced form `-delta |u><u| + (Omega_total/2)(|u><C2| + h.c.)`.
pub fn reduced_hamiltonian(f: &FieldAmplitudes) -> Mat4 {
    let basis = dark_bright_basis(&f.angles());
    let ketu = Vector4::new(ZERO, ZERO, ZERO, ONE);
    let c2 = basis.c2.amplitudes();
    let coupling = ketu * c2.adjoint() * C64::from(f.omega_total() / 2.0);
    outer(Level::Upper, Level::Upper) * C64::from(-f.detuning) + coupling + coupling.adjoint()
}

/// Rotation axis `n(theta1, phi1) = (sin 2t cos p, -sin 2t sin p, cos 2t)`.
pub fn rotation_axis(theta1: f64, phi1: f64) -> [f64; 3] {
    let (s, c) = (2.0 * theta1).sin_cos();
    [s * phi1.cos(), -s * phi1.sin(), c]
}

/// `e^{i Phi/2} [cos(Phi/2) I + i n . sigma sin(Phi/2)]` on `{|0>, |1>}`.
pub fn target_unitary(theta1: f64, phi1: f64, phase: f64) -> Mat2 {
    let n = rotation_axis(theta1, phi1);
    let (s, c) = (phase / 2.0).sin_cos();
    let ns = pauli_x() * C64::from(n[0]) + pauli_y() * C64::from(n[1]) + pauli_z() * C64::from(n[2]);
    (Mat2::identity() * C64::from(c) + ns * (I * s)) * C64::from_polar(1.0, phase / 2.0)
}

/// X rotation by pi: `U_STIRAP(pi/4, 0, pi) = -sigma_x`.
pub fn ideal_x() -> Mat2 {
    target_unitary(std::f64::consts::FRAC_PI_4, 0.0, std::f64::consts::PI)
}

/// Z rotation by pi: `U_STIRAP(0, 0, pi) = -sigma_z`.
pub fn ideal_z() -> Mat2 {
    target_unitary(0.0, 0.0, std::f64::consts::PI)
}

/// Hadamard-type rotation `U_STIRAP(3 pi/8, 0, pi)`.
pub fn ideal_hadamard() -> Mat2 {
    target_unitary(3.0 * std::f64::consts::FRAC_PI_8, 0.0, std::f64::consts::PI)
}

/// Final state of the ideal two-STIRAP gate,
/// `e^{i Phi} <C1|psi0> |C1> + <D1|psi0> |D1>`.
pub fn apply_ideal_gate(psi0: &QuantumState, theta1: f64, phi1: f64, phase: f64) -> Result<QuantumState> {
    if !psi0.in_qubit_manifold(1e-12) {
        return Err(Error::Domain(format!(
            "initial state has population {:e} outside the qubit manifold",
            psi0.leakage()
        )));
    }
    let basis = dark_bright_basis(&TripodAngles { theta1, phi1, theta2: 0.0, phi2: 0.0 });
    let c = basis.c1.inner(psi0) * C64::from_polar(1.0, phase);
    let d = basis.d1.inner(psi0);
    Ok(QuantumState::from_vector_unchecked(
        basis.c1.amplitudes() * c + basis.d1.amplitudes() * d,
    ))
}
