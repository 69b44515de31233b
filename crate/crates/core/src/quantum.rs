//! Dense complex linear algebra for the four-level tripod system.
//!
//! Every vector and matrix here uses the fixed basis order
//! `(|0>, |1>, |2>, |u>)`; see [`Level`]. Qubit-subspace objects are 2x2 in
//! the order `(|0>, |1>)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, Matrix2, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;
pub type Vec4 = Vector4<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Tolerance on the norm of a Bloch vector.
pub const BLOCH_TOL: f64 = 1e-9;

/// One of the four levels of the tripod.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "u")]
    Upper,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Zero, Level::One, Level::Two, Level::Upper];

    pub fn index(self) -> usize {
        match self {
            Level::Zero => 0,
            Level::One => 1,
            Level::Two => 2,
            Level::Upper => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<Level> {
        Level::ALL.get(index).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Level::Zero => "0",
            Level::One => "1",
            Level::Two => "2",
            Level::Upper => "u",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}>", self.label())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches('|').trim_end_matches('>') {
            "0" => Ok(Level::Zero),
            "1" => Ok(Level::One),
            "2" => Ok(Level::Two),
            "u" | "U" => Ok(Level::Upper),
            other => Err(Error::Domain(format!("unknown level `{other}`"))),
        }
    }
}

/// A normalized pure state of the four-level system.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState(Vec4);

impl QuantumState {
    /// Wraps amplitudes that must already be normalized (within 1e-9).
    pub fn new(amplitudes: Vec4) -> Result<Self> {
        let n2 = amplitudes.norm_squared();
        if (n2 - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("state norm^2 is {n2}, expected 1")));
        }
        Ok(QuantumState(amplitudes))
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(amplitudes: Vec4) -> Result<Self> {
        let n = amplitudes.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Domain("cannot normalize a zero vector".into()));
        }
        Ok(QuantumState(amplitudes / C64::from(n)))
    }

    pub fn basis(level: Level) -> Self {
        let mut v = Vec4::zeros();
        v[level.index()] = ONE;
        QuantumState(v)
    }

    /// Qubit state `a|0> + b|1>`, normalized.
    pub fn qubit(a: C64, b: C64) -> Result<Self> {
        Self::normalized(Vec4::new(a, b, ZERO, ZERO))
    }

    pub(crate) fn from_vector_unchecked(v: Vec4) -> Self {
        QuantumState(v)
    }

    pub fn amplitudes(&self) -> &Vec4 {
        &self.0
    }

    pub fn amplitude(&self, level: Level) -> C64 {
        self.0[level.index()]
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &QuantumState) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn populations(&self) -> [f64; 4] {
        std::array::from_fn(|k| self.0[k].norm_sqr())
    }

    /// Population outside the qubit manifold `{|0>, |1>}`.
    pub fn leakage(&self) -> f64 {
        let p = self.populations();
        p[2] + p[3]
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix(self.0 * self.0.adjoint())
    }

    pub fn evolve(&self, u: &Mat4) -> QuantumState {
        QuantumState(u * self.0)
    }

    /// Whether the state has no support outside `{|0>, |1>}` (within `tol`).
    pub fn in_qubit_manifold(&self, tol: f64) -> bool {
        self.leakage() <= tol
    }
}

/// A 4x4 density matrix.
///
/// Construction checks Hermiticity (1e-12) and unit trace (1e-9). Positivity
/// is checked separately through [`DensityMatrix::min_eigenvalue`] because
/// linear-inversion tomography is allowed to produce non-physical estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Mat4);

impl DensityMatrix {
    pub fn new(m: Mat4) -> Result<Self> {
        let herm = hermiticity_deviation(&m);
        if herm > 1e-12 {
            return Err(Error::InvalidDensity(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::InvalidDensity(format!("trace is {tr}")));
        }
        Ok(DensityMatrix(m))
    }

    pub(crate) fn from_matrix_unchecked(m: Mat4) -> Self {
        DensityMatrix(m)
    }

    pub fn pure(level: Level) -> Self {
        QuantumState::basis(level).density()
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn entry(&self, row: Level, col: Level) -> C64 {
        self.0[(row.index(), col.index())]
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn populations(&self) -> [f64; 4] {
        std::array::from_fn(|k| self.0[(k, k)].re)
    }

    pub fn leakage(&self) -> f64 {
        let p = self.populations();
        p[2] + p[3]
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        hermiticity_deviation(&self.0)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.0 + self.0.adjoint()) * C64::from(0.5);
        SymmetricEigen::new(h).eigenvalues.min()
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// `U rho U^dagger`.
    pub fn conjugate(&self, u: &Mat4) -> DensityMatrix {
        DensityMatrix(u * self.0 * u.adjoint())
    }

    /// The 2x2 block on `{|0>, |1>}`.
    pub fn qubit_block(&self) -> Mat2 {
        self.0.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

/// Bloch vector of a two-level subspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let r = BlochVector { x, y, z };
        if r.norm() > 1.0 + BLOCH_TOL {
            return Err(Error::InvalidBloch(r.norm()));
        }
        Ok(r)
    }

    /// Accepts any components, including non-physical ones from linear
    /// inversion of noisy data.
    pub fn unchecked(x: f64, y: f64, z: f64) -> Self {
        BlochVector { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_physical(&self) -> bool {
        self.norm() <= 1.0 + BLOCH_TOL
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        BlochVector::unchecked(a[0], a[1], a[2])
    }
}

/// An ordered pair of distinct levels spanning a two-level subspace. The
/// first level plays the role of the "+z" pole.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelPair(Level, Level);

impl LevelPair {
    pub fn new(a: Level, b: Level) -> Result<Self> {
        if a == b {
            return Err(Error::Domain(format!("level pair must be distinct, got {a} twice")));
        }
        Ok(LevelPair(a, b))
    }

    pub fn qubit() -> Self {
        LevelPair(Level::Zero, Level::One)
    }

    /// The `{|u>, |1>}` pair read out after the mapping pulse.
    pub fn readout() -> Self {
        LevelPair(Level::Upper, Level::One)
    }

    pub fn first(&self) -> Level {
        self.0
    }

    pub fn second(&self) -> Level {
        self.1
    }
}

/// Whether an operator is known to be Hermitian, unitary, or neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Hermitian,
    Unitary,
    General,
}

/// A 4x4 operator tagged with the property it was checked for.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: Mat4,
    kind: OperatorKind,
}

impl Operator {
    pub fn hermitian(m: Mat4) -> Result<Self> {
        let dev = hermiticity_deviation(&m);
        if dev > 1e-12 {
            return Err(Error::OperatorCheck { kind: "Hermitian", deviation: dev });
        }
        Ok(Operator { matrix: m, kind: OperatorKind::Hermitian })
    }

    pub fn unitary(m: Mat4) -> Result<Self> {
        let dev = unitarity_deviation(&m);
        if dev > 1e-12 {
            return Err(Error::OperatorCheck { kind: "unitary", deviation: dev });
        }
        Ok(Operator { matrix: m, kind: OperatorKind::Unitary })
    }

    pub fn general(m: Mat4) -> Self {
        Operator { matrix: m, kind: OperatorKind::General }
    }

    pub fn identity() -> Self {
        Operator { matrix: Mat4::identity(), kind: OperatorKind::Unitary }
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn apply(&self, psi: &QuantumState) -> Vec4 {
        self.matrix * psi.amplitudes()
    }

    /// Eigenvalues in ascending order; only meaningful for Hermitian operators.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        [ev[0], ev[1], ev[2], ev[3]]
    }
}

/// Largest entry of `|M - M^dagger|`.
pub fn hermiticity_deviation(m: &Mat4) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `|U^dagger U - I|`.
pub fn unitarity_deviation(u: &Mat4) -> f64 {
    (u.adjoint() * u - Mat4::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn unitarity_deviation_2x2(u: &Mat2) -> f64 {
    (u.adjoint() * u - Mat2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `|a><b|` as a 4x4 matrix.
pub fn outer(a: Level, b: Level) -> Mat4 {
    let mut m = Mat4::zeros();
    m[(a.index(), b.index())] = ONE;
    m
}

pub fn pauli_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> Mat2 {
    Mat2::new(ZERO, -I, I, ZERO)
}

pub fn pauli_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// Embeds the Pauli-type operators of a two-level subspace into 4x4.
fn subspace_paulis(pair: LevelPair) -> [Mat4; 3] {
    let (a, b) = (pair.first(), pair.second());
    let sx = outer(a, b) + outer(b, a);
    let sy = outer(a, b) * (-I) + outer(b, a) * I;
    let sz = outer(a, a) - outer(b, b);
    [sx, sy, sz]
}

/// Density matrix `1/2 (P + r . sigma)` on the subspace spanned by `pair`,
/// zero elsewhere.
pub fn bloch_to_density(r: &BlochVector, pair: LevelPair) -> Result<DensityMatrix> {
    if !r.is_physical() {
        return Err(Error::InvalidBloch(r.norm()));
    }
    Ok(bloch_to_density_unchecked(r, pair))
}

/// Same as [`bloch_to_density`] without the norm check.
pub fn bloch_to_density_unchecked(r: &BlochVector, pair: LevelPair) -> DensityMatrix {
    let [sx, sy, sz] = subspace_paulis(pair);
    let proj = outer(pair.first(), pair.first()) + outer(pair.second(), pair.second());
    let m = (proj + sx * C64::from(r.x) + sy * C64::from(r.y) + sz * C64::from(r.z)) * C64::from(0.5);
    DensityMatrix::from_matrix_unchecked(m)
}

/// `r_k = tr(rho sigma_k)` on the subspace spanned by `pair`.
pub fn density_to_bloch(rho: &DensityMatrix, pair: LevelPair) -> BlochVector {
    let [sx, sy, sz] = subspace_paulis(pair);
    let comp = |s: &Mat4| (rho.matrix() * s).trace().re;
    BlochVector::unchecked(comp(&sx), comp(&sy), comp(&sz))
}

/// Qubit Bloch vector of a 2x2 density block.
pub fn bloch_of_2x2(rho: &Mat2) -> BlochVector {
    let comp = |s: Mat2| (rho * s).trace().re;
    BlochVector::unchecked(comp(pauli_x()), comp(pauli_y()), comp(pauli_z()))
}

/// `1/2 (I + r . sigma)` as a 2x2 matrix.
pub fn density_2x2(r: &BlochVector) -> Mat2 {
    (Mat2::identity() + pauli_x() * C64::from(r.x) + pauli_y() * C64::from(r.y) + pauli_z() * C64::from(r.z))
        * C64::from(0.5)
}

/// Fidelity functional `tr(rho_a rho_b)`.
pub fn subspace_fidelity(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    (a.matrix() * b.matrix()).trace().re
}

/// Average gate fidelity of a (possibly trace-decreasing) qubit map `m`
/// against `target`: `(|tr(U^dagger M)|^2 + tr(M^dagger M)) / 6`.
pub fn gate_fidelity_2x2(m: &Mat2, target: &Mat2) -> f64 {
    let overlap = (target.adjoint() * m).trace().norm_sqr();
    let norm = (m.adjoint() * m).trace().re;
    (overlap + norm) / 6.0
}

/// Embeds a qubit operator into the 4x4 space, acting as identity on
/// `{|2>, |u>}`.
pub fn embed_qubit(u: &Mat2) -> Mat4 {
    let mut m = Mat4::identity();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(u);
    m
}

/// `exp(-i H t)` for Hermitian `H` through its eigendecomposition, unitary
/// to rounding error.
pub fn expm_hermitian(h: &Mat4, t: f64) -> Mat4 {
    let eig = SymmetricEigen::new(*h);
    let v = eig.eigenvectors;
    let phases = Mat4::from_diagonal(&Vec4::from_fn(|k, _| C64::from_polar(1.0, -eig.eigenvalues[k] * t)));
    v * phases * v.adjoint()
}

/// Rotation of a qubit Bloch vector about `z` by `angle` as a unitary
/// `exp(-i angle sigma_z / 2)`.
pub fn z_rotation(angle: f64) -> Mat2 {
    Mat2::new(C64::from_polar(1.0, -angle / 2.0), ZERO, ZERO, C64::from_polar(1.0, angle / 2.0))
}
