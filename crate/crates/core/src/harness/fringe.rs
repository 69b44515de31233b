//! Population fringes versus the gate phase and their sinusoidal fit.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{self, Write};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{default_step, lindblad_channel, propagator, NoiseModel, QubitChannel};
use crate::pulse::{full_gate_schedule, Drive, GateParams};
use crate::quantum::{Level, Mat4, C64};
use crate::tomography::{preparation_unitary, pulse_unitary, sample_population_with, stream_rng, transfer, Preparation};
use crate::{Error, Result};

/// Which pulse program a fringe scan runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateFamily {
    /// Prepare `|0>`, apply the gate, read out `|0>`.
    X,
    /// Ramsey-type program around the gate, read out `|u>`.
    Z,
}

impl GateFamily {
    pub fn label(self) -> &'static str {
        match self {
            GateFamily::X => "x",
            GateFamily::Z => "z",
        }
    }

    /// Level whose population is reported.
    pub fn target_level(self) -> Level {
        match self {
            GateFamily::X => Level::Zero,
            GateFamily::Z => Level::Upper,
        }
    }
}

/// `points` equally spaced phases from 0 to `2 pi` inclusive.
pub fn phase_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| 2.0 * PI * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Measured populations along a phase grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    pub family: GateFamily,
    pub phase_grid: Vec<f64>,
    pub populations: Vec<f64>,
    /// Binomial errors `sqrt(P (1 - P) / N)`; zero for exact probabilities.
    pub errors: Vec<f64>,
    /// Population outside `{|0>, |1>}` right after the gate.
    pub leakage: Vec<f64>,
    pub target_level: Level,
    /// `None` when the populations are exact probabilities.
    pub shots: Option<u64>,
}

/// Exact probability of the target level and the leakage after the gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeProbability {
    pub population: f64,
    pub leakage: f64,
}

/// Rabi frequency of the square pulses around the gate (rad/s).
pub const AUXILIARY_RABI: f64 = 2.0 * PI * 100e3;

fn basis_density(level: Level) -> Mat4 {
    let mut rho = Mat4::zeros();
    rho[(level.index(), level.index())] = C64::from(1.0);
    rho
}

fn conjugate(u: &Mat4, rho: &Mat4) -> Mat4 {
    u * rho * u.adjoint()
}

fn leakage_of(rho: &Mat4) -> f64 {
    (rho[(2, 2)].re + rho[(3, 3)].re).max(0.0)
}

fn gate_channel(p: &GateParams, noise: &NoiseModel, step: Option<f64>) -> Result<QubitChannel> {
    let schedule = full_gate_schedule(p);
    if schedule.duration() == 0.0 {
        return Ok(QubitChannel::from_unitary(&Mat4::identity()));
    }
    let step = step.unwrap_or_else(|| default_step(&schedule, &noise.shifts));
    if noise.is_dissipative() {
        lindblad_channel(&schedule, noise, step)
    } else {
        Ok(QubitChannel::from_unitary(&propagator(&schedule, &noise.shifts, step)?))
    }
}

/// Runs the pulse program of one family at the phase stored in `p`.
pub fn fringe_probability(
    family: GateFamily,
    p: &GateParams,
    noise: &NoiseModel,
    step: Option<f64>,
) -> Result<FringeProbability> {
    p.validate()?;
    noise.validate()?;
    let channel = gate_channel(p, noise, step)?;
    match family {
        GateFamily::X => {
            let after = channel.apply_matrix(&basis_density(Level::Zero));
            Ok(FringeProbability { population: after[(0, 0)].re.clamp(0.0, 1.0), leakage: leakage_of(&after) })
        }
        GateFamily::Z => {
            let prep = preparation_unitary(Preparation::PlusX, AUXILIARY_RABI)?;
            let prepared = conjugate(&prep, &basis_density(Level::Upper));
            let after = channel.apply_matrix(&prepared);
            let back = pulse_unitary(&transfer(Level::One, AUXILIARY_RABI, 0.0, FRAC_PI_2)?)
                * pulse_unitary(&transfer(Level::Zero, AUXILIARY_RABI, 0.0, PI)?);
            let out = conjugate(&back, &after);
            Ok(FringeProbability { population: out[(3, 3)].re.clamp(0.0, 1.0), leakage: leakage_of(&after) })
        }
    }
}

fn binomial_error(p: f64, shots: u64) -> f64 {
    (p * (1.0 - p) / shots as f64).max(0.0).sqrt()
}

/// Scans the gate phase over `grid`. With `shots`, each point is sampled
/// from its own random stream `stream_base + index`.
pub fn run_fringe_with(
    family: GateFamily,
    p: &GateParams,
    grid: &[f64],
    noise: &NoiseModel,
    shots: Option<u64>,
    seed: u64,
    stream_base: u64,
) -> Result<FringeScan> {
    if grid.is_empty() {
        return Err(Error::Config("fringe grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Config("fringe grid must be sorted ascending".into()));
    }
    if shots == Some(0) {
        return Err(Error::Config("shots must be positive".into()));
    }
    let points: Vec<(f64, f64, f64)> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &phase)| {
            let exact = fringe_probability(family, &p.with_phase_step(phase), noise, None)?;
            match shots {
                Some(n) => {
                    let mut rng = stream_rng(seed, stream_base + i as u64);
                    let pop = sample_population_with(&mut rng, exact.population, n)?;
                    Ok((pop, binomial_error(pop, n), exact.leakage))
                }
                None => Ok((exact.population, 0.0, exact.leakage)),
            }
        })
        .collect::<Result<_>>()?;
    Ok(FringeScan {
        family,
        phase_grid: grid.to_vec(),
        populations: points.iter().map(|x| x.0).collect(),
        errors: points.iter().map(|x| x.1).collect(),
        leakage: points.iter().map(|x| x.2).collect(),
        target_level: family.target_level(),
        shots,
    })
}

pub fn run_fringe(
    family: GateFamily,
    p: &GateParams,
    grid: &[f64],
    noise: &NoiseModel,
    shots: Option<u64>,
    seed: u64,
) -> Result<FringeScan> {
    run_fringe_with(family, p, grid, noise, shots, seed, 0)
}

/// Fitted `P = offset + (contrast / 2) cos(Phi - shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub offset: f64,
    pub contrast: f64,
    pub shift: f64,
    pub offset_err: f64,
    pub contrast_err: f64,
    /// Infinite when the fitted amplitude vanishes.
    pub shift_err: f64,
    /// False when the amplitude vanishes and `shift` is reported as 0.
    pub shift_defined: bool,
    /// Covariance of `(offset, a, b)` in `offset + a cos + b sin`.
    pub covariance: [[f64; 3]; 3],
}

/// Weighted least squares of `c + a cos(Phi) + b sin(Phi)`. Zero errors are
/// floored at `1 / (2 N)`; with no shot count all weights are equal.
pub fn fit_sinusoid(phases: &[f64], values: &[f64], errors: &[f64], shots: Option<u64>) -> Result<FringeFit> {
    let n = phases.len();
    if values.len() != n || errors.len() != n {
        return Err(Error::Fit("phase, value and error lists differ in length".into()));
    }
    if n < 4 {
        return Err(Error::Fit(format!("need at least 4 points, got {n}")));
    }
    let floor = shots.map(|s| 0.5 / s as f64);
    let mut ata = Matrix3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for i in 0..n {
        let sigma = match floor {
            Some(f) => errors[i].max(f),
            None if errors[i] > 0.0 => errors[i],
            None => 1.0,
        };
        let w = 1.0 / (sigma * sigma);
        let row = Vector3::new(1.0, phases[i].cos(), phases[i].sin());
        ata += w * row * row.transpose();
        aty += w * values[i] * row;
    }
    let eig = ata.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let cov = ata
        .try_inverse()
        .filter(|_| hi > 0.0 && lo > 1e-12 * hi)
        .ok_or_else(|| Error::Fit("singular normal equations (degenerate phase grid)".into()))?;
    let beta = cov * aty;
    let (c, a, b) = (beta[0], beta[1], beta[2]);
    let r = a.hypot(b);
    let var_ab = |ga: f64, gb: f64| {
        (ga * ga * cov[(1, 1)] + gb * gb * cov[(2, 2)] + 2.0 * ga * gb * cov[(1, 2)]).max(0.0)
    };
    let defined = r > 1e-12;
    let (shift, contrast_err, shift_err) = if defined {
        let shift = b.atan2(a);
        (shift, 2.0 * var_ab(a / r, b / r).sqrt(), var_ab(-b / (r * r), a / (r * r)).sqrt())
    } else {
        (0.0, 2.0 * cov[(1, 1)].max(cov[(2, 2)]).max(0.0).sqrt(), f64::INFINITY)
    };
    let shift = if shift <= -PI { shift + 2.0 * PI } else { shift };
    let mut covariance = [[0.0; 3]; 3];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cov[(i, j)];
        }
    }
    Ok(FringeFit {
        offset: c,
        contrast: 2.0 * r,
        shift,
        offset_err: cov[(0, 0)].max(0.0).sqrt(),
        contrast_err,
        shift_err,
        shift_defined: defined,
        covariance,
    })
}

pub fn fit_fringe(scan: &FringeScan) -> Result<FringeFit> {
    fit_sinusoid(&scan.phase_grid, &scan.populations, &scan.errors, scan.shots)
}

/// Tab-separated scan data with the fitted curve.
pub fn write_fringe_tsv<W: Write>(mut out: W, scan: &FringeScan, fit: Option<&FringeFit>) -> io::Result<()> {
    writeln!(out, "phi_rad\tpopulation\terror\tleakage\tfit")?;
    for i in 0..scan.phase_grid.len() {
        let phi = scan.phase_grid[i];
        let model = fit.map(|f| f.offset + 0.5 * f.contrast * (phi - f.shift).cos());
        write!(out, "{phi:.6}\t{:.6}\t{:.6}\t{:.6e}", scan.populations[i], scan.errors[i], scan.leakage[i])?;
        match model {
            Some(m) => writeln!(out, "\t{m:.6}")?,
            None => writeln!(out, "\t")?,
        }
    }
    Ok(())
}
