//! Fringe contrast and shift versus peak Rabi frequency and duration.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fringe::{fit_fringe, run_fringe_with, FringeFit, GateFamily};
use crate::dynamics::NoiseModel;
use crate::pulse::GateParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// Rabi grid repeated for every listed duration.
    VaryRabiAndDuration,
    /// Rabi grid at the base duration.
    VaryRabiFixedDuration,
}

impl SweepMode {
    pub fn label(self) -> &'static str {
        match self {
            SweepMode::VaryRabiAndDuration => "vary-rabi-and-duration",
            SweepMode::VaryRabiFixedDuration => "vary-rabi-fixed-duration",
        }
    }
}

/// Everything a sweep needs apart from noise and sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub mode: SweepMode,
    pub family: GateFamily,
    /// Peak ratios, shape and phase reference; its `omega2_max` is rescaled.
    pub base: GateParams,
    /// Target peaks of `|Omega2|` (rad/s).
    pub omega2_grid: Vec<f64>,
    /// Total durations (s); ignored in fixed-duration mode.
    pub durations: Vec<f64>,
    pub phases: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Peak of `|Omega2|` (rad/s).
    pub omega2_peak: f64,
    /// Total gate duration (s).
    pub duration: f64,
    pub fit: FringeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub mode: SweepMode,
    pub family: GateFamily,
    /// Sorted by duration, then by Rabi frequency.
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Points of one duration, in Rabi order.
    pub fn at_duration(&self, duration: f64) -> Vec<SweepPoint> {
        self.points.iter().filter(|p| (p.duration - duration).abs() <= 1e-12 * duration).copied().collect()
    }
}

fn stream_base(index: usize) -> u64 {
    (index as u64) << 20
}

pub fn run_robustness_sweep(
    spec: &SweepSpec,
    noise: &NoiseModel,
    shots: Option<u64>,
    seed: u64,
) -> Result<SweepResult> {
    if spec.omega2_grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    if spec.base.omega2_max <= 0.0 {
        return Err(Error::Config("sweep base needs a nonzero Omega2 peak".into()));
    }
    if spec.omega2_grid.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Config("sweep grid values must be positive".into()));
    }
    let mut durations = match spec.mode {
        SweepMode::VaryRabiFixedDuration => vec![spec.base.duration()],
        SweepMode::VaryRabiAndDuration if spec.durations.is_empty() => {
            return Err(Error::Config("vary-rabi-and-duration needs at least one duration".into()))
        }
        SweepMode::VaryRabiAndDuration => spec.durations.clone(),
    };
    durations.sort_by(f64::total_cmp);
    let mut grid = spec.omega2_grid.clone();
    grid.sort_by(f64::total_cmp);
    let jobs: Vec<(f64, f64)> = durations.iter().flat_map(|&d| grid.iter().map(move |&w| (d, w))).collect();
    let points = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(duration, omega2))| {
            let p = spec.base.with_duration(duration).scaled_rabi(omega2 / spec.base.omega2_max);
            let scan = run_fringe_with(spec.family, &p, &spec.phases, noise, shots, seed, stream_base(i))?;
            Ok(SweepPoint { omega2_peak: omega2, duration, fit: fit_fringe(&scan)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { mode: spec.mode, family: spec.family, points })
}

/// `y = c x^2` through the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub curvature: f64,
    pub curvature_err: f64,
    pub r_squared: f64,
}

pub fn fit_quadratic_origin(x: &[f64], y: &[f64]) -> Result<QuadraticFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Fit("quadratic fit needs at least two paired points".into()));
    }
    let sxx: f64 = x.iter().map(|v| v.powi(4)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all abscissae are zero".into()));
    }
    let c = x.iter().zip(y).map(|(a, b)| a * a * b).sum::<f64>() / sxx;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - c * a * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - mean).powi(2)).sum();
    let dof = (x.len() - 1) as f64;
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else if ss_res == 0.0 { 1.0 } else { 0.0 };
    Ok(QuadraticFit { curvature: c, curvature_err: (ss_res / dof / sxx).sqrt(), r_squared })
}

/// Quadratic fit of the fringe shift against the `Omega2` peak (rad/s).
pub fn stark_shift_fit(points: &[SweepPoint]) -> Result<QuadraticFit> {
    let x: Vec<f64> = points.iter().map(|p| p.omega2_peak).collect();
    let y: Vec<f64> = points.iter().map(|p| p.fit.shift).collect();
    fit_quadratic_origin(&x, &y)
}

/// One row per point: Rabi peak in kHz, duration in us, fit values.
pub fn write_sweep_tsv<W: Write>(mut out: W, result: &SweepResult) -> io::Result<()> {
    writeln!(out, "omega2_khz\tduration_us\tcontrast\tcontrast_err\tshift_rad\tshift_err\toffset")?;
    for p in &result.points {
        let f = &p.fit;
        writeln!(
            out,
            "{:.4}\t{:.3}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            p.omega2_peak / (2.0 * std::f64::consts::PI * 1e3),
            p.duration * 1e6,
            f.contrast,
            f.contrast_err,
            f.shift,
            f.shift_err,
            f.offset
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::fringe::phase_grid;
    use std::f64::consts::PI;

    const KHZ: f64 = 2.0 * PI * 1e3;

    fn base() -> GateParams {
        let s = 20.0 / 170.0;
        GateParams::from_peaks(125.0 * s * KHZ, 125.0 * s * KHZ, 20.0 * KHZ, 290e-6, 0.55).unwrap()
    }

    #[test]
    fn quadratic_fit_recovers_curvature() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.3 * v * v).collect();
        let f = fit_quadratic_origin(&x, &y).unwrap();
        assert!((f.curvature - 0.3).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn points_are_ordered_and_deterministic() {
        let spec = SweepSpec {
            mode: SweepMode::VaryRabiAndDuration,
            family: GateFamily::X,
            base: base(),
            omega2_grid: vec![30.0 * KHZ, 10.0 * KHZ],
            durations: vec![290e-6, 145e-6],
            phases: phase_grid(5),
        };
        let a = run_robustness_sweep(&spec, &NoiseModel::noiseless(), Some(50), 9).unwrap();
        let b = run_robustness_sweep(&spec, &NoiseModel::noiseless(), Some(50), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 4);
        assert_eq!(a.points[0].duration, 145e-6);
        assert_eq!(a.points[0].omega2_peak, 10.0 * KHZ);
        assert_eq!(a.points[3].omega2_peak, 30.0 * KHZ);
        assert_eq!(a.at_duration(290e-6).len(), 2);
    }

    #[test]
    fn fixed_duration_uses_base() {
        let spec = SweepSpec {
            mode: SweepMode::VaryRabiFixedDuration,
            family: GateFamily::X,
            base: base(),
            omega2_grid: vec![60.0 * KHZ],
            durations: vec![],
            phases: phase_grid(5),
        };
        let r = run_robustness_sweep(&spec, &NoiseModel::noiseless(), None, 0).unwrap();
        assert!((r.points[0].duration - 290e-6).abs() < 1e-15);
        assert!(r.points[0].fit.contrast > 0.95);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let spec = SweepSpec {
            mode: SweepMode::VaryRabiFixedDuration,
            family: GateFamily::X,
            base: base(),
            omega2_grid: vec![],
            durations: vec![],
            phases: phase_grid(5),
        };
        assert!(run_robustness_sweep(&spec, &NoiseModel::noiseless(), None, 0).is_err());
    }
}
