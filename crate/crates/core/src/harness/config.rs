//! Run definitions in TOML. Unknown keys are rejected and every dimensioned
//! value must carry a unit; errors name the offending line.

use std::path::PathBuf;

use serde::Deserialize;
use toml::Spanned;

use super::fringe::GateFamily;
use super::presets::preset;
use super::sweep::SweepMode;
use super::units::{parse_quantity, Dimension};
use crate::dynamics::{NoiseModel, ShiftModel, StarkCoupling, DEFAULT_ZEEMAN_WEIGHTS};
use crate::pulse::GateParams;
use crate::quantum::Level;
use crate::{Error, Result};

/// Default number of phase points in a fringe scan.
pub const DEFAULT_PHASE_POINTS: usize = 17;

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

fn toml_error(src: &str, e: toml::de::Error) -> Error {
    let line = e.span().map(|s| line_of(src, s.start)).unwrap_or(1);
    Error::Parse { line, message: e.message().trim().to_string() }
}

fn quantity(src: &str, value: &Spanned<String>, dim: Dimension) -> Result<f64> {
    parse_quantity(value.get_ref(), dim)
        .map_err(|message| Error::Parse { line: line_of(src, value.span().start), message })
}

fn opt_quantity(src: &str, value: &Option<Spanned<String>>, dim: Dimension) -> Result<Option<f64>> {
    value.as_ref().map(|v| quantity(src, v, dim)).transpose()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGate {
    preset: Option<String>,
    family: Option<GateFamily>,
    omega0: Option<Spanned<String>>,
    omega1: Option<Spanned<String>>,
    omega2: Option<Spanned<String>>,
    /// Rescales all three peaks so that the `Omega2` peak equals this value.
    omega2_peak: Option<Spanned<String>>,
    duration: Option<Spanned<String>>,
    alpha: Option<f64>,
    phase: Option<Spanned<String>>,
    phi1: Option<Spanned<String>>,
    detuning: Option<Spanned<String>>,
}

/// Gate settings with units resolved, possibly incomplete.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GateValues {
    pub family: Option<GateFamily>,
    pub peaks: [Option<f64>; 3],
    pub omega2_peak: Option<f64>,
    pub duration: Option<f64>,
    pub alpha: Option<f64>,
    pub phase: Option<f64>,
    pub phi1: Option<f64>,
    pub detuning: Option<f64>,
}

impl GateValues {
    fn from_raw(src: &str, raw: &RawGate) -> Result<Self> {
        let f = Dimension::Frequency;
        Ok(GateValues {
            family: raw.family,
            peaks: [opt_quantity(src, &raw.omega0, f)?, opt_quantity(src, &raw.omega1, f)?, opt_quantity(src, &raw.omega2, f)?],
            omega2_peak: opt_quantity(src, &raw.omega2_peak, f)?,
            duration: opt_quantity(src, &raw.duration, Dimension::Time)?,
            alpha: raw.alpha,
            phase: opt_quantity(src, &raw.phase, Dimension::Angle)?,
            phi1: opt_quantity(src, &raw.phi1, Dimension::Angle)?,
            detuning: opt_quantity(src, &raw.detuning, f)?,
        })
    }

    /// Values set in `top` replace those in `self`.
    pub fn overlay(self, top: GateValues) -> GateValues {
        GateValues {
            family: top.family.or(self.family),
            peaks: [top.peaks[0].or(self.peaks[0]), top.peaks[1].or(self.peaks[1]), top.peaks[2].or(self.peaks[2])],
            omega2_peak: top.omega2_peak.or(self.omega2_peak),
            duration: top.duration.or(self.duration),
            alpha: top.alpha.or(self.alpha),
            phase: top.phase.or(self.phase),
            phi1: top.phi1.or(self.phi1),
            detuning: top.detuning.or(self.detuning),
        }
    }

    pub fn finish(self) -> Result<GateSpec> {
        let missing = |key: &str| Error::Config(format!("gate: missing {key}"));
        let [o0, o1, o2] = self.peaks;
        let mut params = GateParams::from_peaks(
            o0.ok_or_else(|| missing("omega0"))?,
            o1.ok_or_else(|| missing("omega1"))?,
            o2.ok_or_else(|| missing("omega2"))?,
            self.duration.ok_or_else(|| missing("duration"))?,
            self.alpha.ok_or_else(|| missing("alpha"))?,
        )?;
        if let Some(target) = self.omega2_peak {
            if params.omega2_max <= 0.0 {
                return Err(Error::Config("gate: omega2_peak needs a nonzero omega2".into()));
            }
            params = params.scaled_rabi(target / params.omega2_max);
        }
        let params = params
            .with_phase_step(self.phase.unwrap_or(std::f64::consts::PI))
            .with_phi1(self.phi1.unwrap_or(0.0))
            .with_detuning(self.detuning.unwrap_or(0.0));
        params.validate()?;
        Ok(GateSpec { preset: None, family: self.family.unwrap_or(GateFamily::X), params })
    }
}

/// A fully resolved gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSpec {
    pub preset: Option<&'static str>,
    pub family: GateFamily,
    pub params: GateParams,
}

/// Parses a document holding a single gate table at top level.
pub fn parse_gate_table(src: &str) -> Result<GateValues> {
    let raw: RawGate = toml::from_str(src).map_err(|e| toml_error(src, e))?;
    if raw.preset.is_some() {
        return Err(Error::Config("presets cannot refer to other presets".into()));
    }
    GateValues::from_raw(src, &raw)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStark {
    target: Level,
    source: Level,
    #[serde(default = "one")]
    scale: f64,
    detuning: Spanned<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    laser_linewidth: Option<Spanned<String>>,
    magnetic: Option<Spanned<String>>,
    zeeman_weights: Option<[f64; 3]>,
    static_offsets: Option<Vec<Spanned<String>>>,
    #[serde(default)]
    stark: Vec<RawStark>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    shots: Option<u64>,
    seed: Option<u64>,
    points: Option<usize>,
    step: Option<Spanned<String>>,
    out: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    mode: SweepMode,
    omega2: Vec<Spanned<String>>,
    #[serde(default)]
    durations: Vec<Spanned<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTomo {
    input: Option<String>,
    fixture: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Option<String>,
    gate: Option<RawGate>,
    noise: Option<RawNoise>,
    run: Option<RawRun>,
    sweep: Option<RawSweep>,
    tomo: Option<RawTomo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub mode: SweepMode,
    pub omega2_grid: Vec<f64>,
    pub durations: Vec<f64>,
}

/// A parsed run definition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub command: Option<String>,
    /// Preset named in the gate table, applied beneath its other keys.
    pub preset: Option<String>,
    pub gate: GateValues,
    pub noise: NoiseModel,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    pub points: Option<usize>,
    pub step: Option<f64>,
    pub out: Option<PathBuf>,
    pub sweep: Option<SweepOptions>,
    pub tomo_input: Option<PathBuf>,
    pub tomo_fixture: Option<String>,
}

impl RunConfig {
    pub fn parse(src: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| toml_error(src, e))?;
        let gate_raw = raw.gate.unwrap_or_default();
        let gate = GateValues::from_raw(src, &gate_raw)?;
        let noise = match raw.noise {
            Some(n) => resolve_noise(src, &n)?,
            None => NoiseModel::noiseless(),
        };
        let run = raw.run.unwrap_or_default();
        if run.shots == Some(0) {
            return Err(Error::Config("run.shots must be positive".into()));
        }
        if matches!(run.points, Some(p) if p < 4) {
            return Err(Error::Config("run.points must be at least 4".into()));
        }
        let sweep = raw
            .sweep
            .map(|s| -> Result<SweepOptions> {
                Ok(SweepOptions {
                    mode: s.mode,
                    omega2_grid: s.omega2.iter().map(|v| quantity(src, v, Dimension::Frequency)).collect::<Result<_>>()?,
                    durations: s.durations.iter().map(|v| quantity(src, v, Dimension::Time)).collect::<Result<_>>()?,
                })
            })
            .transpose()?;
        let tomo = raw.tomo.unwrap_or_default();
        Ok(RunConfig {
            command: raw.command,
            preset: gate_raw.preset,
            gate,
            noise,
            shots: run.shots,
            seed: run.seed,
            points: run.points,
            step: opt_quantity(src, &run.step, Dimension::Time)?,
            out: run.out.map(PathBuf::from),
            sweep,
            tomo_input: tomo.input.map(PathBuf::from),
            tomo_fixture: tomo.fixture,
        })
    }

    /// The gate with `preset_override` (or the configured preset) beneath the
    /// explicit keys.
    pub fn gate_spec(&self, preset_override: Option<&str>) -> Result<GateSpec> {
        let name = preset_override.or(self.preset.as_deref());
        match name {
            Some(name) => {
                let base = preset(name)?;
                let mut spec = preset_values(name)?.overlay(self.gate).finish()?;
                spec.preset = base.preset;
                Ok(spec)
            }
            None => self.gate.finish(),
        }
    }
}

fn preset_values(name: &str) -> Result<GateValues> {
    let src = super::presets::preset_source(name).ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?;
    parse_gate_table(src)
}

fn resolve_noise(src: &str, n: &RawNoise) -> Result<NoiseModel> {
    let laser = opt_quantity(src, &n.laser_linewidth, Dimension::Rate)?.unwrap_or(0.0);
    let magnetic = opt_quantity(src, &n.magnetic, Dimension::Rate)?.unwrap_or(0.0);
    let weights = n.zeeman_weights.unwrap_or(DEFAULT_ZEEMAN_WEIGHTS);
    let mut shifts = ShiftModel::none();
    if let Some(offsets) = &n.static_offsets {
        if offsets.len() != 3 {
            return Err(Error::Config(format!("noise.static_offsets needs 3 entries, got {}", offsets.len())));
        }
        for (k, v) in offsets.iter().enumerate() {
            shifts.static_offsets[k] = quantity(src, v, Dimension::Frequency)?;
        }
    }
    for s in &n.stark {
        shifts.stark.push(StarkCoupling {
            target: s.target,
            source: s.source,
            scale: s.scale,
            detuning: quantity(src, &s.detuning, Dimension::Frequency)?,
        });
    }
    let noise = NoiseModel::from_linewidths(laser, magnetic, weights).with_shifts(shifts);
    noise.validate()?;
    Ok(noise)
}
