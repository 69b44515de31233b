//! Pulse envelopes for the two-STIRAP holonomic gate, square pulses, and
//! the adiabaticity estimate.
//!
//! One half of the gate follows the ramp
//!
//! ```text
//! Omega^2(t)  = Omega_max^2 (1 - cos^2(pi t / 2T))        0  <= t < T
//!             = Omega_max^2                                T  <= t < t3
//! |Omega2|^2  = Omega2_max^2                               0  <= t < t1
//!             = Omega2_max^2 cos^2(pi (t - t1) / 2T)       t1 <= t < t3
//! ```
//!
//! with `t1 = (1 - alpha) T` and `t3 = (2 - alpha) T`. The full gate plays
//! this ramp, then its time mirror with the phase of `Omega2` stepped by
//! `Phi`, for a total duration `2 t3`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::quantum::{Level, C64};
use crate::tripod::FieldAmplitudes;

/// Anything that supplies the tripod fields as a function of time on
/// `[0, duration)`.
pub trait Drive: Sync {
    fn duration(&self) -> f64;

    /// Fields at time `t`; zero outside `[0, duration)`.
    fn fields(&self, t: f64) -> FieldAmplitudes;

    /// Upper bound on `Omega_total` and `|delta|` over the drive (rad/s).
    fn peak_rate(&self) -> f64;

    /// Instants inside `(0, duration)` where the fields have kinks or jumps.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Upper bound on `|Omega_k|` for the coupling to lower level `k`.
    fn peak_coupling(&self, lower: Level) -> f64;
}

/// Everything that defines one holonomic gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateParams {
    /// Mixing angle of the qubit couplings, `atan |Omega1 / Omega0|`.
    pub theta1: f64,
    /// Phase of `Omega1`.
    pub phi1: f64,
    /// Phase step of `Omega2` between the two halves.
    pub phase_step: f64,
    /// Peak of the common envelope `Omega(t)` (rad/s).
    pub omega_max: f64,
    /// Peak of `|Omega2(t)|` (rad/s).
    pub omega2_max: f64,
    /// Shape parameter `T` (s).
    pub half_time: f64,
    /// Overlap parameter in `[0, 1]`.
    pub alpha: f64,
    /// Common one-photon detuning (rad/s).
    pub detuning: f64,
}

/// Ramp nodes `t0 < t1 <= t2 <= t3` of one half.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub t0: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl GateParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.theta1,
            self.phi1,
            self.phase_step,
            self.omega_max,
            self.omega2_max,
            self.half_time,
            self.alpha,
            self.detuning,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("gate parameters must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.half_time <= 0.0 {
            return Err(Error::Config(format!("T must be positive, got {}", self.half_time)));
        }
        if self.omega_max < 0.0 || self.omega2_max < 0.0 {
            return Err(Error::Config("peak Rabi frequencies must be non-negative".into()));
        }
        Ok(())
    }

    /// Builds parameters from the three peak Rabi frequencies (rad/s) and the
    /// total gate duration (s). `Phi` defaults to `pi`.
    pub fn from_peaks(omega0: f64, omega1: f64, omega2: f64, total_duration: f64, alpha: f64) -> Result<Self> {
        if omega0 < 0.0 || omega1 < 0.0 {
            return Err(Error::Config("peak Rabi frequencies must be non-negative".into()));
        }
        let p = GateParams {
            theta1: omega1.atan2(omega0),
            phi1: 0.0,
            phase_step: PI,
            omega_max: omega0.hypot(omega1),
            omega2_max: omega2,
            half_time: half_time_for(total_duration, alpha),
            alpha,
            detuning: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_phase_step(self, phase: f64) -> Self {
        GateParams { phase_step: phase, ..self }
    }

    pub fn with_phi1(self, phi1: f64) -> Self {
        GateParams { phi1, ..self }
    }

    pub fn with_detuning(self, detuning: f64) -> Self {
        GateParams { detuning, ..self }
    }

    /// Same shape stretched to a new total duration.
    pub fn with_duration(self, total_duration: f64) -> Self {
        GateParams { half_time: half_time_for(total_duration, self.alpha), ..self }
    }

    /// All peak Rabi frequencies multiplied by `factor` (ratios fixed).
    pub fn scaled_rabi(self, factor: f64) -> Self {
        GateParams { omega_max: self.omega_max * factor, omega2_max: self.omega2_max * factor, ..self }
    }

    /// Peak of `Omega0 = Omega cos(theta1)`.
    pub fn omega0_max(&self) -> f64 {
        self.omega_max * self.theta1.cos()
    }

    /// Peak of `|Omega1| = Omega sin(theta1)`.
    pub fn omega1_max(&self) -> f64 {
        self.omega_max * self.theta1.sin()
    }

    pub fn timing(&self) -> Timing {
        let t = self.half_time;
        Timing { t0: 0.0, t1: (1.0 - self.alpha) * t, t2: t, t3: (2.0 - self.alpha) * t }
    }

    /// Total duration of both halves, `2 (2 - alpha) T`.
    pub fn duration(&self) -> f64 {
        2.0 * self.timing().t3
    }
}

/// `T` such that `2 (2 - alpha) T` equals the given total.
pub fn half_time_for(total_duration: f64, alpha: f64) -> f64 {
    total_duration / (2.0 * (2.0 - alpha))
}

/// `(Omega, |Omega2|)` of the ramp at `s`, treating `[0, t3]` as closed.
fn ramp(p: &GateParams, s: f64) -> (f64, f64) {
    let tm = p.timing();
    let om = if s < tm.t2 { p.omega_max * (PI * s / (2.0 * p.half_time)).sin() } else { p.omega_max };
    let om2 = if s < tm.t1 {
        p.omega2_max
    } else if s >= tm.t3 {
        0.0
    } else {
        p.omega2_max * (PI * (s - tm.t1) / (2.0 * p.half_time)).cos()
    };
    (om, om2)
}

/// Envelopes `(Omega, |Omega2|)` of the first half-sequence at time `t`.
pub fn half_envelopes(p: &GateParams, t: f64) -> (f64, f64) {
    if t < 0.0 || t >= p.timing().t3 {
        (0.0, 0.0)
    } else {
        ramp(p, t)
    }
}

/// Which end of the ramp a vanishing-field limit is taken from.
#[derive(Clone, Copy)]
enum RampEnd {
    Start,
    End,
}

fn limit_angle(p: &GateParams, end: RampEnd) -> f64 {
    match end {
        // Omega -> 0 while |Omega2| stays at its peak.
        RampEnd::Start => {
            if p.omega2_max > 0.0 {
                FRAC_PI_2
            } else {
                0.0
            }
        }
        // |Omega2| -> 0 while Omega sits at its peak.
        RampEnd::End => {
            if p.omega_max > 0.0 || p.omega2_max == 0.0 {
                0.0
            } else {
                FRAC_PI_2
            }
        }
    }
}

fn ramp_angle(p: &GateParams, s: f64) -> f64 {
    let (om, om2) = ramp(p, s);
    if om == 0.0 && om2 == 0.0 {
        let end = if s <= 0.0 { RampEnd::Start } else { RampEnd::End };
        limit_angle(p, end)
    } else {
        om2.atan2(om)
    }
}

/// Mixing angle `theta2 = atan |Omega2 / Omega|` of the first half-sequence.
/// Where both envelopes vanish the one-sided limit from the nearest interior
/// point is returned.
pub fn mixing_angle(p: &GateParams, t: f64) -> f64 {
    let t3 = p.timing().t3;
    if t <= 0.0 {
        limit_angle(p, RampEnd::Start).max(ramp_angle(p, 0.0))
    } else if t >= t3 {
        limit_angle(p, RampEnd::End)
    } else {
        ramp_angle(p, t)
    }
}

/// The complete gate: ramp, phase step, mirrored ramp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSchedule {
    params: GateParams,
}

pub fn full_gate_schedule(p: &GateParams) -> PulseSchedule {
    PulseSchedule { params: *p }
}

impl PulseSchedule {
    pub fn params(&self) -> &GateParams {
        &self.params
    }

    pub fn midpoint(&self) -> f64 {
        self.params.timing().t3
    }

    /// Position on the ramp for a time inside the schedule.
    fn fold(&self, t: f64) -> f64 {
        let t3 = self.midpoint();
        if t <= t3 {
            t
        } else {
            2.0 * t3 - t
        }
    }

    fn inside(&self, t: f64) -> bool {
        t >= 0.0 && t < self.params.duration()
    }

    /// `(Omega(t), |Omega2(t)|)`.
    pub fn envelopes(&self, t: f64) -> (f64, f64) {
        if self.inside(t) {
            ramp(&self.params, self.fold(t))
        } else {
            (0.0, 0.0)
        }
    }

    /// `phi2(t)`: zero on the first half, `Phi` on the second.
    pub fn phase2(&self, t: f64) -> f64 {
        if t < self.midpoint() {
            0.0
        } else {
            self.params.phase_step
        }
    }

    /// `theta2(t)` over the whole schedule (runs pi/2 -> 0 -> pi/2).
    pub fn mixing_angle(&self, t: f64) -> f64 {
        if !self.inside(t) {
            return limit_angle(&self.params, RampEnd::Start);
        }
        ramp_angle(&self.params, self.fold(t))
    }

    /// `(Omega0(t), |Omega1(t)|, |Omega2(t)|)`.
    pub fn couplings(&self, t: f64) -> [f64; 3] {
        let (om, om2) = self.envelopes(t);
        [om * self.params.theta1.cos(), om * self.params.theta1.sin(), om2]
    }

    /// Writes the plot-data table: `t` (us), `Omega/2pi` and `|Omega2|/2pi`
    /// (kHz), tab separated, one header line.
    pub fn write_plot_data<W: Write>(&self, mut out: W, samples: usize) -> io::Result<()> {
        writeln!(out, "t_us\tomega_khz\tomega2_khz")?;
        let n = samples.max(2);
        let dur = self.params.duration();
        for i in 0..n {
            let t = dur * i as f64 / (n - 1) as f64;
            let (om, om2) = self.envelopes(t.min(dur * (1.0 - 1e-15)));
            writeln!(out, "{:.6}\t{:.6}\t{:.6}", t * 1e6, om / (2e3 * PI), om2 / (2e3 * PI))?;
        }
        Ok(())
    }
}

impl Drive for PulseSchedule {
    fn duration(&self) -> f64 {
        self.params.duration()
    }

    fn fields(&self, t: f64) -> FieldAmplitudes {
        if !self.inside(t) {
            return FieldAmplitudes::default();
        }
        let (om, om2) = self.envelopes(t);
        let p = &self.params;
        FieldAmplitudes {
            omega0: om * p.theta1.cos(),
            omega1: C64::from_polar(om * p.theta1.sin(), p.phi1),
            omega2: C64::from_polar(om2, self.phase2(t)),
            detuning: p.detuning,
            level_offsets: [0.0; 3],
        }
    }

    fn peak_rate(&self) -> f64 {
        let p = &self.params;
        p.omega_max.hypot(p.omega2_max).max(p.detuning.abs())
    }

    fn breakpoints(&self) -> Vec<f64> {
        let tm = self.params.timing();
        let dur = self.params.duration();
        let mut pts: Vec<f64> = [tm.t1, tm.t2, tm.t3, 2.0 * tm.t3 - tm.t2, 2.0 * tm.t3 - tm.t1]
            .into_iter()
            .filter(|t| *t > 0.0 && *t < dur)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * dur);
        pts
    }

    fn peak_coupling(&self, lower: Level) -> f64 {
        match lower {
            Level::Zero => self.params.omega0_max(),
            Level::One => self.params.omega1_max(),
            Level::Two => self.params.omega2_max,
            Level::Upper => 0.0,
        }
    }
}

/// Constant-amplitude pulse on one `|u> <-> |k>` transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquarePulse {
    lower: Level,
    rabi: f64,
    phase: f64,
    duration: f64,
    detuning: f64,
}

impl SquarePulse {
    /// `rabi` in rad/s; the pulse area is `rabi * duration`.
    pub fn new(lower: Level, rabi: f64, phase: f64, duration: f64) -> Result<Self> {
        if lower == Level::Upper {
            return Err(Error::Config("square pulses couple |u> to a lower level".into()));
        }
        if lower == Level::Zero && phase.rem_euclid(2.0 * PI) != 0.0 {
            return Err(Error::Config("the |u>-|0> coupling is real; its phase must be zero".into()));
        }
        if !(rabi >= 0.0 && duration > 0.0 && rabi.is_finite() && duration.is_finite()) {
            return Err(Error::Config("square pulse needs rabi >= 0 and duration > 0".into()));
        }
        Ok(SquarePulse { lower, rabi, phase, duration, detuning: 0.0 })
    }

    /// Pulse with the given area (e.g. pi for a transfer pulse).
    pub fn with_area(lower: Level, rabi: f64, phase: f64, area: f64) -> Result<Self> {
        if rabi <= 0.0 {
            return Err(Error::Config("square pulse with a given area needs rabi > 0".into()));
        }
        Self::new(lower, rabi, phase, area / rabi)
    }

    pub fn with_detuning(self, detuning: f64) -> Self {
        SquarePulse { detuning, ..self }
    }

    pub fn lower(&self) -> Level {
        self.lower
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn area(&self) -> f64 {
        self.rabi * self.duration
    }

    /// Fields while the pulse is on.
    pub fn on_fields(&self) -> FieldAmplitudes {
        let mut f = FieldAmplitudes { detuning: self.detuning, ..Default::default() };
        let om = C64::from_polar(self.rabi, self.phase);
        match self.lower {
            Level::Zero => f.omega0 = self.rabi,
            Level::One => f.omega1 = om,
            Level::Two => f.omega2 = om,
            Level::Upper => unreachable!("rejected at construction"),
        }
        f
    }
}

impl Drive for SquarePulse {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn fields(&self, t: f64) -> FieldAmplitudes {
        if t >= 0.0 && t < self.duration {
            self.on_fields()
        } else {
            FieldAmplitudes::default()
        }
    }

    fn peak_rate(&self) -> f64 {
        self.rabi.max(self.detuning.abs())
    }

    fn peak_coupling(&self, lower: Level) -> f64 {
        if lower == self.lower {
            self.rabi
        } else {
            0.0
        }
    }
}

/// Free evolution with all fields off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Idle {
    pub duration: f64,
}

impl Drive for Idle {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn fields(&self, _t: f64) -> FieldAmplitudes {
        FieldAmplitudes::default()
    }

    fn peak_rate(&self) -> f64 {
        0.0
    }

    fn peak_coupling(&self, _lower: Level) -> f64 {
        0.0
    }
}

/// The part of another drive between `start` and `end`, re-based to zero.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a, D: Drive> {
    inner: &'a D,
    start: f64,
    end: f64,
}

impl<'a, D: Drive> Window<'a, D> {
    pub fn new(inner: &'a D, start: f64, end: f64) -> Result<Self> {
        if !(0.0 <= start && start < end && end <= inner.duration()) {
            return Err(Error::Config(format!("window [{start}, {end}) outside the drive")));
        }
        Ok(Window { inner, start, end })
    }
}

impl<D: Drive> Drive for Window<'_, D> {
    fn duration(&self) -> f64 {
        self.end - self.start
    }

    fn fields(&self, t: f64) -> FieldAmplitudes {
        if t >= 0.0 && t < self.duration() {
            self.inner.fields(t + self.start)
        } else {
            FieldAmplitudes::default()
        }
    }

    fn peak_rate(&self) -> f64 {
        self.inner.peak_rate()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.inner
            .breakpoints()
            .into_iter()
            .filter(|t| *t > self.start && *t < self.end)
            .map(|t| t - self.start)
            .collect()
    }

    fn peak_coupling(&self, lower: Level) -> f64 {
        self.inner.peak_coupling(lower)
    }
}

/// Drives played back to back.
#[derive(Default)]
pub struct Sequence {
    parts: Vec<Box<dyn Drive + Send>>,
    starts: Vec<f64>,
    duration: f64,
}

impl Sequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn then<D: Drive + Send + 'static>(mut self, part: D) -> Self {
        self.starts.push(self.duration);
        self.duration += part.duration();
        self.parts.push(Box::new(part));
        self
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    fn locate(&self, t: f64) -> Option<usize> {
        if t < 0.0 || t >= self.duration {
            return None;
        }
        let idx = self.starts.partition_point(|s| *s <= t);
        Some(idx.saturating_sub(1))
    }
}

impl std::fmt::Debug for Sequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sequence").field("parts", &self.parts.len()).field("duration", &self.duration).finish()
    }
}

impl Drive for Sequence {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn fields(&self, t: f64) -> FieldAmplitudes {
        match self.locate(t) {
            Some(i) => self.parts[i].fields(t - self.starts[i]),
            None => FieldAmplitudes::default(),
        }
    }

    fn peak_rate(&self) -> f64 {
        self.parts.iter().map(|p| p.peak_rate()).fold(0.0, f64::max)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        for (part, start) in self.parts.iter().zip(&self.starts) {
            if *start > 0.0 {
                pts.push(*start);
            }
            pts.extend(part.breakpoints().into_iter().map(|t| t + start));
        }
        pts
    }

    fn peak_coupling(&self, lower: Level) -> f64 {
        self.parts.iter().map(|p| p.peak_coupling(lower)).fold(0.0, f64::max)
    }
}

/// Estimate of the probability of a diabatic transition out of the dark
/// state, `max 2 theta2'(t)^2 / Omega_total(t)^2`, with `theta2'` from
/// central differences on `points` uniform samples of the whole gate.
pub fn diabaticity_metric(p: &GateParams, points: usize) -> Result<f64> {
    if points < 100 {
        return Err(Error::Resolution(format!("{points} samples; at least 100 required")));
    }
    p.validate()?;
    let sched = full_gate_schedule(p);
    let dur = p.duration();
    let h = dur / (points - 1) as f64;
    let theta: Vec<f64> = (0..points).map(|i| sched.mixing_angle(i as f64 * h)).collect();
    let mut worst: f64 = 0.0;
    for i in 1..points - 1 {
        let (om, om2) = sched.envelopes(i as f64 * h);
        let total2 = om * om + om2 * om2;
        if total2 == 0.0 {
            continue;
        }
        let rate = (theta[i + 1] - theta[i - 1]) / (2.0 * h);
        worst = worst.max(2.0 * rate * rate / total2);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    const KHZ: f64 = 2.0 * PI * 1e3;

    fn x_params() -> GateParams {
        GateParams::from_peaks(125.0 * KHZ, 125.0 * KHZ, 170.0 * KHZ, 120e-6, 0.85).unwrap()
    }

    #[test]
    fn boundary_values_of_half() {
        let p = x_params();
        let (om, om2) = half_envelopes(&p, 0.0);
        assert_eq!(om, 0.0);
        assert_eq!(om2, p.omega2_max);
        let t3 = p.timing().t3;
        let (om, om2) = half_envelopes(&p, t3 * (1.0 - 1e-12));
        assert!((om - p.omega_max).abs() < 1e-9 * p.omega_max);
        assert!(om2 < 1e-9 * p.omega2_max);
        assert_eq!(half_envelopes(&p, t3), (0.0, 0.0));
        assert_eq!(half_envelopes(&p, -1e-9), (0.0, 0.0));
    }

    #[test]
    fn value_at_t_equals_big_t() {
        let p = x_params();
        let (om, om2) = half_envelopes(&p, p.half_time);
        assert!((om - p.omega_max).abs() < 1e-12 * p.omega_max);
        // cos(0.425 pi) = 0.23344536...
        assert!((om2 / p.omega2_max - (0.425 * PI).cos()).abs() < 1e-12);
        assert!((om2 / p.omega2_max - 0.2334).abs() < 1e-4);
    }

    #[test]
    fn squared_forms_match_case_analysis() {
        let p = x_params();
        let tm = p.timing();
        for i in 0..500 {
            let t = tm.t3 * i as f64 / 500.0;
            let (om, om2) = half_envelopes(&p, t);
            let c = (PI * t / (2.0 * p.half_time)).cos();
            let om_sq = if t < tm.t2 { p.omega_max.powi(2) * (1.0 - c * c) } else { p.omega_max.powi(2) };
            let om2_sq = if t < tm.t1 {
                p.omega2_max.powi(2)
            } else {
                p.omega2_max.powi(2) * (PI * (t - tm.t1) / (2.0 * p.half_time)).cos().powi(2)
            };
            assert!((om * om - om_sq).abs() < 1e-9 * p.omega_max.powi(2));
            assert!((om2 * om2 - om2_sq).abs() < 1e-9 * p.omega2_max.powi(2));
        }
    }

    #[test]
    fn mixing_angle_endpoints() {
        let p = x_params();
        assert!((mixing_angle(&p, 0.0) - FRAC_PI_2).abs() < 1e-15);
        let t3 = p.timing().t3;
        assert!(mixing_angle(&p, t3 * (1.0 - 1e-13)) < 1e-9);
        assert_eq!(mixing_angle(&p, t3), 0.0);
        let t = 0.3 * p.half_time;
        let (om, om2) = half_envelopes(&p, t);
        let q = GateParams { omega2_max: p.omega2_max * om / om2, ..p };
        assert!((mixing_angle(&q, t) - FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn quoted_duration_gives_half_time() {
        let p = x_params();
        assert!((p.half_time - 120e-6 / 2.3).abs() < 1e-18);
        assert!((p.half_time * 1e6 - 52.17).abs() < 0.01);
        assert!((p.duration() - 120e-6).abs() < 1e-18);
    }

    #[test]
    fn schedule_is_mirror_symmetric() {
        let s = full_gate_schedule(&x_params());
        let d = s.duration();
        for i in 1..100 {
            let t = d * i as f64 / 100.0 + 1.3e-9;
            let (a, b) = s.envelopes(t);
            let (c, e) = s.envelopes(d - t);
            assert!((a - c).abs() < 1e-6 * a.max(1.0));
            assert!((b - e).abs() < 1e-6 * b.max(1.0));
        }
    }

    #[test]
    fn schedule_angle_trajectory() {
        let s = full_gate_schedule(&x_params());
        let d = s.duration();
        assert!((s.mixing_angle(0.0) - FRAC_PI_2).abs() < 1e-15);
        assert!(s.mixing_angle(s.midpoint()).abs() < 1e-15);
        assert!((s.mixing_angle(d * (1.0 - 1e-12)) - FRAC_PI_2).abs() < 1e-6);
        assert_eq!(s.envelopes(s.midpoint()).1, 0.0);
        assert_eq!(s.envelopes(d), (0.0, 0.0));
        assert_eq!(s.envelopes(-1e-12), (0.0, 0.0));
        assert_eq!(s.phase2(s.midpoint() * 0.99), 0.0);
        assert_eq!(s.phase2(s.midpoint() * 1.01), PI);
    }

    #[test]
    fn envelopes_are_continuous_inside() {
        let s = full_gate_schedule(&x_params());
        let d = s.duration();
        let mut prev_gap = f64::INFINITY;
        for n in [1_000usize, 10_000, 100_000] {
            let h = d / n as f64;
            let mut gap: f64 = 0.0;
            for i in 1..n - 1 {
                let (a, b) = s.envelopes(i as f64 * h);
                let (c, e) = s.envelopes((i + 1) as f64 * h);
                gap = gap.max((a - c).abs()).max((b - e).abs());
            }
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-4 * s.params().omega2_max);
    }

    #[test]
    fn angle_is_monotone_on_each_half() {
        for k in 0..7 {
            let alpha = 0.55 + 0.05 * k as f64;
            let p = GateParams::from_peaks(125.0 * KHZ, 125.0 * KHZ, 170.0 * KHZ, 120e-6, alpha).unwrap();
            let s = full_gate_schedule(&p);
            let n = 4000;
            let d = s.duration();
            let th: Vec<f64> = (0..n).map(|i| s.mixing_angle(d * i as f64 / n as f64)).collect();
            for i in 1..n {
                let t = d * i as f64 / n as f64;
                if t <= s.midpoint() {
                    assert!(th[i] <= th[i - 1] + 1e-15, "alpha {alpha} step {i}");
                } else {
                    assert!(th[i] >= th[i - 1] - 1e-15, "alpha {alpha} step {i}");
                }
            }
        }
    }

    #[test]
    fn breakpoints_are_sorted_and_interior() {
        let s = full_gate_schedule(&x_params());
        let b = s.breakpoints();
        assert_eq!(b.len(), 5);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        assert!((b[2] - s.midpoint()).abs() < 1e-18);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(GateParams::from_peaks(1.0, 1.0, 1.0, 1e-4, 1.2).is_err());
        assert!(GateParams::from_peaks(1.0, 1.0, 1.0, -1e-4, 0.5).is_err());
        assert!(GateParams::from_peaks(1.0, 1.0, -1.0, 1e-4, 0.5).is_err());
    }

    #[test]
    fn diabaticity_needs_resolution() {
        assert!(matches!(diabaticity_metric(&x_params(), 99), Err(Error::Resolution(_))));
    }

    #[test]
    fn diabaticity_constant_angle_is_zero() {
        let p = GateParams { omega2_max: 0.0, ..x_params() };
        assert_eq!(diabaticity_metric(&p, 10_000).unwrap(), 0.0);
    }

    #[test]
    fn diabaticity_scales_with_inverse_square_duration() {
        let p = x_params();
        let a = diabaticity_metric(&p, 20_000).unwrap();
        let b = diabaticity_metric(&p.with_duration(2.0 * p.duration()), 20_000).unwrap();
        assert!((a / b - 4.0).abs() < 0.05 * 4.0, "ratio {}", a / b);
    }

    #[test]
    fn diabaticity_regression_for_x_preset() {
        let m = diabaticity_metric(&x_params(), 10_000).unwrap();
        assert!(m < 0.05, "{m}");
        assert!((m - X_PI_DIABATICITY).abs() < 1e-6 * X_PI_DIABATICITY.max(1e-12), "{m:e}");
    }

    // Independent evaluation on the same 10^4-point grid.
    const X_PI_DIABATICITY: f64 = 1.718_134_777_733_17e-3;

    #[test]
    fn square_pulse_fields() {
        let sp = SquarePulse::with_area(Level::One, 2.0, 0.3, PI).unwrap();
        assert!((sp.duration() - PI / 2.0).abs() < 1e-15);
        let f = sp.fields(0.1);
        assert!((f.omega1 - C64::from_polar(2.0, 0.3)).norm() < 1e-15);
        assert_eq!(sp.fields(sp.duration()), FieldAmplitudes::default());
        assert!(SquarePulse::new(Level::Zero, 1.0, 0.5, 1.0).is_err());
        assert!(SquarePulse::new(Level::Upper, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn window_rebases_time() {
        let s = full_gate_schedule(&x_params());
        let w = Window::new(&s, s.midpoint(), s.duration()).unwrap();
        let f = w.fields(1e-6);
        let g = s.fields(s.midpoint() + 1e-6);
        assert_eq!(f, g);
        assert_eq!(w.breakpoints().len(), 2);
        assert!(Window::new(&s, 0.0, 2.0 * s.duration()).is_err());
    }

    #[test]
    fn sequence_concatenates() {
        let a = SquarePulse::new(Level::One, 1.0, 0.0, 2.0).unwrap();
        let b = SquarePulse::new(Level::Two, 3.0, 0.0, 1.0).unwrap();
        let seq = Sequence::new().then(a).then(Idle { duration: 0.5 }).then(b);
        assert_eq!(seq.duration(), 3.5);
        assert_eq!(seq.breakpoints(), vec![2.0, 2.5]);
        assert_eq!(seq.fields(1.0).omega1, C64::from(1.0));
        assert_eq!(seq.fields(2.2), FieldAmplitudes::default());
        assert_eq!(seq.fields(3.0).omega2, C64::from(3.0));
        assert_eq!(seq.fields(3.5), FieldAmplitudes::default());
        assert_eq!(seq.peak_rate(), 3.0);
    }

    #[test]
    fn plot_data_layout() {
        let s = full_gate_schedule(&x_params());
        let mut buf = Vec::new();
        s.write_plot_data(&mut buf, 11).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 12);
        assert_eq!(lines[0], "t_us\tomega_khz\tomega2_khz");
        let first: Vec<f64> = lines[1].split('\t').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first, vec![0.0, 0.0, 170.0]);
    }

    proptest! {
        #[test]
        fn duration_is_exact(total in 1e-6f64..1e-3, alpha in 0.0f64..=1.0) {
            let p = GateParams::from_peaks(1e5, 1e5, 1e5, total, alpha).unwrap();
            prop_assert!((p.duration() - 2.0 * (2.0 - alpha) * p.half_time).abs() <= 1e-15 * total);
            prop_assert!(((p.duration() - total) / total).abs() < 1e-14);
        }
    }
}
