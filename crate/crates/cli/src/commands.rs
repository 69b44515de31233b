//! The five subcommands.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use serde_json::{json, Value};
use tripod_core::dynamics::{
    default_step, evolve_lindblad_recorded, evolve_schrodinger_recorded, lindblad_channel, propagator,
    write_trajectory, NoiseModel, QubitChannel,
};
use tripod_core::harness::config::{GateValues, DEFAULT_PHASE_POINTS};
use tripod_core::harness::fringe::{fit_fringe, phase_grid, run_fringe, write_fringe_tsv, FringeFit, GateFamily};
use tripod_core::harness::sweep::{run_robustness_sweep, write_sweep_tsv, SweepMode, SweepSpec};
use tripod_core::harness::tables::{load_fixture, reproduce_tables};
use tripod_core::harness::{GateSpec, RunConfig};
use tripod_core::pulse::{diabaticity_metric, full_gate_schedule, Drive, GateParams};
use tripod_core::quantum::{DensityMatrix, Level, Mat2, Mat4, QuantumState};
use tripod_core::tomography::{parse_records_str, HadamardSign, VarianceMethod};
use tripod_core::tripod::target_unitary;

use crate::report::{CliError, Report};
use crate::validate::run_validation;
use crate::{Cli, Command};

const KHZ: f64 = 2.0 * PI * 1e3;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub shots: Option<u64>,
}

/// Settings after merging flags over the config file.
struct Context {
    cfg: RunConfig,
    preset: Option<String>,
    seed: u64,
    shots: Option<u64>,
}

impl Context {
    fn load(cli: &Cli) -> Result<Self, CliError> {
        let g = Globals::from(cli);
        let cfg = match &cli.config {
            Some(path) => {
                let src = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                RunConfig::parse(&src).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(c) = &cfg.command {
            if c != cli.command.name() {
                return Err(CliError::Config(format!(
                    "config is for command '{c}', not '{}'",
                    cli.command.name()
                )));
            }
        }
        if g.shots == Some(0) {
            return Err(CliError::Config("--shots must be positive".into()));
        }
        Ok(Context {
            preset: g.preset.or_else(|| cfg.preset.clone()),
            seed: g.seed.or(cfg.seed).unwrap_or(0),
            shots: g.shots.or(cfg.shots),
            cfg,
        })
    }

    fn gate(&self, fallback: Option<&str>) -> Result<GateSpec, CliError> {
        let preset = self.preset.as_deref().or(fallback);
        if preset.is_none() && self.cfg.gate == GateValues::default() {
            return Err(CliError::Config("no gate given: pass --preset or a [gate] table".into()));
        }
        Ok(self.cfg.gate_spec(preset)?)
    }

    fn echo(&self, gate: Option<&GateSpec>) -> Value {
        json!({
            "gate": gate.map(gate_echo),
            "noise": noise_echo(&self.cfg.noise),
            "seed": self.seed,
            "shots": self.shots,
            "points": self.cfg.points,
            "step_s": self.cfg.step,
        })
    }
}

fn gate_echo(g: &GateSpec) -> Value {
    let p = &g.params;
    json!({
        "preset": g.preset,
        "family": g.family.label(),
        "omega0_khz": p.omega0_max() / KHZ,
        "omega1_khz": p.omega1_max() / KHZ,
        "omega2_khz": p.omega2_max / KHZ,
        "duration_us": p.duration() * 1e6,
        "alpha": p.alpha,
        "phase_rad": p.phase_step,
        "phi1_rad": p.phi1,
        "detuning_khz": p.detuning / KHZ,
    })
}

fn noise_echo(n: &NoiseModel) -> Value {
    json!({
        "dephasing_per_s": n.dephasing,
        "static_offsets_khz": n.shifts.static_offsets.map(|d| d / KHZ),
        "stark": n.shifts.stark.iter().map(|s| json!({
            "target": s.target.label(),
            "source": s.source.label(),
            "scale": s.scale,
            "detuning_khz": s.detuning / KHZ,
        })).collect::<Vec<_>>(),
    })
}

fn describe_gate(text: &mut String, g: &GateSpec) {
    let p = &g.params;
    let _ = writeln!(
        text,
        "gate: {} (family {})",
        g.preset.unwrap_or("custom"),
        g.family.label()
    );
    let _ = writeln!(
        text,
        "  peaks (kHz): {:.3} {:.3} {:.3}   duration {:.3} us   alpha {}   Phi {:.6} rad",
        p.omega0_max() / KHZ,
        p.omega1_max() / KHZ,
        p.omega2_max / KHZ,
        p.duration() * 1e6,
        p.alpha,
        p.phase_step
    );
}

fn fit_json(f: &FringeFit) -> Value {
    json!({
        "contrast": f.contrast,
        "contrast_err": f.contrast_err,
        "shift_rad": f.shift,
        "shift_err": if f.shift_err.is_finite() { json!(f.shift_err) } else { json!("inf") },
        "shift_defined": f.shift_defined,
        "offset": f.offset,
        "offset_err": f.offset_err,
    })
}

pub fn run(cli: &Cli) -> Result<Report, CliError> {
    let ctx = Context::load(cli)?;
    match &cli.command {
        Command::Gate => cmd_gate(&ctx),
        Command::Fringe { points } => cmd_fringe(&ctx, *points),
        Command::Sweep => cmd_sweep(&ctx),
        Command::Tomo { input, fixture } => cmd_tomo(&ctx, input.clone(), fixture.clone()),
        Command::Validate { verbatim_hadamard } => {
            let sign = if *verbatim_hadamard { HadamardSign::Verbatim } else { HadamardSign::Corrected };
            Ok(run_validation(sign, ctx.echo(None)))
        }
    }
}

fn matrix_json(m: &Mat2) -> Value {
    json!((0..2)
        .map(|i| (0..2).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn cmd_gate(ctx: &Context) -> Result<Report, CliError> {
    let g = ctx.gate(None)?;
    let p: GateParams = g.params;
    let noise = &ctx.cfg.noise;
    let schedule = full_gate_schedule(&p);
    let step = ctx.cfg.step.unwrap_or_else(|| default_step(&schedule, &noise.shifts));
    let u = propagator(&schedule, &noise.shifts, step)?;
    let map: Mat2 = u.fixed_view::<2, 2>(0, 0).into_owned();
    let channel =
        if noise.is_dissipative() { lindblad_channel(&schedule, noise, step)? } else { QubitChannel::from_unitary(&u) };
    let target = target_unitary(p.theta1, p.phi1, p.phase_step);
    let fidelity = channel.average_fidelity(&target);
    let leakage = [Level::Zero, Level::One]
        .iter()
        .map(|&k| {
            let out: Mat4 = channel.apply_matrix(DensityMatrix::pure(k).matrix());
            (out[(2, 2)].re + out[(3, 3)].re).max(0.0)
        })
        .fold(0.0, f64::max);
    let metric = diabaticity_metric(&p, 10_000)?;
    let identity = p.phase_step == 0.0;

    let mut schedule_tsv = Vec::new();
    schedule.write_plot_data(&mut schedule_tsv, 1001).expect("in-memory write");
    let every = ((schedule.duration() / step) as usize / 500).max(1);
    let trajectory = if noise.is_dissipative() {
        evolve_lindblad_recorded(&schedule, &DensityMatrix::pure(Level::Zero), noise, step, every)?.trajectory
    } else {
        evolve_schrodinger_recorded(&schedule, &QuantumState::basis(Level::Zero), &noise.shifts, step, every)?
            .trajectory
    };
    let mut trajectory_tsv = Vec::new();
    write_trajectory(&mut trajectory_tsv, &trajectory).expect("in-memory write");

    let mut text = String::new();
    describe_gate(&mut text, &g);
    let _ = writeln!(text, "qubit map <i|U|j>:");
    for i in 0..2 {
        let row: Vec<String> =
            (0..2).map(|j| format!("{:+.6}{:+.6}i", map[(i, j)].re, map[(i, j)].im)).collect();
        let _ = writeln!(text, "  [{}]", row.join(", "));
    }
    let target_name = if identity { "identity" } else { "U(theta1, phi1, Phi)" };
    let _ = writeln!(text, "target: {target_name}");
    let _ = writeln!(text, "gate fidelity: {fidelity:.6}");
    let _ = writeln!(text, "leakage: {leakage:.3e}");
    let _ = writeln!(text, "diabaticity metric: {metric:.3e}");
    Ok(Report {
        command: "gate",
        config: ctx.echo(Some(&g)),
        results: json!({
            "qubit_map": matrix_json(&map),
            "target": target_name,
            "target_map": matrix_json(&target),
            "fidelity": fidelity,
            "leakage": leakage,
            "diabaticity_metric": metric,
            "step_s": step,
        }),
        text,
        files: vec![
            ("schedule.tsv".into(), String::from_utf8(schedule_tsv).expect("ascii")),
            ("trajectory.tsv".into(), String::from_utf8(trajectory_tsv).expect("ascii")),
        ],
        passed: true,
    })
}

fn cmd_fringe(ctx: &Context, points: Option<usize>) -> Result<Report, CliError> {
    let g = ctx.gate(None)?;
    let n = points.or(ctx.cfg.points).unwrap_or(DEFAULT_PHASE_POINTS);
    if n == 0 {
        return Err(CliError::Config("fringe needs at least one phase point".into()));
    }
    let grid = phase_grid(n);
    let scan = run_fringe(g.family, &g.params, &grid, &ctx.cfg.noise, ctx.shots, ctx.seed)?;
    let fit = if n >= 4 { Some(fit_fringe(&scan)?) } else { None };
    let mut tsv = Vec::new();
    write_fringe_tsv(&mut tsv, &scan, fit.as_ref()).expect("in-memory write");

    let mut text = String::new();
    describe_gate(&mut text, &g);
    let _ = writeln!(text, "observed level: {}", scan.target_level.label());
    let _ = writeln!(text, "{:>10} {:>10} {:>10} {:>10}", "Phi/rad", "P", "err", "leakage");
    for i in 0..n {
        let _ = writeln!(
            text,
            "{:>10.4} {:>10.4} {:>10.4} {:>10.2e}",
            scan.phase_grid[i], scan.populations[i], scan.errors[i], scan.leakage[i]
        );
    }
    if let Some(f) = &fit {
        let _ = writeln!(text, "contrast: {:.4} ± {:.4}", f.contrast, f.contrast_err);
        if f.shift_defined {
            let _ = writeln!(text, "shift: {:.4} ± {:.4} rad", f.shift, f.shift_err);
        } else {
            let _ = writeln!(text, "shift: undefined (zero amplitude)");
        }
        let _ = writeln!(text, "offset: {:.4} ± {:.4}", f.offset, f.offset_err);
    }
    Ok(Report {
        command: "fringe",
        config: ctx.echo(Some(&g)),
        results: json!({
            "observed_level": scan.target_level.label(),
            "phase_rad": scan.phase_grid,
            "population": scan.populations,
            "error": scan.errors,
            "leakage": scan.leakage,
            "fit": fit.as_ref().map(fit_json),
        }),
        text,
        files: vec![("fringe.tsv".into(), String::from_utf8(tsv).expect("ascii"))],
        passed: true,
    })
}

fn cmd_sweep(ctx: &Context) -> Result<Report, CliError> {
    let g = ctx.gate(Some("robustness-290"))?;
    let (mode, grid, durations) = match &ctx.cfg.sweep {
        Some(s) => (s.mode, s.omega2_grid.clone(), s.durations.clone()),
        None => {
            let grid = (1..=12).map(|i| 5.0 * i as f64 * KHZ).collect();
            match g.family {
                GateFamily::X => (SweepMode::VaryRabiAndDuration, grid, vec![145e-6, 290e-6, 435e-6]),
                GateFamily::Z => (SweepMode::VaryRabiFixedDuration, grid, vec![]),
            }
        }
    };
    let spec = SweepSpec {
        mode,
        family: g.family,
        base: g.params,
        omega2_grid: grid,
        durations,
        phases: phase_grid(ctx.cfg.points.unwrap_or(DEFAULT_PHASE_POINTS)),
    };
    let result = run_robustness_sweep(&spec, &ctx.cfg.noise, ctx.shots, ctx.seed)?;
    let mut tsv = Vec::new();
    write_sweep_tsv(&mut tsv, &result).expect("in-memory write");

    let mut text = String::new();
    describe_gate(&mut text, &g);
    let _ = writeln!(text, "mode: {}", mode.label());
    let _ = writeln!(text, "{:>10} {:>10} {:>16} {:>18}", "Omega2/kHz", "T/us", "contrast", "shift/rad");
    for p in &result.points {
        let f = &p.fit;
        let _ = writeln!(
            text,
            "{:>10.2} {:>10.1} {:>8.4} ± {:<6.4} {:>8.4} ± {:<7.4}",
            p.omega2_peak / KHZ,
            p.duration * 1e6,
            f.contrast,
            f.contrast_err,
            f.shift,
            f.shift_err
        );
    }
    let points: Vec<Value> = result
        .points
        .iter()
        .map(|p| json!({"omega2_khz": p.omega2_peak / KHZ, "duration_us": p.duration * 1e6, "fit": fit_json(&p.fit)}))
        .collect();
    Ok(Report {
        command: "sweep",
        config: ctx.echo(Some(&g)),
        results: json!({"mode": mode.label(), "family": g.family.label(), "points": points}),
        text,
        files: vec![("sweep.tsv".into(), String::from_utf8(tsv).expect("ascii"))],
        passed: true,
    })
}

fn cmd_tomo(ctx: &Context, input: Option<PathBuf>, fixture: Option<String>) -> Result<Report, CliError> {
    let input = input.or_else(|| ctx.cfg.tomo_input.clone());
    let fixture = fixture.or_else(|| ctx.cfg.tomo_fixture.clone());
    let (source, records) = match (input, fixture) {
        (Some(_), Some(_)) => return Err(CliError::Config("give either an input file or --fixture, not both".into())),
        (Some(path), None) => {
            let src = fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let recs =
                parse_records_str(&src).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            (path.display().to_string(), recs)
        }
        (None, Some(name)) => (format!("fixture:{name}"), load_fixture(&name)?),
        (None, None) => return Err(CliError::Config("tomo needs an input file or --fixture".into())),
    };
    let report = reproduce_tables(&records, VarianceMethod::Pairwise, HadamardSign::Corrected);
    let mut text = Vec::new();
    report.write_text(&mut text).expect("in-memory write");
    let mut tsv = Vec::new();
    report.write_tsv(&mut tsv).expect("in-memory write");
    let mut config = ctx.echo(None);
    config["input"] = json!(source);
    Ok(Report {
        command: "tomo",
        config,
        results: serde_json::to_value(&report).expect("report serializes"),
        text: String::from_utf8(text).expect("utf8"),
        files: vec![("fidelity.tsv".into(), String::from_utf8(tsv).expect("ascii"))],
        passed: true,
    })
}
