//! Scripted experiments: fringe scans, robustness sweeps and fidelity
//! tables, with their configuration and presets.

pub mod config;
pub mod fringe;
pub mod presets;
pub mod sweep;
pub mod tables;
pub mod units;

pub use config::{GateSpec, RunConfig};
pub use fringe::{fit_fringe, phase_grid, run_fringe, FringeFit, FringeScan, GateFamily};
pub use presets::{preset, PRESET_NAMES};
pub use sweep::{run_robustness_sweep, SweepMode, SweepResult, SweepSpec};
pub use tables::{reproduce_tables, TableReport};
