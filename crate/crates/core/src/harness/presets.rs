//! Named gate parameter sets shipped with the crate.

use super::config::{parse_gate_table, GateSpec};
use crate::{Error, Result};

pub const PRESET_NAMES: [&str; 9] = [
    "x-pi-optical",
    "z-pi-optical",
    "x-halfpi",
    "z-halfpi",
    "x-rf",
    "z-rf",
    "robustness-145",
    "robustness-290",
    "robustness-435",
];

/// TOML source of a preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "x-pi-optical" => include_str!("../../presets/x-pi-optical.toml"),
        "z-pi-optical" => include_str!("../../presets/z-pi-optical.toml"),
        "x-halfpi" => include_str!("../../presets/x-halfpi.toml"),
        "z-halfpi" => include_str!("../../presets/z-halfpi.toml"),
        "x-rf" => include_str!("../../presets/x-rf.toml"),
        "z-rf" => include_str!("../../presets/z-rf.toml"),
        "robustness-145" => include_str!("../../presets/robustness-145.toml"),
        "robustness-290" => include_str!("../../presets/robustness-290.toml"),
        "robustness-435" => include_str!("../../presets/robustness-435.toml"),
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<GateSpec> {
    let src = preset_source(name)
        .ok_or_else(|| Error::Config(format!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", "))))?;
    let table = parse_gate_table(src).map_err(|e| Error::Config(format!("preset {name}: {e}")))?;
    let mut spec = table.finish().map_err(|e| Error::Config(format!("preset {name}: {e}")))?;
    spec.preset = PRESET_NAMES.iter().copied().find(|n| *n == name);
    Ok(spec)
}
