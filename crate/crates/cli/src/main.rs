//! `tripod`: gates, fringe scans, sweeps, tomography analysis and self-checks.

mod commands;
mod report;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use report::Format;

#[derive(Debug, Parser)]
#[command(name = "tripod", version, about = "Holonomic tripod gate simulator and analysis tool")]
pub struct Cli {
    /// Run definition (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Named gate parameter set, applied beneath the config's gate keys.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Shots per measured population; exact probabilities when omitted.
    #[arg(long, global = true, value_name = "N")]
    shots: Option<u64>,
    /// Directory for the summary and plot-data files.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Machine,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one gate: qubit map, fidelity, leakage, diabaticity.
    Gate,
    /// Scan the gate phase and fit the population fringe.
    Fringe {
        /// Number of phase points from 0 to 2 pi.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Fringe contrast and shift versus peak Rabi frequency.
    Sweep,
    /// Fidelity report for a population file or a bundled table.
    Tomo {
        input: Option<PathBuf>,
        #[arg(long, value_name = "NAME")]
        fixture: Option<String>,
    },
    /// Run the built-in consistency checks.
    Validate {
        #[arg(long, hide = true)]
        verbatim_hadamard: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gate => "gate",
            Command::Fringe { .. } => "fringe",
            Command::Sweep => "sweep",
            Command::Tomo { .. } => "tomo",
            Command::Validate { .. } => "validate",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = match cli.format {
        FormatArg::Text => Format::Text,
        FormatArg::Machine => Format::Machine,
    };
    let outcome = commands::run(&cli).and_then(|report| {
        report.emit(format, cli.out.as_deref())?;
        Ok(report.passed)
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("tripod {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}

impl From<&Cli> for commands::Globals {
    fn from(c: &Cli) -> Self {
        commands::Globals { preset: c.preset.clone(), seed: c.seed, shots: c.shots }
    }
}
