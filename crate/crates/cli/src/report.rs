//! Run output: text or JSON summary plus tab-separated data files.

use std::fmt;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use tripod_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Machine,
}

/// Failures that end a run without a report.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files.
    Config(String),
    /// Integration, fitting or other numerical failure.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse { .. } | Error::Domain(_) | Error::InvalidBloch(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

/// Everything one command produces.
#[derive(Debug)]
pub struct Report {
    pub command: &'static str,
    pub config: Value,
    pub results: Value,
    pub text: String,
    /// Plot-data files written next to the summary.
    pub files: Vec<(String, String)>,
    /// False when a validation check failed.
    pub passed: bool,
}

impl Report {
    pub fn document(&self) -> Value {
        json!({
            "tool": "tripod",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "results": self.results,
            "passed": self.passed,
        })
    }

    fn rendered(&self, format: Format) -> String {
        match format {
            Format::Text => self.text.clone(),
            Format::Machine => {
                let mut s = serde_json::to_string_pretty(&self.document()).expect("JSON values serialize");
                s.push('\n');
                s
            }
        }
    }

    pub fn emit(&self, format: Format, out: Option<&Path>) -> Result<(), CliError> {
        let body = self.rendered(format);
        print!("{body}");
        if let Some(dir) = out {
            let io = |e: std::io::Error| CliError::Config(format!("cannot write to {}: {e}", dir.display()));
            fs::create_dir_all(dir).map_err(io)?;
            let name = match format {
                Format::Text => "summary.txt",
                Format::Machine => "summary.json",
            };
            fs::write(dir.join(name), &body).map_err(io)?;
            for (file, contents) in &self.files {
                fs::write(dir.join(file), contents).map_err(io)?;
            }
        }
        Ok(())
    }
}
