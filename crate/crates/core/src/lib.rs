//! Simulation and analysis of holonomic single-qubit gates driven by two
//! sequential STIRAP processes in a four-level tripod system.

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod pulse;
pub mod quantum;
pub mod tomography;
pub mod tripod;

pub use error::{Error, Result};
