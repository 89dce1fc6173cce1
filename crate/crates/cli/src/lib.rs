//! Command-line front end: synthesize value functions, run closed loops,
//! compare policies and time the decision paths. Output is CSV or plain text.

pub mod commands;
pub mod config;

use std::fmt;

pub use commands::{bench, eval, simulate, synth, BenchOptions, PolicyKind, SimulateOptions};
pub use config::{Resolved, RunConfig};

/// Failure classes with distinct process exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Budget(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Budget(m) => write!(f, "solver budget exceeded: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ampc_core::Error> for CliError {
    fn from(e: ampc_core::Error) -> Self {
        use ampc_core::Error as E;
        let msg = e.to_string();
        let mut root = &e;
        while let E::Simulation { source, .. } = root {
            root = source;
        }
        match root {
            E::NodeBudget { .. } | E::EnumerationBudget { .. } => CliError::Budget(msg),
            E::NonFinite { .. } | E::Fit(_) => CliError::Numeric(msg),
            _ => CliError::Config(msg),
        }
    }
}
