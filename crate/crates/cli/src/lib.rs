//! Command line front end for `tidelock`: scenario files in, CSV and JSON
//! results out.
//!
//! All quantities are nondimensional. Lengths are in units of the mean body
//! radius, masses follow from the density (1 by default), and the planet's
//! gravitational parameter `kM` defaults to 1, so a circular orbit of radius
//! `r` has rate `√(1/r³)`.
//!
//! Exit codes: 0 on success whatever the outcome, 2 for configuration
//! errors, 3 for numerical failures (no convergence, singular states,
//! degenerate catalog input), 1 for I/O trouble.

pub mod commands;
pub mod output;
pub mod scenario;

pub use commands::{cmd_catalog, cmd_equilibria, cmd_simulate, cmd_sweep, run_scenario, run_sweep, Run};
pub use scenario::{perturbed_equilibrium, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(#[from] tidelock::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}
