//! Scenario configuration and subcommand implementations behind the `gabor`
//! binary.

pub mod commands;
pub mod config;

pub use commands::{run, Command, Output};
pub use config::ScenarioConfig;

/// Exit code 2 for bad input, 3 for failures inside the numerics.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<gabor_core::Error> for CliError {
    fn from(e: gabor_core::Error) -> Self {
        use gabor_core::Error as E;
        match e {
            E::Eigen(_)
            | E::RootBracket { .. }
            | E::StepUnderflow { .. }
            | E::Caustic
            | E::NonFinite(_)
            | E::UnsafeEpsilon { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
