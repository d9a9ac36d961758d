//! Library surface of the experiment command-line tool.
//!
//! The binary in `main.rs` is a thin argument-parsing shell around these
//! modules; everything it can do is callable in-process, which is how the
//! integration and acceptance tests drive it without spawning processes.
//!
//! * [`config`] — the `key = value` experiment-configuration format.
//! * [`csvio`] — reading and writing the plot-ready CSV files.
//! * [`commands`] — the four experiment commands.

pub mod commands;
pub mod config;
pub mod csvio;

/// Errors of the command-line layer, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed or incomplete configuration (exit code 2).
    #[error("config error: {0}")]
    Config(String),

    /// Unreadable, unparseable, or unwritable data files (exit code 3).
    #[error("data error: {0}")]
    Data(String),

    /// A numerical failure inside a filter or swarm, such as total weight
    /// collapse (exit code 4).
    #[error("numerical failure: {0}")]
    Numeric(swarmfilt::Error),
}

impl CliError {
    /// The process exit code this error maps to: 2 for configuration
    /// problems, 3 for data problems, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    /// Lifts a library error into the CLI's exit-code taxonomy: invalid
    /// configurations and models are configuration errors, everything else
    /// is a numerical failure.
    pub(crate) fn from_lib(e: swarmfilt::Error) -> Self {
        match e {
            swarmfilt::Error::InvalidConfig(msg) => CliError::Config(msg),
            swarmfilt::Error::InvalidModel(msg) => CliError::Config(msg),
            other => CliError::Numeric(other),
        }
    }
}
