//! Batch front end: scenario configs in, verdicts and exports out.
//!
//! Exit codes: 0 all checks pass, 1 identity violation, 2 config or user
//! error, 3 internal numeric failure.

pub mod commands;
pub mod render;
pub mod scenario;
pub mod verify;

use thiserror::Error;

pub use commands::{run, Artifact, Format, Outcome};
pub use render::{render_file, render_str, Style};
pub use scenario::{BasisSpec, Job, Kind, Scenario};
pub use verify::{run_verification_suite, VerdictReport};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USER: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] qergo_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if !e.is_user_error() => EXIT_INTERNAL,
            _ => EXIT_USER,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
