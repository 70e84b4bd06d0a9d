//! Library side of the `dfpo` command-line tool: run-configuration files,
//! checkpoint persistence, and the train/eval/diagnose command bodies.
//!
//! Exit-code convention (mapped in `main`):
//! 0 success · 1 runtime failure · 2 invalid configuration or usage ·
//! 3 corrupt checkpoint · 4 diagnostic threshold violation.

pub mod checkpoint;
pub mod commands;
pub mod config;

/// Error type shared by the command bodies; each variant maps to one process
/// exit code.
#[derive(Debug)]
pub enum CmdError {
    /// A run failed at runtime (exit 1).
    Runtime(String),
    /// Invalid configuration or command usage (exit 2).
    Usage(String),
    /// A checkpoint failed to load or validate (exit 3).
    Corrupt(String),
    /// A diagnostic measured a value past its threshold (exit 4).
    Threshold(String),
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Runtime(m) => write!(f, "run failed: {m}"),
            CmdError::Usage(m) => write!(f, "invalid usage: {m}"),
            CmdError::Corrupt(m) => write!(f, "checkpoint rejected: {m}"),
            CmdError::Threshold(m) => write!(f, "threshold violated: {m}"),
        }
    }
}

impl std::error::Error for CmdError {}

impl CmdError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CmdError::Runtime(_) => 1,
            CmdError::Usage(_) => 2,
            CmdError::Corrupt(_) => 3,
            CmdError::Threshold(_) => 4,
        }
    }
}
