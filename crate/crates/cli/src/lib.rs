//! Library side of the `tempaug` command: configuration, the shared
//! training pipeline and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod pipeline;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Unexpected failure, including output files that cannot be written.
    pub const FAILURE: i32 = 1;
    /// Invalid config or usage; in `eval`, a checkpoint/data mismatch.
    pub const CONFIG: i32 = 2;
    /// Missing or malformed input data or run artifacts.
    pub const DATA: i32 = 3;
    /// Non-finite loss during training.
    pub const DIVERGENCE: i32 = 4;
    /// A gradient check exceeded its tolerance.
    pub const GRADCHECK: i32 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}
