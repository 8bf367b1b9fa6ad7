use thiserror::Error;

use aggmvh::Error as ModelError;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    /// Output could not be written.
    pub const IO: i32 = 1;
    /// Malformed config or infeasible inputs.
    pub const INVALID: i32 = 2;
    /// An enumeration or size guard was exceeded.
    pub const GUARD: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config field `{field}`: {message}")]
    Field { field: &'static str, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    pub fn field(field: &'static str, message: impl Into<String>) -> Self {
        CliError::Field {
            field,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Field { .. } => exit::INVALID,
            CliError::Model(ModelError::ResourceLimit { .. } | ModelError::Overflow(_)) => exit::GUARD,
            CliError::Model(_) => exit::INVALID,
            CliError::Io(_) | CliError::Output(_) => exit::IO,
        }
    }
}
