//! Command-line front end: TOML experiment configs in, JSON or CSV results out.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{parse_config, ExperimentConfig, Mode, OutputFormat};
pub use error::{exit, CliError};
pub use output::RunOutput;
pub use run::run;
