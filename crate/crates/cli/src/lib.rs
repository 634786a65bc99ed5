//! Experiment driver: JSON-configured studies that write `metrics.csv`,
//! `record.json` and model checkpoints.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

pub use commands::{run, Command};
pub use config::{ExperimentConfig, ModelConfig, Overrides};
pub use output::ExperimentRecord;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("output error: {0}")]
    Output(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 2 for configuration problems, 3 for data problems, 4 for numeric
    /// failures; output failures share the data code.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Output(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<wcnn::Error> for CliError {
    fn from(e: wcnn::Error) -> Self {
        use wcnn::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) | E::Capacity(_) | E::Dimension(_) | E::Index(_) | E::Json(_) => CliError::Config(msg),
            E::Data(_) | E::Format(_) | E::Io(_) => CliError::Data(msg),
            E::Numeric(_) | E::State(_) => CliError::Numeric(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
