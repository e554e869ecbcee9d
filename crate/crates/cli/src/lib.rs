//! Command-line driver: configuration, commands and output files.

pub mod commands;
pub mod config;
pub mod svg;

use thiserror::Error;

use slowfast::allee::AlleeError;
use slowfast::dynamics::DynamicsError;
use slowfast::normalform::NormalFormError;
use slowfast::sdi::SdiError;

pub use commands::{run, Outcome};
pub use config::{Command, Config, RunConfig, DEFAULT_SEED};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad parameters, configuration or grid. Exit code 1.
    #[error("invalid input: {0}")]
    Validation(String),
    /// A numerical stage failed. Exit code 2.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Output could not be written. Exit code 1.
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<AlleeError> for CliError {
    fn from(e: AlleeError) -> Self {
        match e {
            AlleeError::ZeroDenominator(_) | AlleeError::Jet(_) | AlleeError::DegenerateFold(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<NormalFormError> for CliError {
    fn from(e: NormalFormError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::InvalidOptions(_) | DynamicsError::NonFiniteStart | DynamicsError::OffSection { .. } => {
                CliError::Validation(e.to_string())
            }
            DynamicsError::Allee(a) => a.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SdiError> for CliError {
    fn from(e: SdiError) -> Self {
        match e {
            SdiError::Allee(a) => a.into(),
            SdiError::AboveFold(_) | SdiError::Inadmissible { .. } | SdiError::Hypothesis(_) | SdiError::EmptyGrid => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
