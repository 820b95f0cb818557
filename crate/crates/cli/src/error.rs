use std::process::ExitCode;

use thiserror::Error;
use wpc::fusion::FusionError;
use wpc::refgen::{CalibrationError, GenError};
use wpc::sim::sweep::SweepError;
use wpc::sim::{KneeError, SimConfigError};
use wpc::store::StoreError;
use wpc::trace::TraceError;

/// Command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or parameter values (exit 2).
    #[error("{0}")]
    Param(String),
    /// A required observation or value is absent (exit 3).
    #[error("{0}")]
    Missing(String),
    /// Reading or writing a file failed (exit 4).
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Param(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Io(_) => 4,
        })
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Missing(_) => CliError::Missing(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        CliError::Param(e.to_string())
    }
}

impl From<SimConfigError> for CliError {
    fn from(e: SimConfigError) -> Self {
        CliError::Param(e.to_string())
    }
}

impl From<KneeError> for CliError {
    fn from(e: KneeError) -> Self {
        CliError::Param(e.to_string())
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::Undefined { .. } => CliError::Missing(e.to_string()),
            _ => CliError::Param(e.to_string()),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Generator(g) => g.into(),
            SweepError::Config(c) => c.into(),
            SweepError::Knee(k) => k.into(),
            SweepError::Io(io) => io.into(),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Generator(g) => g.into(),
            CalibrationError::BadCandidates => CliError::Param(e.to_string()),
            CalibrationError::Failed(_) => CliError::Missing(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
