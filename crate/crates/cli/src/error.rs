use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible scheme: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("audit failed: {0}")]
    AuditFailed(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::AuditFailed(_) => 5,
            CliError::Io(_) => 1,
        })
    }
}

impl From<isrisk_core::Error> for CliError {
    fn from(e: isrisk_core::Error) -> Self {
        use isrisk_core::Error as E;
        match e {
            E::Infeasible(r) => CliError::Infeasible(r),
            E::TruthUnavailable(_) => CliError::Numeric(e.to_string()),
            e if e.is_numeric() => CliError::Numeric(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}
