use strucred::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// 2: parse/validation, 3: numerical failure, 4: internal error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) | CliError::Read { .. } => 2,
            CliError::Core(e) => match e {
                CoreError::DimensionMismatch(_)
                | CoreError::EmptyNetwork
                | CoreError::IndexOutOfRange { .. }
                | CoreError::InvalidOrder(_)
                | CoreError::InvalidParameter(_) => 2,
                _ => 3,
            },
            CliError::Write { .. } | CliError::Internal(_) => 4,
        }
    }
}
