use std::io;
use std::path::PathBuf;

use cmseq_core::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// The input is valid but the requested result does not hold.
    #[error("{0}")]
    Negative(String),

    #[error("{0}")]
    Invalid(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Negative(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InadmissibleTarget { .. } | ModelError::ReciprocalConditionViolated(_) => {
                CliError::Negative(e.to_string())
            }
            _ => CliError::Invalid(e.to_string()),
        }
    }
}
