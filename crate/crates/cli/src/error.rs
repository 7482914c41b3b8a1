use thiserror::Error;

/// Command failures, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments (exit 1).
    #[error("{0}")]
    Invalid(String),
    /// The command started but could not finish cleanly (exit 2).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<seqstep::Error> for CliError {
    fn from(e: seqstep::Error) -> Self {
        use seqstep::Error::*;
        match e {
            InvalidParameter(_) | NotMonotone { .. } | LengthMismatch { .. } | InfeasibleQuantile { .. } => {
                CliError::Invalid(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}
