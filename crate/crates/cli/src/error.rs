use thiserror::Error;

/// Failure classes, each with a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable local files, malformed profiles or keys.
    #[error("{0}")]
    Usage(String),
    /// The node was unreachable or answered with an error.
    #[error("{message}")]
    Api { code: String, message: String },
    /// An audit check failed: corrupt chain, safety violation.
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Api { .. } => 2,
            CliError::Verification(_) => 3,
        }
    }

    pub fn code(&self) -> &str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Api { code, .. } => code,
            CliError::Verification(_) => "VerificationFailed",
        }
    }

    pub fn api(code: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Api {
            code: code.into(),
            message: message.into(),
        }
    }
}
