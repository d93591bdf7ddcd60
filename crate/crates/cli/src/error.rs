use prior_forge_core::Error as CoreError;

/// Failure of a command, split by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed files, unwritable outputs and
    /// unmet hypotheses. Exit status 1.
    #[error("{0}")]
    Input(String),
    /// Unexpected divergence, overflow or a broken internal consistency
    /// check. Exit status 2.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Domain { .. } | CoreError::InvalidInput(_) | CoreError::Precondition(_) => {
                CliError::Input(e.to_string())
            }
            CoreError::ImproperDensity(_) | CoreError::Numerical(_) | CoreError::InternalConsistency(_) => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
