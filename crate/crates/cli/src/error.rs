//! CLI error classification and exit codes.

use patchgroup_core::Error as CoreError;

/// Exit codes: 0 ok, 1 user error, 2 internal fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    UserError = 1,
    InternalFault = 2,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("dependency error: missing upstream artifact {path} (run `{hint}` first)")]
    MissingArtifact { path: String, hint: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
}

impl CliError {
    pub fn io(path: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// User mistakes exit 1; violated internal contracts exit 2.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Core(e) => match e {
                CoreError::Contract(_) | CoreError::Integrity(_) | CoreError::Training(_) => {
                    ExitCode::InternalFault
                }
                _ => ExitCode::UserError,
            },
            CliError::MissingArtifact { .. }
            | CliError::Config(_)
            | CliError::Io { .. }
            | CliError::Format(_) => ExitCode::UserError,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
