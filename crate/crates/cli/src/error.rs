use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or config values.
    #[error("{0}")]
    Usage(String),

    /// Run artifacts no longer match the manifest or the config.
    #[error("stale artifacts: {0}")]
    Stale(String),

    #[error(transparent)]
    Core(#[from] midelight::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(context: impl std::fmt::Display, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Stale(_) => 2,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }
}
