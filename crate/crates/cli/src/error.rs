use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: key `{key}`: {message}")]
    Config { path: String, line: usize, key: String, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] anisoflow::Error),

    #[error("audit failed: {0}")]
    Audit(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, e: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), message: e.to_string() }
    }

    /// 0 ok, 2 config, 3 solver iteration, 4 stability, 5 audit failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use anisoflow::Error as E;
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Core(E::Domain(_)) | CliError::Core(E::Format(_)) => 2,
            CliError::Core(E::Solver { .. }) | CliError::Core(E::Iteration { .. }) => 3,
            CliError::Core(E::Stability(_)) | CliError::Core(E::Precondition(_)) => 4,
            CliError::Audit(_) => 5,
            CliError::Core(E::Io(_)) | CliError::Io { .. } => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
