use std::path::PathBuf;

/// Failures mapped onto the documented exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, configuration or input data.
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: ncsde::Error },
    #[error("fit did not converge within {iterations} iterations; outputs were written to {dir}")]
    NotConverged { iterations: usize, dir: PathBuf },
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input { .. } => 2,
            CliError::NotConverged { .. } => 3,
            CliError::Bind { .. } => 4,
            CliError::Output { .. } | CliError::Runtime(_) => 1,
        }
    }
}

/// Configuration problems are usage errors; anything else failed while
/// computing.
impl From<ncsde::Error> for CliError {
    fn from(err: ncsde::Error) -> Self {
        match err {
            ncsde::Error::Config(_) | ncsde::Error::Size(_) | ncsde::Error::Unsupported(_) | ncsde::Error::Parse { .. } => {
                CliError::Usage(err.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
