//! Staged pipeline behind the `reachsynth` command: certify the funnel,
//! build the abstraction, solve the game, simulate the refined controller.
//!
//! Every stage is available as a function on in-memory values; the
//! `artifacts` module persists them with configuration hashes so that a
//! later stage refuses inputs produced from a different configuration.

pub mod artifacts;
pub mod pipeline;

use reachsynth::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{0}")]
    Mismatch(String),

    #[error("{0}")]
    Infeasible(String),

    #[error("{0}")]
    Falsified(String),

    #[error("{0}")]
    Unverified(String),

    #[error(transparent)]
    Core(CoreError),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidSettings(ref m) if m.contains("infeasible") => CliError::Infeasible(m.clone()),
            CoreError::NoCertifiedLevel(_) | CoreError::NotStabilizable(_) | CoreError::UnboundedLevelSet(_) => CliError::Unverified(e.to_string()),
            e => CliError::Core(e),
        }
    }
}

impl CliError {
    /// 0 success, 1 usage or I/O, 2 infeasible or falsified.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) | CliError::Falsified(_) | CliError::Unverified(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
