//! Pipeline pieces behind the `mvembed` command-line tool.

pub mod output;
pub mod pipeline;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] mvembed::Error),

    #[error("{0}")]
    CheckFailed(String),

    #[error("{}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code: 2 for user or configuration errors, 3 for failed
    /// checks, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        use mvembed::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::CheckFailed(_) => 3,
            CliError::Output { .. } => 1,
            CliError::Core(e) => match e {
                E::SingularMetric { .. } | E::TrainingFailed(_) => 1,
                _ => 2,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
