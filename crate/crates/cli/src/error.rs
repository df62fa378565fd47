use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{stage} failed: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: volsurf::Error,
    },

    #[error("{stage} failed writing {path}: {source}")]
    Io {
        stage: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical { .. } | CliError::Io { .. } => 3,
        }
    }

    /// Attaches a stage name. Argument errors coming out of the solver are
    /// reported as usage errors.
    pub fn stage(stage: &'static str) -> impl Fn(volsurf::Error) -> CliError {
        move |source| match source {
            volsurf::Error::InvalidArgument(msg) | volsurf::Error::DegenerateInput(msg) => {
                CliError::Usage(format!("{stage}: {msg}"))
            }
            source => CliError::Numerical { stage, source },
        }
    }
}
