use thiserror::Error;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error in {stage}: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: optomo::Error,
    },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output { .. } => 2,
            CliError::Numerical { .. } => 3,
            CliError::Verification(_) => 4,
        }
    }

    pub fn numerical(stage: &'static str) -> impl Fn(optomo::Error) -> CliError {
        move |source| CliError::Numerical { stage, source }
    }

    pub fn output(path: &std::path::Path) -> impl Fn(std::io::Error) -> CliError + '_ {
        move |e| CliError::Output {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
