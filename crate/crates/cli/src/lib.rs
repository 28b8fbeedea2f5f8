//! Library side of the `crftk` command: file formats and the four commands
//! as functions from text to text, so they can be driven without a process.

pub mod commands;
pub mod formats;

use crftk_core::CrfError;

pub use commands::{agree, eval, tag, train, EvalOptions, TrainOptions, TrainOutcome};
pub use formats::Format;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error(transparent)]
    Core(#[from] CrfError),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub(crate) fn parse(file: &str, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }

    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub fn read_file(path: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|error| CliError::Io {
        path: path.to_string(),
        error,
    })
}

pub fn write_file(path: &str, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|error| CliError::Io {
        path: path.to_string(),
        error,
    })
}
