use std::path::{Path, PathBuf};

use thiserror::Error;

/// Exit codes of the `dcm` binary.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INSTABILITY: i32 = 1;
    pub const IO: i32 = 2;
    pub const CONFIG: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The data file exists but cannot be used.
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: dcm_core::Error,
    },

    #[error("{}{key}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Config {
        key: String,
        line: Option<usize>,
        message: String,
    },

    /// Analysis failure, tagged with the control key most likely at fault.
    #[error("{key}: {source}")]
    Analysis {
        key: String,
        #[source]
        source: dcm_core::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn config(key: &str, message: String) -> Self {
        CliError::Config {
            key: key.to_string(),
            line: None,
            message,
        }
    }

    pub fn config_at(key: &str, line: usize, message: String) -> Self {
        CliError::Config {
            key: key.to_string(),
            line: Some(line),
            message,
        }
    }

    pub fn config_line(line: usize, message: String) -> Self {
        CliError::Config {
            key: "syntax".into(),
            line: Some(line),
            message,
        }
    }

    /// Wraps a library error from an analysis step.
    pub fn analysis(source: dcm_core::Error) -> Self {
        use dcm_core::Error as E;
        let key = match &source {
            E::Io(_) | E::Parse { .. } | E::Validation(_) | E::DegenerateSpan | E::ZeroVariance => "data",
            E::Underdetermined { .. } | E::DegenerateDof { .. } => "k1/k2/k3",
            E::Instability(_) => "nl/ns",
            E::Config(_) | E::Contract(_) | E::NonFinite(_) => "k1/k2/k3",
            E::UnknownModel(_) => "model",
        };
        CliError::Analysis {
            key: key.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Data { .. } => exit::IO,
            CliError::Analysis {
                source: dcm_core::Error::Io(_),
                ..
            } => exit::IO,
            CliError::Config { .. } | CliError::Analysis { .. } => exit::CONFIG,
        }
    }
}
