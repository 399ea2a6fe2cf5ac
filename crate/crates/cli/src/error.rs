use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const BUDGET: i32 = 3;
    pub const CONDITIONING: i32 = 4;
    pub const NUMERICAL: i32 = 5;
    pub const IO: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("bad --set override `{raw}`: {message}")]
    Override { raw: String, message: String },
    #[error("{context}: {source}")]
    Io {
        context: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] wedgefield::Error),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use wedgefield::Error as E;
        match self {
            CliError::Config { .. } | CliError::Override { .. } => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Core(e) => match e {
                E::InvalidSpec { .. }
                | E::InfeasibleCutoff(_)
                | E::UnsupportedRepresentation(_)
                | E::Json(_) => exit::CONFIG,
                E::DenseBudget { .. } => exit::BUDGET,
                E::GrayZone { .. }
                | E::Conditioning { .. }
                | E::RankDeficient(_)
                | E::RelativeChargeNonzero(_)
                | E::Singular => exit::CONDITIONING,
                E::Io(_) => exit::IO,
                _ => exit::NUMERICAL,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
