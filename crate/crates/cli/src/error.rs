use std::path::PathBuf;

use thiserror::Error;

/// Failure classes of the command-line tool, one exit code each.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numerical configuration: {0}")]
    Configuration(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("unknown key `{key}` in {path} (at `{at}`)")]
    UnknownKey { path: PathBuf, key: String, at: String },

    #[error("invalid value for `{field}`: {detail}")]
    Invariant { field: String, detail: String },

    #[error("invalid argument: {0}")]
    Argument(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse { .. } => 1,
            CliError::Infeasible(_) => 2,
            CliError::Configuration(_) => 3,
            CliError::Internal(_) => 4,
            CliError::MissingFile(_) => 5,
            CliError::UnknownKey { .. } => 6,
            CliError::Invariant { .. } => 7,
            CliError::Argument(_) => 8,
        }
    }

    pub(crate) fn invariant(field: &str, err: impl std::fmt::Display) -> Self {
        CliError::Invariant {
            field: field.to_owned(),
            detail: err.to_string(),
        }
    }
}

impl From<ecoplan::Error> for CliError {
    fn from(err: ecoplan::Error) -> Self {
        use ecoplan::Error as E;
        let msg = err.to_string();
        match err {
            E::Infeasible(_) => CliError::Infeasible(msg),
            E::Configuration { .. } => CliError::Configuration(msg),
            E::Argument(_) => CliError::Argument(msg),
            E::Domain(_) | E::Admissibility(_) => CliError::Invariant {
                field: "input".to_owned(),
                detail: msg,
            },
            E::Extrapolation { .. } => CliError::Internal(msg),
        }
    }
}

/// Maps an I/O failure on `path`; a missing file gets its own class.
pub(crate) fn io_error(path: &std::path::Path, err: std::io::Error) -> CliError {
    if err.kind() == std::io::ErrorKind::NotFound {
        CliError::MissingFile(path.to_owned())
    } else {
        CliError::Internal(format!("{}: {err}", path.display()))
    }
}
