use std::path::PathBuf;

use serde::Serialize;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] chgnn_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("bad dataset: {0}")]
    Data(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        CliError::Json {
            path: path.into(),
            source,
        }
    }

    pub fn config(field: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        use chgnn_core::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::NonFinite { .. } => "non_finite_loss",
                E::Config(_) | E::Parameter(_) => "config",
                E::Split(_) => "split",
                E::Shape(_) | E::Internal(_) => "internal",
                _ => "validation",
            },
            CliError::Io { .. } => "io",
            CliError::Json { .. } => "json",
            CliError::Config { .. } => "config",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Data(_) => "validation",
        }
    }

    /// `{"error": kind, "message": text}` plus the loss term and epoch of
    /// non-finite aborts.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Payload<'a> {
            error: &'a str,
            message: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            field: Option<&'a str>,
            #[serde(skip_serializing_if = "Option::is_none")]
            term: Option<&'a str>,
            #[serde(skip_serializing_if = "Option::is_none")]
            epoch: Option<usize>,
        }
        let (term, epoch) = match self {
            CliError::Core(chgnn_core::Error::NonFinite { term, epoch }) => (Some(*term), Some(*epoch)),
            _ => (None, None),
        };
        let field = match self {
            CliError::Config { field, .. } => Some(field.as_str()),
            _ => None,
        };
        serde_json::to_string(&Payload {
            error: self.kind(),
            message: self.to_string(),
            field,
            term,
            epoch,
        })
        .expect("error payload serializes")
    }
}
