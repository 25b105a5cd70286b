use std::path::PathBuf;

use thiserror::Error;

use crate::study::StudyResult;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// A configuration value is unusable; `key` is the dotted config key.
    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("could not read config: {0}")]
    ConfigSyntax(String),

    #[error(transparent)]
    Core(#[from] ddlab_core::Error),

    /// A row failed; the rows finished before it are kept in `partial`.
    #[error("row eps = {eps} failed: {source}")]
    Row {
        eps: f64,
        #[source]
        source: ddlab_core::Error,
        partial: Box<StudyResult>,
    },

    #[error("mesh guard violated at eps = {eps}: h_max = {h_max} is not below eps^2")]
    MeshGuard { eps: f64, h_max: f64 },

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl HarnessError {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        HarnessError::Config { key: key.to_string(), message: message.into() }
    }

    /// Whether the failure comes from the user's configuration rather than
    /// from the computation.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            HarnessError::Config { .. } | HarnessError::ConfigSyntax(_) | HarnessError::Core(ddlab_core::Error::Config(_))
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
