use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SfrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SfrError {
    #[error("dataset format error in {path}: {message}")]
    DatasetFormat { path: PathBuf, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("numeric error in {context}: {message}")]
    Numeric { context: String, message: String },

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("augmentation error: {0}")]
    Augmentation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Trial {
        context: String,
        #[source]
        source: Box<SfrError>,
    },
}

impl SfrError {
    pub fn validation(msg: impl Into<String>) -> Self {
        SfrError::Validation(msg.into())
    }

    pub fn numeric(context: impl Into<String>, message: impl Into<String>) -> Self {
        SfrError::Numeric {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SfrError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        SfrError::DatasetFormat {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Wraps an error with the (variant, seed) or other trial context.
    pub fn in_trial(self, context: impl Into<String>) -> Self {
        SfrError::Trial {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping trial context wrappers.
    pub fn root(&self) -> &SfrError {
        match self {
            SfrError::Trial { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the CLI: 1 validation, 2 numeric, 3 capacity.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            SfrError::Numeric { .. } => 2,
            SfrError::Capacity(_) => 3,
            _ => 1,
        }
    }
}
