use std::path::PathBuf;

/// Crate-wide error type.
///
/// Variants are grouped by failure class so callers (in particular the CLI)
/// can map them to exit codes: configuration/input problems vs. numerical
/// failures during simulation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file structure (PLY header, raster header, JSON schema).
    #[error("format error: {0}")]
    Format(String),

    /// Structurally valid file with invalid payload (NaN fields, bad quaternion).
    #[error("data error: {0}")]
    Data(String),

    /// Invalid configuration or missing required configuration entries.
    #[error("config error: {0}")]
    Config(String),

    /// Mismatched raster/camera dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Simulation produced non-finite state or violated grid preconditions.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from inputs/configuration rather than
    /// from the numerics of a run.
    pub fn is_config_class(&self) -> bool {
        !matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
