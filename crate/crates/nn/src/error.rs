use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("tensor contains a non-finite value")]
    NonFinite,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("weights: {0}")]
    Weights(String),

    #[error(transparent)]
    Core(#[from] evrobust_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
