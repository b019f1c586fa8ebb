//! Error types for configuration loading and file ingestion.

use std::path::{Path, PathBuf};

use llmguard_core::{BundleError, PolicyError};
use thiserror::Error;

/// Failure to assemble the registry or the policy from a config directory.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("manifest not found: {0}")]
    MissingManifest(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("detector `{id}`: {message}")]
    Detector { id: String, message: String },
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("{0}")]
    Invalid(String),
}

impl ConfigError {
    pub(crate) fn parse(path: &Path, err: impl std::fmt::Display) -> Self {
        ConfigError::Parse { path: path.to_path_buf(), message: err.to_string().trim_end().to_string() }
    }

    pub(crate) fn detector(id: &str, message: impl Into<String>) -> Self {
        ConfigError::Detector { id: id.to_string(), message: message.into() }
    }
}

/// Failure to read or write a corpus, template or bundle file.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Line { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Bundle { path: PathBuf, source: BundleError },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }
}
