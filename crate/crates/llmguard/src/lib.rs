//! Std companion of `llmguard-core`: regular-expression PII detection,
//! config and file loading, upstream LLM clients, the HTTP gateway and the CLI.
//!
//! See the repository README for the config, corpus, bundle and HTTP schemas.

pub mod cli;
pub mod config;
pub mod error;
pub mod files;
pub mod gateway;
pub mod pii;
pub mod upstream;

pub use config::{load_config, registry_load, GatewayOptions, LoadedConfig};
pub use error::{ConfigError, DataError};
pub use pii::{pii_scan, PiiDetector, PiiPatternSet};
pub use upstream::{build_upstream, upstream_call, UpstreamConfig};
