//! Allocation-only core of the llmguard moderation gateway.
//!
//! Every user prompt and every upstream response is passed through an
//! ensemble of independent detectors; if any enabled detector flags the text,
//! the transaction is blocked and a fixed message is returned instead of the
//! model output.
//!
//! This crate holds the parts that need nothing beyond `alloc`:
//!
//! - [`model`]: exchanges, reports, verdicts and the [`Policy`] that decides them.
//! - [`text`]: tokenization, vocabulary construction and count vectorization.
//! - [`mlp`], [`train`], [`bundle`]: a small feed-forward classifier with
//!   sigmoid heads, its Adam trainer and the versioned bundle codec.
//! - [`attribution`]: occlusion-based highlighting of the tokens that drive a score.
//! - [`detector`], [`ensemble`]: the detector interface, registry and orchestration.
//! - [`corpus`], [`metrics`]: labelled data handling and evaluation.
//!
//! File IO, regular-expression detectors, the HTTP gateway and the CLI live in
//! the `llmguard` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod attribution;
pub mod bundle;
pub mod corpus;
pub mod detector;
pub mod ensemble;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod text;
pub mod train;

pub use attribution::{attribute_spans, DEFAULT_ATTRIBUTION_DELTA};
pub use bundle::{BundleError, ModelBundle, TrainingMeta, FORMAT_VERSION};
pub use corpus::{generate_synthetic_corpus, split, CorpusError, LabeledExample, TemplateSpec};
pub use detector::{ClassifierDetector, Detector, DetectorKind, Registry, RegistryError};
pub use ensemble::{guard_exchange, guard_text, GuardError, Upstream, UpstreamError};
pub use metrics::{evaluate, HeadMetrics};
pub use mlp::{bce_loss, Gradients, Layer, Mlp, ShapeError};
pub use model::{
    default_policy, evaluate_policy, Decision, DetectorOverride, DetectorPolicy, DetectorReport,
    Exchange, Phase, PhaseSet, Policy, PolicyError, Span, Verdict, DEFAULT_BLOCK_MESSAGE,
};
pub use text::{build_vocabulary, tokenize, vectorize, Vocabulary, VocabularyError};
pub use train::{train, train_with, TrainConfig, TrainError, Trained};
