//! Config directory loading: detector manifest, policy file and bundles.
//!
//! Layout:
//!
//! ```text
//! <config>/manifest.toml   detectors to load (required)
//! <config>/policy.toml     block message, gateway switches, per-detector overrides (optional)
//! <config>/bundles/        classifier bundles referenced by the manifest
//! ```
//!
//! `manifest.toml`:
//!
//! ```toml
//! [detectors.pii]
//! kind = "regex"
//! patterns = "builtin"              # or a pattern file path, relative to the config dir
//! threshold = 0.5                   # default 0.5
//! phases = ["Prompt"]               # default both phases
//!
//! [detectors.toxicity]
//! kind = "classifier"
//! bundle = "bundles/toxicity.llmg"
//! attribution_delta = 0.05          # optional
//! ```
//!
//! `policy.toml`:
//!
//! ```toml
//! block_message = "Your request was blocked by LLMGuard policy."
//! short_circuit = false
//!
//! [gateway]
//! allow_request_overrides = true
//! unguarded_chat = true
//! max_body_bytes = 65536
//!
//! [detectors."topic:sports"]
//! enabled = false
//! threshold = 0.7
//! phases = ["Prompt"]
//! ```
//!
//! Unknown keys are rejected in both files. Policy entries may only name
//! detectors that the manifest declares.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use llmguard_core::{
    ClassifierDetector, DetectorPolicy, Phase, PhaseSet, Policy, Registry, DEFAULT_BLOCK_MESSAGE,
};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::files::load_bundle;
use crate::pii::{PiiDetector, PiiPatternSet};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const POLICY_FILE: &str = "policy.toml";
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MAX_BODY_BYTES: usize = 64 * 1024;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    #[serde(default)]
    detectors: BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    kind: String,
    bundle: Option<PathBuf>,
    patterns: Option<String>,
    threshold: Option<f64>,
    phases: Option<Vec<Phase>>,
    attribution_delta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    block_message: Option<String>,
    short_circuit: Option<bool>,
    #[serde(default)]
    gateway: GatewayOptions,
    #[serde(default)]
    detectors: BTreeMap<String, PolicyEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyEntry {
    enabled: Option<bool>,
    threshold: Option<f64>,
    phases: Option<Vec<Phase>>,
}

/// Server switches from the `[gateway]` table of `policy.toml`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewayOptions {
    /// Accept per-request detector toggles on `/v1/guarded-chat`.
    pub allow_request_overrides: bool,
    /// Serve `/v1/unguarded-chat`.
    pub unguarded_chat: bool,
    pub max_body_bytes: usize,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        GatewayOptions { allow_request_overrides: true, unguarded_chat: true, max_body_bytes: DEFAULT_MAX_BODY_BYTES }
    }
}

/// Everything the gateway and `scan` need from a config directory.
#[derive(Debug)]
pub struct LoadedConfig {
    pub registry: Registry,
    pub policy: Policy,
    pub gateway: GatewayOptions,
}

/// Loads every detector declared in `<dir>/manifest.toml`.
///
/// All-or-nothing: the first failing detector aborts the load with an error naming it.
pub fn registry_load(dir: &Path) -> Result<Registry, ConfigError> {
    let manifest = read_manifest(dir)?;
    build_registry(dir, &manifest)
}

/// Loads the registry and the effective policy: manifest defaults with the
/// policy file merged over them.
pub fn load_config(dir: &Path) -> Result<LoadedConfig, ConfigError> {
    let manifest = read_manifest(dir)?;
    let registry = build_registry(dir, &manifest)?;
    let policy_path = dir.join(POLICY_FILE);
    let file: PolicyFile = match fs::read_to_string(&policy_path) {
        Ok(text) => toml::from_str(&text).map_err(|e| ConfigError::parse(&policy_path, e))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => PolicyFile::default(),
        Err(source) => return Err(ConfigError::Io { path: policy_path, source }),
    };
    let policy = merge_policy(&manifest, &file)?;
    if file.gateway.max_body_bytes == 0 {
        return Err(ConfigError::Invalid("gateway.max_body_bytes must be positive".into()));
    }
    Ok(LoadedConfig { registry, policy, gateway: file.gateway })
}

fn read_manifest(dir: &Path) -> Result<ManifestFile, ConfigError> {
    let path = dir.join(MANIFEST_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ConfigError::MissingManifest(path)),
        Err(source) => return Err(ConfigError::Io { path, source }),
    };
    toml::from_str(&text).map_err(|e| ConfigError::parse(&path, e))
}

fn build_registry(dir: &Path, manifest: &ManifestFile) -> Result<Registry, ConfigError> {
    let mut registry = Registry::new();
    for (id, entry) in &manifest.detectors {
        let detector: Box<dyn llmguard_core::Detector> = match entry.kind.as_str() {
            "regex" => {
                if entry.bundle.is_some() || entry.attribution_delta.is_some() {
                    return Err(ConfigError::detector(id, "regex detectors take `patterns`, not `bundle`"));
                }
                let patterns = match entry.patterns.as_deref() {
                    None | Some("builtin") => PiiPatternSet::builtin(),
                    Some(file) => {
                        let path = dir.join(file);
                        let text = fs::read_to_string(&path)
                            .map_err(|e| ConfigError::detector(id, format!("cannot read {}: {e}", path.display())))?;
                        PiiPatternSet::from_toml(&text, &path).map_err(|e| ConfigError::detector(id, e.to_string()))?
                    }
                };
                Box::new(PiiDetector::new(id.clone(), patterns))
            }
            "classifier" => {
                if entry.patterns.is_some() {
                    return Err(ConfigError::detector(id, "classifier detectors take `bundle`, not `patterns`"));
                }
                let rel = entry.bundle.as_ref().ok_or_else(|| ConfigError::detector(id, "missing `bundle` path"))?;
                let bundle = load_bundle(&dir.join(rel)).map_err(|e| ConfigError::detector(id, e.to_string()))?;
                let mut detector = ClassifierDetector::new(id.clone(), bundle);
                if let Some(delta) = entry.attribution_delta {
                    if !(delta >= 0.0 && delta.is_finite()) {
                        return Err(ConfigError::detector(id, format!("attribution_delta {delta} must be non-negative")));
                    }
                    detector = detector.with_attribution_delta(delta);
                }
                Box::new(detector)
            }
            other => return Err(ConfigError::detector(id, format!("unknown detector kind `{other}`"))),
        };
        registry.insert(detector).map_err(|e| ConfigError::detector(id, e.to_string()))?;
    }
    Ok(registry)
}

fn merge_policy(manifest: &ManifestFile, file: &PolicyFile) -> Result<Policy, ConfigError> {
    if let Some(unknown) = file.detectors.keys().find(|id| !manifest.detectors.contains_key(*id)) {
        return Err(ConfigError::Invalid(format!("{POLICY_FILE} configures `{unknown}`, which the manifest does not declare")));
    }
    let entries = manifest
        .detectors
        .iter()
        .map(|(id, m)| {
            let over = file.detectors.get(id);
            let phases = over
                .and_then(|o| o.phases.clone())
                .or_else(|| m.phases.clone())
                .map(PhaseSet::from)
                .unwrap_or(PhaseSet::BOTH);
            let threshold = over.and_then(|o| o.threshold).or(m.threshold).unwrap_or(DEFAULT_THRESHOLD);
            let mut entry = DetectorPolicy::new(id.clone(), threshold, phases);
            entry.enabled = over.and_then(|o| o.enabled).unwrap_or(true);
            entry
        })
        .collect();
    Ok(Policy::new(
        entries,
        file.block_message.clone().unwrap_or_else(|| DEFAULT_BLOCK_MESSAGE.to_string()),
        file.short_circuit.unwrap_or(false),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir_with(manifest: Option<&str>, policy: Option<&str>) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        if let Some(m) = manifest {
            fs::write(dir.path().join(MANIFEST_FILE), m).unwrap();
        }
        if let Some(p) = policy {
            fs::write(dir.path().join(POLICY_FILE), p).unwrap();
        }
        dir
    }

    const PII_ONLY: &str = "[detectors.pii]\nkind = \"regex\"\nphases = [\"Prompt\"]\n";

    #[test]
    fn missing_manifest_is_startup_error() {
        let dir = dir_with(None, None);
        assert!(matches!(registry_load(dir.path()), Err(ConfigError::MissingManifest(_))));
    }

    #[test]
    fn empty_manifest_gives_empty_registry() {
        let dir = dir_with(Some(""), None);
        let cfg = load_config(dir.path()).unwrap();
        assert!(cfg.registry.is_empty());
        assert!(cfg.policy.detectors().is_empty());
        assert_eq!(cfg.gateway, GatewayOptions::default());
    }

    #[test]
    fn unknown_kind_names_detector_and_kind() {
        let dir = dir_with(Some("[detectors.qd]\nkind = \"quantum\"\n"), None);
        let msg = registry_load(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("`qd`") && msg.contains("quantum"), "{msg}");
    }

    #[test]
    fn missing_bundle_names_detector() {
        let dir = dir_with(Some("[detectors.toxicity]\nkind = \"classifier\"\nbundle = \"bundles/nope.llmg\"\n"), None);
        let msg = registry_load(dir.path()).unwrap_err().to_string();
        assert!(msg.starts_with("detector `toxicity`"), "{msg}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = dir_with(Some("[detectors.pii]\nkind = \"regex\"\ncolour = 1\n"), None);
        assert!(matches!(registry_load(dir.path()), Err(ConfigError::Parse { .. })));
        let dir = dir_with(Some(PII_ONLY), Some("blok_message = \"x\"\n"));
        assert!(matches!(load_config(dir.path()), Err(ConfigError::Parse { .. })));
        let dir = dir_with(Some(PII_ONLY), Some("[gateway]\nunguarded = false\n"));
        assert!(matches!(load_config(dir.path()), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn policy_merges_over_manifest() {
        let policy = "block_message = \"nope\"\nshort_circuit = true\n[gateway]\nunguarded_chat = false\n\
                      [detectors.pii]\nthreshold = 0.25\nphases = [\"Prompt\", \"Response\"]\n";
        let dir = dir_with(Some(PII_ONLY), Some(policy));
        let cfg = load_config(dir.path()).unwrap();
        let pii = cfg.policy.get("pii").unwrap();
        assert_eq!((pii.threshold, pii.phases, pii.enabled), (0.25, PhaseSet::BOTH, true));
        assert_eq!(cfg.policy.block_message(), "nope");
        assert!(cfg.policy.short_circuit());
        assert!(!cfg.gateway.unguarded_chat);
        assert!(cfg.gateway.allow_request_overrides);
    }

    #[test]
    fn policy_cannot_add_detectors() {
        let dir = dir_with(Some(PII_ONLY), Some("[detectors.toxicity]\nenabled = true\n"));
        assert!(matches!(load_config(dir.path()), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn invalid_threshold_rejected() {
        let dir = dir_with(Some(PII_ONLY), Some("[detectors.pii]\nthreshold = 1.5\n"));
        assert!(matches!(load_config(dir.path()), Err(ConfigError::Policy(_))));
    }

    #[test]
    fn custom_pattern_file() {
        let dir = dir_with(Some("[detectors.tickets]\nkind = \"regex\"\npatterns = \"tickets.toml\"\n"), None);
        fs::write(dir.path().join("tickets.toml"), "[[patterns]]\nname = \"ticket\"\nregex = 'TCK-\\d+'\n").unwrap();
        let reg = registry_load(dir.path()).unwrap();
        let r = reg.get("tickets").unwrap().detect("see TCK-12", Phase::Prompt, 0.5);
        assert!(r.flagged);
        assert_eq!(r.spans[0].label, "ticket");
    }
}
