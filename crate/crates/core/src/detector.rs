//! The detector interface and the immutable registry of loaded detectors.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::attribution::{attribute_spans, DEFAULT_ATTRIBUTION_DELTA};
use crate::bundle::ModelBundle;
use crate::model::{exceeds, DetectorReport, Phase};
use crate::text::vectorize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum DetectorKind {
    Regex,
    Classifier,
}

/// An independent expert for one category of unsafe content.
///
/// Implementations own their resources and must not consult other detectors.
pub trait Detector: Send + Sync {
    fn id(&self) -> &str;

    fn kind(&self) -> DetectorKind;

    /// Scores `text` and flags it when the score is strictly above `threshold`.
    fn detect(&self, text: &str, phase: Phase, threshold: f64) -> DetectorReport;
}

impl fmt::Debug for dyn Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Detector").field("id", &self.id()).field("kind", &self.kind()).finish()
    }
}

/// Detector backed by a [`ModelBundle`]; multi-head bundles score the maximum head.
#[derive(Debug, Clone)]
pub struct ClassifierDetector {
    id: String,
    bundle: ModelBundle,
    attribution_delta: f64,
}

impl ClassifierDetector {
    pub fn new(id: impl Into<String>, bundle: ModelBundle) -> Self {
        ClassifierDetector { id: id.into(), bundle, attribution_delta: DEFAULT_ATTRIBUTION_DELTA }
    }

    pub fn with_attribution_delta(mut self, delta: f64) -> Self {
        self.attribution_delta = delta;
        self
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }
}

impl Detector for ClassifierDetector {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> DetectorKind {
        DetectorKind::Classifier
    }

    fn detect(&self, text: &str, phase: Phase, threshold: f64) -> DetectorReport {
        let counts = vectorize(text, self.bundle.vocabulary());
        let score = self.bundle.score_counts(&counts);
        let spans = if exceeds(score, threshold) {
            attribute_spans(&self.bundle, text, score, self.attribution_delta)
        } else {
            Vec::new()
        };
        DetectorReport::new(self.id.clone(), phase, score, threshold, spans)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("detector `{0}` is registered twice")]
    Duplicate(String),
}

/// Loaded detectors keyed by id. Iteration is in id order.
#[derive(Default)]
pub struct Registry {
    detectors: BTreeMap<String, Box<dyn Detector>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, detector: Box<dyn Detector>) -> Result<(), RegistryError> {
        let id = String::from(detector.id());
        if self.detectors.contains_key(&id) {
            return Err(RegistryError::Duplicate(id));
        }
        self.detectors.insert(id, detector);
        Ok(())
    }

    pub fn with(mut self, detector: impl Detector + 'static) -> Result<Self, RegistryError> {
        self.insert(Box::new(detector))?;
        Ok(self)
    }

    pub fn get(&self, id: &str) -> Option<&dyn Detector> {
        self.detectors.get(id).map(|d| d.as_ref())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.detectors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.detectors.keys()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::TrainingMeta;
    use crate::mlp::Mlp;
    use crate::text::Vocabulary;
    use alloc::vec;

    fn one_token_bundle(weight: f64, bias: f64) -> ModelBundle {
        let vocab = Vocabulary::from_tokens(vec!["bad".into()], 10, 1).unwrap();
        let model = Mlp::from_parameters(&[1, 1], vec![(vec![weight], vec![bias])]).unwrap();
        ModelBundle::new(vocab, model, vec!["toxic".into()], TrainingMeta { seed: 0, epochs: 1, final_loss: 0.0 })
            .unwrap()
    }

    #[test]
    fn classifier_score_is_forward_of_vectorize() {
        let b = one_token_bundle(2.0, -1.0);
        let d = ClassifierDetector::new("toxicity", b.clone());
        let text = "bad, bad day";
        let r = d.detect(text, Phase::Prompt, 0.5);
        let direct = b.model().forward(&vectorize(text, b.vocabulary())).unwrap()[0];
        assert_eq!(r.score.to_bits(), direct.to_bits());
        assert!(r.flagged);
        assert_eq!(r.spans.len(), 2);
        assert_eq!(r.threshold_used, 0.5);
    }

    #[test]
    fn score_exactly_at_threshold_not_flagged() {
        let d = ClassifierDetector::new("toxicity", one_token_bundle(0.0, 0.0));
        let r = d.detect("bad", Phase::Response, 0.5);
        assert_eq!(r.score, 0.5);
        assert!(!r.flagged);
        assert!(r.spans.is_empty());
    }

    #[test]
    fn registry_rejects_duplicates() {
        let mut reg = Registry::new();
        reg.insert(Box::new(ClassifierDetector::new("a", one_token_bundle(1.0, 0.0)))).unwrap();
        let err = reg.insert(Box::new(ClassifierDetector::new("a", one_token_bundle(1.0, 0.0))));
        assert_eq!(err, Err(RegistryError::Duplicate("a".into())));
        assert_eq!(reg.ids().collect::<Vec<_>>(), vec!["a"]);
    }
}
