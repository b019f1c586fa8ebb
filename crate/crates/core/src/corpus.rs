//! Labelled examples, seeded train/test splits and template-driven synthetic corpora.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::text::{vectorize, Vocabulary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("example has no labels")]
    NoLabels,
    #[error("label `{label}` has value {value}; labels must be 0 or 1")]
    NonBinaryLabel { label: String, value: i64 },
    #[error("example {index} has labels {found:?}, expected {expected:?}")]
    InconsistentLabels { index: usize, expected: Vec<String>, found: Vec<String> },
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("template lexicon `{0}` is empty")]
    EmptyLexicon(String),
    #[error("template defines no labels")]
    NoTemplateLabels,
    #[error("head `{0}` is not a head of the model")]
    UnknownHead(String),
    #[error("example {index} lacks a label for head `{head}`")]
    MissingHead { index: usize, head: String },
    #[error("cannot evaluate on an empty test set")]
    EmptyTestSet,
}

/// A text with binary labels, one per classifier head.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabeledExample {
    pub text: String,
    pub labels: BTreeMap<String, u8>,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, labels: BTreeMap<String, u8>) -> Result<Self, CorpusError> {
        if labels.is_empty() {
            return Err(CorpusError::NoLabels);
        }
        if let Some((label, &value)) = labels.iter().find(|(_, &v)| v > 1) {
            return Err(CorpusError::NonBinaryLabel { label: label.clone(), value: value.into() });
        }
        Ok(LabeledExample { text: text.into(), labels })
    }

    /// True when any label is set.
    pub fn is_positive(&self) -> bool {
        self.labels.values().any(|&v| v == 1)
    }

    /// Target vector in `heads` order.
    pub fn targets(&self, heads: &[String], index: usize) -> Result<Vec<f64>, CorpusError> {
        for label in self.labels.keys() {
            if !heads.contains(label) {
                return Err(CorpusError::UnknownHead(label.clone()));
            }
        }
        heads
            .iter()
            .map(|h| {
                self.labels
                    .get(h)
                    .map(|&v| f64::from(v))
                    .ok_or_else(|| CorpusError::MissingHead { index, head: h.clone() })
            })
            .collect()
    }
}

/// Label names shared by every example, checking they agree across the corpus.
pub fn label_names(corpus: &[LabeledExample]) -> Result<Vec<String>, CorpusError> {
    let Some(first) = corpus.first() else { return Ok(Vec::new()) };
    let expected: Vec<String> = first.labels.keys().cloned().collect();
    for (index, ex) in corpus.iter().enumerate() {
        if !ex.labels.keys().eq(expected.iter()) {
            return Err(CorpusError::InconsistentLabels {
                index,
                expected,
                found: ex.labels.keys().cloned().collect(),
            });
        }
    }
    Ok(expected)
}

/// Seeded shuffle, then the first `round(n * test_fraction)` examples become the test set.
pub fn split(
    corpus: &[LabeledExample],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>), CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(test_fraction));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = libm::round(corpus.len() as f64 * test_fraction) as usize;
    let test = order[..n_test].iter().map(|&i| corpus[i].clone()).collect();
    let train = order[n_test..].iter().map(|&i| corpus[i].clone()).collect();
    Ok((train, test))
}

/// Count vectors and target vectors for training.
pub fn to_dataset(
    examples: &[LabeledExample],
    vocab: &Vocabulary,
    heads: &[String],
) -> Result<Vec<(Vec<f64>, Vec<f64>)>, CorpusError> {
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| Ok((vectorize(&ex.text, vocab), ex.targets(heads, i)?)))
        .collect()
}

/// Phrase lexicons for synthesising a labelled corpus.
///
/// Positive examples embed one or two phrases of their label's lexicon among
/// zero to three neutral filler phrases; negative examples are one to four
/// filler phrases. Short examples on both sides keep sparse, mostly
/// out-of-vocabulary inputs on the negative side of the decision boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TemplateSpec {
    pub labels: BTreeMap<String, Vec<String>>,
    pub filler: Vec<String>,
}

/// Balanced synthetic corpus: `size / 2` positives spread round-robin over the
/// labels, the rest negatives, shuffled. Deterministic for a fixed seed.
pub fn generate_synthetic_corpus(
    spec: &TemplateSpec,
    size: usize,
    seed: u64,
) -> Result<Vec<LabeledExample>, CorpusError> {
    if spec.labels.is_empty() {
        return Err(CorpusError::NoTemplateLabels);
    }
    if let Some((name, _)) = spec.labels.iter().find(|(_, l)| l.is_empty()) {
        return Err(CorpusError::EmptyLexicon(name.clone()));
    }
    if spec.filler.is_empty() {
        return Err(CorpusError::EmptyLexicon(String::from("filler")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<&String> = spec.labels.keys().collect();
    let zero_labels: BTreeMap<String, u8> = names.iter().map(|n| ((*n).clone(), 0)).collect();
    let n_pos = size / 2;

    let mut corpus = Vec::with_capacity(size);
    for i in 0..size {
        let mut parts: Vec<&str> = Vec::new();
        let mut labels = zero_labels.clone();
        if i < n_pos {
            let label = names[i % names.len()];
            let lexicon = &spec.labels[label];
            for _ in 0..rng.random_range(0..=3) {
                parts.push(spec.filler.choose(&mut rng).unwrap());
            }
            let phrases = if rng.random_range(0..3) == 0 { 2 } else { 1 };
            for _ in 0..phrases {
                let at = rng.random_range(0..=parts.len());
                parts.insert(at, lexicon.choose(&mut rng).unwrap());
            }
            labels.insert(label.clone(), 1);
        } else {
            for _ in 0..rng.random_range(1..=4) {
                parts.push(spec.filler.choose(&mut rng).unwrap());
            }
        }
        corpus.push(LabeledExample { text: parts.join(" "), labels });
    }
    corpus.shuffle(&mut rng);
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn ex(text: &str, label: u8) -> LabeledExample {
        let mut labels = BTreeMap::new();
        labels.insert(String::from("violence"), label);
        LabeledExample::new(text, labels).unwrap()
    }

    fn spec() -> TemplateSpec {
        let mut labels = BTreeMap::new();
        labels.insert("threat".into(), vec!["i will find you".into(), "watch your back".into()]);
        labels.insert("insult".into(), vec!["you absolute clown".into()]);
        TemplateSpec {
            labels,
            filler: vec!["the bus was late".into(), "we had soup for lunch".into(), "it rained".into()],
        }
    }

    #[test]
    fn labels_must_be_binary_and_present() {
        assert_eq!(LabeledExample::new("x", BTreeMap::new()), Err(CorpusError::NoLabels));
        let mut labels = BTreeMap::new();
        labels.insert(String::from("a"), 2);
        assert!(matches!(LabeledExample::new("x", labels), Err(CorpusError::NonBinaryLabel { value: 2, .. })));
    }

    #[test]
    fn label_names_must_agree() {
        let mut other = BTreeMap::new();
        other.insert(String::from("toxic"), 0);
        let corpus = vec![ex("a", 0), LabeledExample::new("b", other).unwrap()];
        assert!(matches!(label_names(&corpus), Err(CorpusError::InconsistentLabels { index: 1, .. })));
        assert_eq!(label_names(&[ex("a", 1)]).unwrap(), vec![String::from("violence")]);
    }

    #[test]
    fn split_cardinalities() {
        let corpus: Vec<_> = (0..10).map(|i| ex(&format!("t{i}"), (i % 2) as u8)).collect();
        let (train, test) = split(&corpus, 0.2, 7).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let mut all: Vec<_> = train.iter().chain(&test).map(|e| e.text.clone()).collect();
        all.sort();
        let mut expected: Vec<_> = corpus.iter().map(|e| e.text.clone()).collect();
        expected.sort();
        assert_eq!(all, expected);
        assert_eq!(split(&corpus, 0.2, 7).unwrap(), (train, test));

        let (a, b) = split(&corpus[..2], 0.5, 1).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
        for bad in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(split(&corpus, bad, 1).is_err());
        }
    }

    #[test]
    fn synthetic_corpus_is_balanced_and_seeded() {
        let s = spec();
        let corpus = generate_synthetic_corpus(&s, 200, 1).unwrap();
        assert_eq!(corpus.iter().filter(|e| e.is_positive()).count(), 100);
        assert_eq!(corpus.len(), 200);
        assert_eq!(corpus, generate_synthetic_corpus(&s, 200, 1).unwrap());
        assert_ne!(corpus, generate_synthetic_corpus(&s, 200, 2).unwrap());
        for e in &corpus {
            for (label, &v) in &e.labels {
                if v == 1 {
                    assert!(s.labels[label].iter().any(|p| e.text.contains(p.as_str())), "{e:?}");
                }
            }
            assert!(e.labels.values().filter(|&&v| v == 1).count() <= 1);
        }
    }

    #[test]
    fn empty_lexicon_rejected() {
        let mut s = spec();
        s.labels.insert("empty".into(), vec![]);
        assert_eq!(generate_synthetic_corpus(&s, 10, 0), Err(CorpusError::EmptyLexicon("empty".into())));
        let mut s = spec();
        s.filler.clear();
        assert!(generate_synthetic_corpus(&s, 10, 0).is_err());
    }

    #[test]
    fn targets_follow_head_order() {
        let mut labels = BTreeMap::new();
        labels.insert(String::from("a"), 1);
        labels.insert(String::from("b"), 0);
        let e = LabeledExample::new("x", labels).unwrap();
        assert_eq!(e.targets(&["b".into(), "a".into()], 0).unwrap(), vec![0.0, 1.0]);
        assert_eq!(e.targets(&["a".into()], 0), Err(CorpusError::UnknownHead("b".into())));
        assert!(matches!(
            e.targets(&["a".into(), "b".into(), "c".into()], 3),
            Err(CorpusError::MissingHead { index: 3, .. })
        ));
    }
}
