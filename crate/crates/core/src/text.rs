//! Tokenization and count-based vectorization.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::model::Span;

pub const DEFAULT_MAX_VOCAB: usize = 20_000;
pub const DEFAULT_MIN_COUNT: usize = 2;

/// Splits `text` into lowercase alphanumeric runs.
///
/// Every maximal run of non-alphanumeric characters is a separator. Spans are
/// byte offsets into the original text and carry the token as their label.
pub fn tokenize(text: &str) -> Vec<(String, Span)> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                tokens.extend(token_at(text, s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.extend(token_at(text, s, text.len()));
    }
    tokens
}

fn token_at(text: &str, start: usize, end: usize) -> Option<(String, Span)> {
    // Some lowercase mappings emit combining marks; keep only alphanumerics.
    let token: String =
        text[start..end].to_lowercase().chars().filter(|c| c.is_alphanumeric()).collect();
    if token.is_empty() {
        return None;
    }
    let span = Span::new(start, end, token.clone());
    Some((token, span))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabularyError {
    #[error("max_size must be at least 1")]
    ZeroMaxSize,
    #[error("min_count must be at least 1")]
    ZeroMinCount,
    #[error("invalid vocabulary token {0:?}")]
    InvalidToken(String),
    #[error("duplicate vocabulary token {0:?}")]
    DuplicateToken(String),
    #[error("vocabulary holds {len} tokens, more than max_size {max}")]
    TooLarge { len: usize, max: usize },
}

/// Ordered token list with its inverse index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
    max_size: usize,
    min_count: usize,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from an ordered token list, checking its invariants.
    pub fn from_tokens(
        tokens: Vec<String>,
        max_size: usize,
        min_count: usize,
    ) -> Result<Self, VocabularyError> {
        check_limits(max_size, min_count)?;
        if tokens.len() > max_size {
            return Err(VocabularyError::TooLarge { len: tokens.len(), max: max_size });
        }
        let mut index = BTreeMap::new();
        for (i, token) in tokens.iter().enumerate() {
            let well_formed = !token.is_empty()
                && token.chars().all(char::is_alphanumeric)
                && !token.chars().any(char::is_uppercase);
            if !well_formed {
                return Err(VocabularyError::InvalidToken(token.clone()));
            }
            if index.insert(token.clone(), i).is_some() {
                return Err(VocabularyError::DuplicateToken(token.clone()));
            }
        }
        Ok(Vocabulary { tokens, index, max_size, min_count })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }
}

fn check_limits(max_size: usize, min_count: usize) -> Result<(), VocabularyError> {
    if max_size == 0 {
        return Err(VocabularyError::ZeroMaxSize);
    }
    if min_count == 0 {
        return Err(VocabularyError::ZeroMinCount);
    }
    Ok(())
}

/// Keeps tokens seen at least `min_count` times, ranked by frequency
/// (ties broken lexicographically) and truncated to `max_size`.
pub fn build_vocabulary<'a, I>(
    corpus: I,
    max_size: usize,
    min_count: usize,
) -> Result<Vocabulary, VocabularyError>
where
    I: IntoIterator<Item = &'a str>,
{
    check_limits(max_size, min_count)?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for text in corpus {
        for (token, _) in tokenize(text) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> =
        counts.into_iter().filter(|(_, n)| *n >= min_count).collect();
    // BTreeMap iteration is already lexicographic; a stable sort keeps it for ties.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked.truncate(max_size);
    let tokens = ranked.into_iter().map(|(t, _)| t).collect();
    Vocabulary::from_tokens(tokens, max_size, min_count)
}

/// Raw term counts of `text` over `vocab`; out-of-vocabulary tokens are dropped.
pub fn vectorize(text: &str, vocab: &Vocabulary) -> Vec<f64> {
    let mut counts = vec![0.0; vocab.len()];
    for (token, _) in tokenize(text) {
        if let Some(i) = vocab.index_of(&token) {
            counts[i] += 1.0;
        }
    }
    counts
}
