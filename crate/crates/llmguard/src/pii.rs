//! Regular-expression PII detector.
//!
//! Built-in patterns (the regex is applied first, then the listed post-filter):
//!
//! | name               | regex                                                              | post-filter |
//! |--------------------|--------------------------------------------------------------------|-------------|
//! | `email`            | `[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}`                   | none |
//! | `ipv4`             | `(?:(?:25[0-5]\|2[0-4]\d\|1\d\d\|[1-9]?\d)\.){3}(?:25[0-5]\|2[0-4]\d\|1\d\d\|[1-9]?\d)` | digit boundary |
//! | `phone`            | `(?:\+\d{1,3}[ .-]?)?(?:\(\d{3}\)[ .-]?)?\d+(?:[ .-]\d+)*`         | digit boundary, phone shape |
//! | `credit_card_like` | `\d(?:[ -]?\d){12,18}`                                             | digit boundary, Luhn |
//! | `ssn_like`         | `\d{3}-\d{2}-\d{4}`                                                | digit boundary |
//!
//! *Digit boundary*: the match may not touch an alphanumeric character, nor a
//! `.` or `-` that continues into another digit.
//!
//! *Phone shape*: 7 to 15 digits in total. With a leading `+CC` any grouping is
//! accepted. Without one the digit groups must be `3-4`, `3-3-4` (the first
//! group optionally parenthesised) or a single run of 10 digits.
//!
//! Overlapping candidates are resolved by earliest start, then longest match,
//! then pattern name.

use std::path::Path;

use llmguard_core::{Detector, DetectorKind, DetectorReport, Phase, Span};
use regex::Regex;
use serde::Deserialize;

use crate::error::ConfigError;

/// Extra acceptance rule applied to each regex candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validator {
    None,
    DigitBoundary,
    Phone,
    Luhn,
}

#[derive(Debug, Clone)]
pub struct PiiPattern {
    pub name: String,
    pub regex: Regex,
    pub validator: Validator,
}

/// Named patterns scanned together.
#[derive(Debug, Clone)]
pub struct PiiPatternSet {
    patterns: Vec<PiiPattern>,
}

const BUILTIN: &[(&str, &str, Validator)] = &[
    ("email", r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}", Validator::None),
    (
        "ipv4",
        r"(?:(?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)\.){3}(?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)",
        Validator::DigitBoundary,
    ),
    ("phone", r"(?:\+\d{1,3}[ .-]?)?(?:\(\d{3}\)[ .-]?)?\d+(?:[ .-]\d+)*", Validator::Phone),
    ("credit_card_like", r"\d(?:[ -]?\d){12,18}", Validator::Luhn),
    ("ssn_like", r"\d{3}-\d{2}-\d{4}", Validator::DigitBoundary),
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternFile {
    patterns: Vec<PatternEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternEntry {
    name: String,
    regex: String,
    #[serde(default = "default_validator")]
    validator: Validator,
}

fn default_validator() -> Validator {
    Validator::None
}

impl PiiPatternSet {
    pub fn builtin() -> Self {
        let patterns = BUILTIN
            .iter()
            .map(|(name, re, validator)| PiiPattern {
                name: (*name).to_string(),
                regex: Regex::new(re).expect("built-in pattern compiles"),
                validator: *validator,
            })
            .collect();
        PiiPatternSet { patterns }
    }

    pub fn new(patterns: Vec<PiiPattern>) -> Result<Self, ConfigError> {
        let mut names: Vec<&str> = patterns.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(ConfigError::Invalid(format!("duplicate PII pattern name `{}`", w[0])));
        }
        Ok(PiiPatternSet { patterns })
    }

    /// Reads a TOML pattern file: `[[patterns]]` tables with `name`, `regex`
    /// and optional `validator` (`none`, `digit_boundary`, `phone`, `luhn`).
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let file: PatternFile = toml::from_str(text).map_err(|e| ConfigError::parse(origin, e))?;
        let patterns = file
            .patterns
            .into_iter()
            .map(|e| {
                let regex = Regex::new(&e.regex).map_err(|err| {
                    ConfigError::Invalid(format!("{}: pattern `{}`: {err}", origin.display(), e.name))
                })?;
                Ok(PiiPattern { name: e.name, regex, validator: e.validator })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Self::new(patterns)
    }

    pub fn patterns(&self) -> &[PiiPattern] {
        &self.patterns
    }
}

/// All accepted, pairwise non-overlapping matches, sorted by start.
pub fn pii_scan(text: &str, patterns: &PiiPatternSet) -> Vec<Span> {
    let mut candidates: Vec<Span> = Vec::new();
    for pattern in &patterns.patterns {
        for m in pattern.regex.find_iter(text) {
            if accepts(pattern.validator, text, m.start(), m.end()) {
                candidates.push(Span::new(m.start(), m.end(), pattern.name.clone()));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.start.cmp(&b.start).then(b.len().cmp(&a.len())).then_with(|| a.label.cmp(&b.label))
    });
    let mut accepted: Vec<Span> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|a| !a.overlaps(&c)) {
            accepted.push(c);
        }
    }
    accepted.sort();
    accepted
}

fn accepts(validator: Validator, text: &str, start: usize, end: usize) -> bool {
    let matched = &text[start..end];
    match validator {
        Validator::None => true,
        Validator::DigitBoundary => digit_boundary(text, start, end),
        Validator::Phone => digit_boundary(text, start, end) && phone_shape(matched),
        Validator::Luhn => digit_boundary(text, start, end) && luhn_valid(matched),
    }
}

/// The match neither touches an alphanumeric character nor continues into
/// more digits through a `.` or `-`.
fn digit_boundary(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().rev();
    let after = text[end..].chars();
    !extends(before) && !extends(after)
}

fn extends(mut side: impl Iterator<Item = char>) -> bool {
    match side.next() {
        Some(c) if c.is_alphanumeric() => true,
        Some('.' | '-') => side.next().is_some_and(|c| c.is_ascii_digit()),
        _ => false,
    }
}

fn phone_shape(candidate: &str) -> bool {
    let digits = candidate.chars().filter(char::is_ascii_digit).count();
    if !(7..=15).contains(&digits) {
        return false;
    }
    if candidate.starts_with('+') {
        return true;
    }
    let groups: Vec<usize> = candidate
        .split(|c: char| !c.is_ascii_digit())
        .filter(|g| !g.is_empty())
        .map(str::len)
        .collect();
    matches!(groups.as_slice(), [10] | [3, 4] | [3, 3, 4])
}

/// Luhn checksum over the digits of `candidate`.
pub fn luhn_valid(candidate: &str) -> bool {
    let digits: Vec<u32> = candidate.chars().filter_map(|c| c.to_digit(10)).collect();
    if digits.is_empty() {
        return false;
    }
    let sum: u32 = digits
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &d)| {
            if i % 2 == 1 {
                let doubled = d * 2;
                if doubled > 9 {
                    doubled - 9
                } else {
                    doubled
                }
            } else {
                d
            }
        })
        .sum();
    sum % 10 == 0
}

/// Binary-score detector: 1.0 when any pattern matches.
#[derive(Debug, Clone)]
pub struct PiiDetector {
    id: String,
    patterns: PiiPatternSet,
}

impl PiiDetector {
    pub fn new(id: impl Into<String>, patterns: PiiPatternSet) -> Self {
        PiiDetector { id: id.into(), patterns }
    }

    pub fn builtin() -> Self {
        PiiDetector::new("pii", PiiPatternSet::builtin())
    }
}

impl Detector for PiiDetector {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> DetectorKind {
        DetectorKind::Regex
    }

    fn detect(&self, text: &str, phase: Phase, threshold: f64) -> DetectorReport {
        let spans = pii_scan(text, &self.patterns);
        let score = if spans.is_empty() { 0.0 } else { 1.0 };
        DetectorReport::new(self.id.clone(), phase, score, threshold, spans)
    }
}
