//! Domain types shared by every stage of the gateway, and the policy that
//! turns a set of detector reports into a verdict.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// Message delivered in place of the model output when a transaction is blocked.
pub const DEFAULT_BLOCK_MESSAGE: &str = "Your request was blocked by LLMGuard policy.";

/// Which side of the transaction a text belongs to.
///
/// Ordered `Prompt < Response`, which is also the order reports appear in a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Phase {
    #[cfg_attr(feature = "serde", serde(alias = "prompt"))]
    Prompt,
    #[cfg_attr(feature = "serde", serde(alias = "response"))]
    Response,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::Prompt, Phase::Response];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Prompt => "Prompt",
            Phase::Response => "Response",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Subset of [`Phase`]s a detector is routed to. Serialized as a list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(into = "Vec<Phase>", from = "Vec<Phase>"))]
pub struct PhaseSet {
    prompt: bool,
    response: bool,
}

impl PhaseSet {
    pub const PROMPT: PhaseSet = PhaseSet { prompt: true, response: false };
    pub const RESPONSE: PhaseSet = PhaseSet { prompt: false, response: true };
    pub const BOTH: PhaseSet = PhaseSet { prompt: true, response: true };

    pub fn contains(self, phase: Phase) -> bool {
        match phase {
            Phase::Prompt => self.prompt,
            Phase::Response => self.response,
        }
    }

    pub fn is_empty(self) -> bool {
        !self.prompt && !self.response
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }
}

impl FromIterator<Phase> for PhaseSet {
    fn from_iter<I: IntoIterator<Item = Phase>>(iter: I) -> Self {
        let mut set = PhaseSet::default();
        for phase in iter {
            match phase {
                Phase::Prompt => set.prompt = true,
                Phase::Response => set.response = true,
            }
        }
        set
    }
}

impl From<Vec<Phase>> for PhaseSet {
    fn from(phases: Vec<Phase>) -> Self {
        phases.into_iter().collect()
    }
}

impl From<PhaseSet> for Vec<Phase> {
    fn from(set: PhaseSet) -> Self {
        set.iter().collect()
    }
}

/// A byte range of a scanned text, `start` inclusive and `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Span {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Span { start, end, label: label.into() }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// True when the span is nonempty, in bounds and on character boundaries of `text`.
    pub fn is_valid_for(&self, text: &str) -> bool {
        self.start < self.end
            && self.end <= text.len()
            && text.is_char_boundary(self.start)
            && text.is_char_boundary(self.end)
    }
}

/// Sorts spans by position and merges overlapping ones. Distinct labels of
/// merged spans are joined with `+`.
pub fn merge_spans(mut spans: Vec<Span>) -> Vec<Span> {
    spans.sort();
    let mut merged: Vec<Span> = Vec::with_capacity(spans.len());
    for span in spans {
        match merged.last_mut() {
            Some(last) if span.start < last.end => {
                last.end = last.end.max(span.end);
                if !last.label.split('+').any(|l| l == span.label) {
                    last.label.push('+');
                    last.label.push_str(&span.label);
                }
            }
            _ => merged.push(span),
        }
    }
    merged
}

/// One detector's finding on one text.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorReport {
    pub detector_id: String,
    pub phase: Phase,
    pub score: f64,
    pub flagged: bool,
    pub spans: Vec<Span>,
    pub threshold_used: f64,
}

impl DetectorReport {
    /// Builds a report, deriving `flagged` as `score > threshold` and merging spans.
    pub fn new(
        detector_id: impl Into<String>,
        phase: Phase,
        score: f64,
        threshold: f64,
        spans: Vec<Span>,
    ) -> Self {
        debug_assert!((0.0..=1.0).contains(&score), "score {score} outside [0, 1]");
        DetectorReport {
            detector_id: detector_id.into(),
            phase,
            score,
            flagged: exceeds(score, threshold),
            spans: merge_spans(spans),
            threshold_used: threshold,
        }
    }
}

/// The flagging rule: strictly greater than the threshold.
#[inline]
pub fn exceeds(score: f64, threshold: f64) -> bool {
    score > threshold
}

/// One prompt/response transaction passing through the gateway.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Exchange {
    pub request_id: String,
    pub prompt: String,
    pub response: Option<String>,
}

impl Exchange {
    pub fn new(request_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Exchange { request_id: request_id.into(), prompt: prompt.into(), response: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Decision {
    Allow,
    Block,
}

/// Final outcome of a transaction.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Verdict {
    pub decision: Decision,
    /// Earliest phase holding a flagged report, if blocked.
    pub blocked_phase: Option<Phase>,
    pub reports: Vec<DetectorReport>,
    pub delivered_text: String,
}

impl Verdict {
    pub fn is_blocked(&self) -> bool {
        self.decision == Decision::Block
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("detector `{id}`: threshold {value} is outside [0, 1]")]
    InvalidThreshold { id: String, value: f64 },
    #[error("detector `{0}` is enabled but routed to no phase")]
    EmptyPhases(String),
    #[error("detector `{0}` is listed more than once")]
    DuplicateDetector(String),
    #[error("unknown detector `{0}`")]
    UnknownDetector(String),
}

/// Routing and threshold for one detector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorPolicy {
    pub detector_id: String,
    pub enabled: bool,
    pub threshold: f64,
    pub phases: PhaseSet,
}

impl DetectorPolicy {
    pub fn new(detector_id: impl Into<String>, threshold: f64, phases: PhaseSet) -> Self {
        DetectorPolicy { detector_id: detector_id.into(), enabled: true, threshold, phases }
    }

    pub fn disabled(mut self) -> Self {
        self.enabled = false;
        self
    }

    pub fn runs_on(&self, phase: Phase) -> bool {
        self.enabled && self.phases.contains(phase)
    }
}

/// Request-scoped adjustment of one existing policy entry.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DetectorOverride {
    #[cfg_attr(feature = "serde", serde(default))]
    pub enabled: Option<bool>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub threshold: Option<f64>,
}

/// Per-detector enablement, thresholds and phase routing, plus the block message.
///
/// Entries are kept sorted by detector id. A `Policy` can only be built through
/// [`Policy::new`], so every instance satisfies its invariants.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "PolicyRepr"))]
pub struct Policy {
    detectors: Vec<DetectorPolicy>,
    block_message: String,
    short_circuit: bool,
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyRepr {
    detectors: Vec<DetectorPolicy>,
    block_message: String,
    short_circuit: bool,
}

#[cfg(feature = "serde")]
impl TryFrom<PolicyRepr> for Policy {
    type Error = PolicyError;

    fn try_from(repr: PolicyRepr) -> Result<Self, Self::Error> {
        Policy::new(repr.detectors, repr.block_message, repr.short_circuit)
    }
}

impl Policy {
    pub fn new(
        mut detectors: Vec<DetectorPolicy>,
        block_message: impl Into<String>,
        short_circuit: bool,
    ) -> Result<Self, PolicyError> {
        detectors.sort_by(|a, b| a.detector_id.cmp(&b.detector_id));
        for pair in detectors.windows(2) {
            if pair[0].detector_id == pair[1].detector_id {
                return Err(PolicyError::DuplicateDetector(pair[0].detector_id.clone()));
            }
        }
        for entry in &detectors {
            validate_entry(entry)?;
        }
        Ok(Policy { detectors, block_message: block_message.into(), short_circuit })
    }

    pub fn detectors(&self) -> &[DetectorPolicy] {
        &self.detectors
    }

    pub fn get(&self, detector_id: &str) -> Option<&DetectorPolicy> {
        self.detectors
            .binary_search_by(|e| e.detector_id.as_str().cmp(detector_id))
            .ok()
            .map(|i| &self.detectors[i])
    }

    pub fn block_message(&self) -> &str {
        &self.block_message
    }

    pub fn short_circuit(&self) -> bool {
        self.short_circuit
    }

    pub fn with_short_circuit(mut self, short_circuit: bool) -> Self {
        self.short_circuit = short_circuit;
        self
    }

    pub fn with_block_message(mut self, message: impl Into<String>) -> Self {
        self.block_message = message.into();
        self
    }

    /// Entries that run on `phase`, in detector id order.
    pub fn enabled_for(&self, phase: Phase) -> impl Iterator<Item = &DetectorPolicy> {
        self.detectors.iter().filter(move |e| e.runs_on(phase))
    }

    /// Merges request-scoped overrides over this policy. Overrides may only
    /// touch detectors the policy already lists.
    pub fn apply_overrides<'a, I>(&self, overrides: I) -> Result<Policy, PolicyError>
    where
        I: IntoIterator<Item = (&'a String, &'a DetectorOverride)>,
    {
        let mut merged = self.clone();
        for (id, over) in overrides {
            let idx = merged
                .detectors
                .binary_search_by(|e| e.detector_id.cmp(id))
                .map_err(|_| PolicyError::UnknownDetector(id.clone()))?;
            let entry = &mut merged.detectors[idx];
            if let Some(enabled) = over.enabled {
                entry.enabled = enabled;
            }
            if let Some(threshold) = over.threshold {
                entry.threshold = threshold;
            }
            validate_entry(entry)?;
        }
        Ok(merged)
    }

    /// Same policy with every detector disabled.
    pub fn all_disabled(&self) -> Policy {
        let mut p = self.clone();
        for entry in &mut p.detectors {
            entry.enabled = false;
        }
        p
    }
}

fn validate_entry(entry: &DetectorPolicy) -> Result<(), PolicyError> {
    if !(0.0..=1.0).contains(&entry.threshold) {
        return Err(PolicyError::InvalidThreshold {
            id: entry.detector_id.clone(),
            value: entry.threshold,
        });
    }
    if entry.enabled && entry.phases.is_empty() {
        return Err(PolicyError::EmptyPhases(entry.detector_id.clone()));
    }
    Ok(())
}

/// Built-in detectors enabled at threshold 0.5. PII screens prompts only,
/// violence screens responses only, everything else screens both sides.
pub fn default_policy() -> Policy {
    let entries = [
        ("pii", PhaseSet::PROMPT),
        ("racial_bias", PhaseSet::BOTH),
        ("topic:politics", PhaseSet::BOTH),
        ("topic:religion", PhaseSet::BOTH),
        ("topic:sports", PhaseSet::BOTH),
        ("toxicity", PhaseSet::BOTH),
        ("violence", PhaseSet::RESPONSE),
    ]
    .into_iter()
    .map(|(id, phases)| DetectorPolicy::new(id, 0.5, phases))
    .collect();
    Policy::new(entries, DEFAULT_BLOCK_MESSAGE, false).expect("built-in policy is valid")
}

/// Decides a transaction from its reports: blocked if and only if any report is flagged.
///
/// Reports are ordered by `(phase, detector_id)`. `allowed_text` is what gets
/// delivered when nothing flags (the upstream response, or the text under scan).
pub fn evaluate_policy(
    mut reports: Vec<DetectorReport>,
    policy: &Policy,
    allowed_text: &str,
) -> Result<Verdict, PolicyError> {
    if let Some(unknown) = reports.iter().find(|r| policy.get(&r.detector_id).is_none()) {
        return Err(PolicyError::UnknownDetector(unknown.detector_id.clone()));
    }
    reports.sort_by(|a, b| (a.phase, &a.detector_id).cmp(&(b.phase, &b.detector_id)));
    let blocked_phase = reports.iter().find(|r| r.flagged).map(|r| r.phase);
    let (decision, delivered_text) = match blocked_phase {
        Some(_) => (Decision::Block, policy.block_message.clone()),
        None => (Decision::Allow, allowed_text.to_string()),
    };
    Ok(Verdict { decision, blocked_phase, reports, delivered_text })
}

/// Groups flagged spans by detector, as surfaced to callers highlighting text.
pub fn flagged_spans(reports: &[DetectorReport]) -> BTreeMap<&str, &[Span]> {
    reports
        .iter()
        .filter(|r| r.flagged && !r.spans.is_empty())
        .map(|r| (r.detector_id.as_str(), r.spans.as_slice()))
        .collect()
}
