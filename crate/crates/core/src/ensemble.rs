//! Runs the enabled detectors over each phase of an exchange and decides it.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::detector::Registry;
use crate::model::{evaluate_policy, DetectorReport, Exchange, Phase, Policy, PolicyError, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("upstream call failed: {message}")]
pub struct UpstreamError {
    pub message: String,
}

impl UpstreamError {
    pub fn new(message: impl Into<String>) -> Self {
        UpstreamError { message: message.into() }
    }
}

/// The LLM backend being guarded.
pub trait Upstream: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, UpstreamError>;
}

impl<F> Upstream for F
where
    F: Fn(&str) -> Result<String, UpstreamError> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, UpstreamError> {
        self(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GuardError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    /// The upstream failed; this is never reported as a policy block.
    #[error(transparent)]
    Upstream(#[from] UpstreamError),
}

/// Reports of every enabled detector routed to `phase`, in detector id order.
///
/// With `short_circuit` set, stops after the first flagged report.
pub fn guard_text(
    registry: &Registry,
    policy: &Policy,
    text: &str,
    phase: Phase,
) -> Result<Vec<DetectorReport>, GuardError> {
    let mut reports = Vec::new();
    for entry in policy.enabled_for(phase) {
        let detector = registry
            .get(&entry.detector_id)
            .ok_or_else(|| PolicyError::UnknownDetector(entry.detector_id.clone()))?;
        let report = detector.detect(text, phase, entry.threshold);
        let flagged = report.flagged;
        reports.push(report);
        if flagged && policy.short_circuit() {
            break;
        }
    }
    Ok(reports)
}

/// Screens the prompt, calls the upstream only if the prompt passes, then
/// screens the response.
///
/// A prompt-phase block never reaches the upstream. On success the exchange's
/// `response` is filled in.
pub fn guard_exchange(
    registry: &Registry,
    policy: &Policy,
    exchange: &mut Exchange,
    upstream: &dyn Upstream,
) -> Result<Verdict, GuardError> {
    let mut reports = guard_text(registry, policy, &exchange.prompt, Phase::Prompt)?;
    if reports.iter().any(|r| r.flagged) {
        return Ok(evaluate_policy(reports, policy, "")?);
    }
    let response = upstream.complete(&exchange.prompt)?;
    reports.extend(guard_text(registry, policy, &response, Phase::Response)?);
    let verdict = evaluate_policy(reports, policy, &response)?;
    exchange.response = Some(response);
    Ok(verdict)
}
