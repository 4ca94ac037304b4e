//! Specialized exploitation agents. Each agent encodes its class's expert
//! methodology as a structured pipeline and validates exploitability through
//! concrete behavioral evidence, never speculation.

pub mod cmdi;
pub mod idor;
pub mod lfi;
pub mod sqli;
pub mod ssrf;
pub mod ssti;
pub mod xss;
pub mod xxe;

use std::time::Instant;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::http::{HttpEngine, HttpError, Session};
use crate::llm::LlmGateway;
use crate::memory::{LongTermStore, ShortTermMemory};
use crate::payload::MarkerGen;
use crate::state::{
    AttemptOutcome, DigestConfig, Finding, FlagPattern, InjectionPoint, PayloadAttempt, PointKey,
    ScanState, VulnClass,
};
use crate::verifier::VerifierBackend;

pub use xss::{inject_canaries, ReflectionObservation};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Http(#[from] HttpError),
}

impl AgentError {
    pub fn is_budget(&self) -> bool {
        matches!(self, AgentError::Http(HttpError::BudgetExhausted))
    }
}

/// Knobs frozen from the build contract; every threshold is pinned here.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Delay for time-based detection probes (ms).
    pub detect_delay_ms: u64,
    /// Delay for per-character extraction probes (ms).
    pub extract_delay_ms: u64,
    /// Benign samples for a timing baseline (blind pre-condition: >= 5).
    pub baseline_samples: u32,
    /// Hard cap on exploit-phase payload attempts per point (regression
    /// guard: solved challenges converge within 10-40 attempts).
    pub exploit_attempt_cap: u32,
    /// LLM candidates requested per synthesis round.
    pub llm_candidates: usize,
    /// Maximum characters extracted by blind inference.
    pub max_extract_len: usize,
    /// Expression the blind extractor reads, character by character.
    pub blind_extract_query: String,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            detect_delay_ms: 2_000,
            extract_delay_ms: 1_500,
            baseline_samples: 5,
            exploit_attempt_cap: 40,
            llm_candidates: 4,
            max_extract_len: 64,
            blind_extract_query: "(SELECT secret)".to_string(),
        }
    }
}

/// Everything an agent needs for one run. Agents execute one at a time; the
/// scan state is only ever touched from this context.
pub struct AgentCx<'a> {
    pub engine: &'a HttpEngine,
    pub state: &'a mut ScanState,
    pub short_mem: &'a mut ShortTermMemory,
    pub long_mem: &'a LongTermStore,
    pub llm: &'a LlmGateway,
    pub verifier: &'a dyn VerifierBackend,
    pub markers: &'a mut MarkerGen,
    pub digests: &'a DigestConfig,
    pub flag_pattern: &'a FlagPattern,
    pub config: &'a AgentConfig,
    pub observations: &'a [ReflectionObservation],
    pub render_pages: &'a [Url],
    pub demo_creds: &'a [(String, String)],
    pub session: Option<Session>,
    pub deadline: Option<Instant>,
    pub tokens_at_start: u64,
}

impl AgentCx<'_> {
    pub fn out_of_time(&self) -> bool {
        self.deadline.map(|d| Instant::now() >= d).unwrap_or(false)
    }

    /// Sibling points on the same endpoint, for baseline substitution.
    pub fn siblings(&self, point: &InjectionPoint) -> Vec<InjectionPoint> {
        self.state
            .surface
            .iter()
            .filter(|p| {
                p.endpoint.url == point.endpoint.url && p.endpoint.method == point.endpoint.method
            })
            .cloned()
            .collect()
    }

    /// Record one payload attempt in both the scan state and short-term
    /// memory (single source of truth for dedup).
    pub fn register(
        &mut self,
        point: &PointKey,
        class: VulnClass,
        payload: &[u8],
        outcome: AttemptOutcome,
        body: &[u8],
    ) {
        let attempt = PayloadAttempt {
            point: point.clone(),
            vuln_class: class,
            payload: payload.to_vec(),
            outcome,
            response_digest: self.digests.digest(body),
            sent_at_ms: self.engine.now_ms(),
        };
        self.short_mem.record_attempt(point, class, payload, outcome);
        if let Err(err) = self.state.register_attempt(attempt) {
            tracing::warn!(%err, "attempt registration rejected");
        }
    }

    /// A previously recorded failure for this exact payload suppresses the
    /// redundant request.
    pub fn suppressed(&self, point: &PointKey, class: VulnClass, payload: &[u8]) -> bool {
        self.short_mem.suppressed(point, class, payload)
    }

    pub fn tokens_spent(&self) -> u64 {
        self.engine.budget().tokens_used().saturating_sub(self.tokens_at_start)
    }

    pub fn elapsed_s(&self) -> f64 {
        self.engine.budget().wall_elapsed().as_secs_f64()
    }

    /// First flag in a body per the configured pattern.
    pub fn flag_in(&self, body: &[u8]) -> Option<String> {
        self.flag_pattern.find_all(body).into_iter().next()
    }

    /// Register the verified attempt (or upgrade an earlier registration of
    /// the same payload) and append its finding in one step.
    pub fn emit_finding(&mut self, finding: Finding, body: &[u8]) {
        let point = finding.point.clone();
        let class = finding.vuln_class;
        let payload = finding.payload.clone();
        if self.state.was_attempted(&point, class, &payload) {
            self.state.mark_verified(&point, class, &payload);
            self.short_mem.record_attempt(&point, class, &payload, AttemptOutcome::Verified);
        } else {
            self.register(&point, class, &payload, AttemptOutcome::Verified, body);
        }
        if let Err(err) = self.state.register_finding(finding) {
            tracing::warn!(%err, "finding registration rejected");
        }
    }
}

/// One agent run's output: findings plus structured notes (fingerprints,
/// extraction summaries) for the report.
#[derive(Debug, Default)]
pub struct AgentOutput {
    pub findings_added: usize,
    pub notes: serde_json::Value,
}

#[async_trait]
pub trait Agent: Send + Sync {
    fn class(&self) -> VulnClass;
    async fn run(&self, cx: &mut AgentCx<'_>) -> Result<AgentOutput, AgentError>;
}

/// The closed agent registry, in deterministic id order.
pub fn registry() -> Vec<Box<dyn Agent>> {
    vec![
        Box::new(xss::XssAgent),
        Box::new(sqli::SqliErrorAgent),
        Box::new(sqli::SqliBooleanAgent),
        Box::new(sqli::SqliBlindTimeAgent),
        Box::new(ssti::SstiAgent),
        Box::new(cmdi::CmdiAgent),
        Box::new(lfi::LfiAgent),
        Box::new(ssrf::SsrfAgent),
        Box::new(idor::IdorAgent),
        Box::new(xxe::XxeAgent),
    ]
}
