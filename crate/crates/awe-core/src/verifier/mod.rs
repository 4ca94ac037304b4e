//! Execution-grounded verification: definitive evidence of script execution
//! for XSS, flag confirmation for all classes, and trace replay.
//!
//! Two interchangeable backends sit behind one contract: the built-in
//! HTML+script evaluation harness (hermetic, the CI default) and an external
//! browser-automation endpoint selected with `--verifier=browser`.

pub mod harness;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use harness::SignalKind;

use crate::http::{HttpEngine, HttpError};
use crate::state::{DigestConfig, Evidence, EvidenceDetail, Finding, FlagPattern};

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("verifier backend unavailable: {0}")]
    Unavailable(String),
}

/// Verification timeout per page.
pub const VERIFY_TIMEOUT_MS: u64 = 5_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionEvidence {
    pub marker: String,
    pub signal: SignalKind,
    pub page_url: String,
    pub captured_at_ms: u64,
}

/// A page to verify: the fetched document plus where it came from.
#[derive(Debug, Clone)]
pub struct PageSource {
    pub url: String,
    pub html: String,
}

#[async_trait]
pub trait VerifierBackend: Send + Sync {
    /// Evidence iff the page produces an execution signal whose marker equals
    /// `expected_marker`; encoded or inert payloads yield none.
    async fn verify_execution(
        &self,
        page: &PageSource,
        expected_marker: &str,
    ) -> Result<Option<ExecutionEvidence>, VerifierError>;

    fn id(&self) -> &'static str;
}

/// Built-in deterministic harness backend.
#[derive(Debug, Default)]
pub struct HarnessVerifier;

#[async_trait]
impl VerifierBackend for HarnessVerifier {
    async fn verify_execution(
        &self,
        page: &PageSource,
        expected_marker: &str,
    ) -> Result<Option<ExecutionEvidence>, VerifierError> {
        if expected_marker.is_empty() {
            return Ok(None);
        }
        let evidence = harness::evaluate_page(&page.html)
            .into_iter()
            .find(|s| s.marker == expected_marker)
            .map(|s| ExecutionEvidence {
                marker: s.marker,
                signal: s.kind,
                page_url: page.url.clone(),
                captured_at_ms: now_ms(),
            });
        Ok(evidence)
    }

    fn id(&self) -> &'static str {
        "harness"
    }
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// External browser-automation backend: posts the page and marker to the
/// endpoint named by `AWE_BROWSER_ENDPOINT` and expects
/// `{"executed": bool, "signal": "...", "marker": "..."}`.
pub struct BrowserVerifier {
    endpoint: String,
    client: reqwest::Client,
}

impl BrowserVerifier {
    pub fn from_env() -> Result<Self, VerifierError> {
        let endpoint = std::env::var("AWE_BROWSER_ENDPOINT")
            .map_err(|_| VerifierError::Unavailable("AWE_BROWSER_ENDPOINT not set".into()))?;
        let client = reqwest::Client::builder()
            .timeout(std::time::Duration::from_millis(VERIFY_TIMEOUT_MS))
            .build()
            .map_err(|e| VerifierError::Unavailable(e.to_string()))?;
        Ok(BrowserVerifier { endpoint, client })
    }
}

#[async_trait]
impl VerifierBackend for BrowserVerifier {
    async fn verify_execution(
        &self,
        page: &PageSource,
        expected_marker: &str,
    ) -> Result<Option<ExecutionEvidence>, VerifierError> {
        let body = serde_json::json!({
            "url": page.url,
            "html": page.html,
            "marker": expected_marker,
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .await
            .map_err(|e| VerifierError::Unavailable(e.to_string()))?;
        let doc: serde_json::Value =
            resp.json().await.map_err(|e| VerifierError::Unavailable(e.to_string()))?;
        if doc.get("executed").and_then(|v| v.as_bool()) != Some(true) {
            return Ok(None);
        }
        let marker = doc.get("marker").and_then(|v| v.as_str()).unwrap_or_default();
        if marker != expected_marker {
            return Ok(None);
        }
        let signal = match doc.get("signal").and_then(|v| v.as_str()) {
            Some("dialog_triggered") => SignalKind::DialogTriggered,
            Some("dom_mutation") => SignalKind::DomMutation,
            _ => SignalKind::HookCallback,
        };
        Ok(Some(ExecutionEvidence {
            marker: marker.to_string(),
            signal,
            page_url: page.url.clone(),
            captured_at_ms: now_ms(),
        }))
    }

    fn id(&self) -> &'static str {
        "browser"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierChoice {
    Harness,
    Browser,
}

impl std::str::FromStr for VerifierChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "harness" => Ok(VerifierChoice::Harness),
            "browser" => Ok(VerifierChoice::Browser),
            other => Err(format!("unknown verifier {other:?} (expected harness|browser)")),
        }
    }
}

pub fn make_verifier(choice: VerifierChoice) -> Result<Box<dyn VerifierBackend>, VerifierError> {
    match choice {
        VerifierChoice::Harness => Ok(Box::new(HarnessVerifier)),
        VerifierChoice::Browser => Ok(Box::new(BrowserVerifier::from_env()?)),
    }
}

fn detail_text(detail: &EvidenceDetail) -> String {
    match detail {
        EvidenceDetail::ExecutionObserved { marker, signal } => format!("{signal} {marker}"),
        EvidenceDetail::TimingDifferential { baseline_ms, injected_ms, threshold_ms } => {
            format!("baseline {baseline_ms}ms injected {injected_ms}ms threshold {threshold_ms}ms")
        }
        EvidenceDetail::DifferentialResponse { summary, .. } => summary.clone(),
        EvidenceDetail::ExtractedData { data } => String::from_utf8_lossy(data).into_owned(),
        EvidenceDetail::FlagCaptured { flag } => flag.clone(),
    }
}

/// Scan evidence detail and replayed response bodies for the flag pattern.
pub fn verify_flag(
    finding: &Finding,
    pattern: &FlagPattern,
    replayed_bodies: &[Vec<u8>],
) -> Option<String> {
    let text = detail_text(&finding.evidence.detail);
    if let Some(flag) = pattern.find_all(text.as_bytes()).into_iter().next() {
        return Some(flag);
    }
    for body in replayed_bodies {
        if let Some(flag) = pattern.find_all(body).into_iter().next() {
            return Some(flag);
        }
    }
    None
}

/// Result of replaying one finding's request trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub reproduced: bool,
    pub flag: Option<String>,
    pub detail: String,
}

/// Re-issue `finding.evidence.request_trace` in order and check that the
/// evidence kind reproduces against the (unchanged or freshly reset) target.
pub async fn replay_evidence(
    engine: &HttpEngine,
    finding: &Finding,
    pattern: &FlagPattern,
    digests: &DigestConfig,
) -> Result<ReplayOutcome, HttpError> {
    let mut bodies: Vec<Vec<u8>> = Vec::new();
    let mut elapsed: Vec<u64> = Vec::new();
    for req in &finding.evidence.request_trace {
        let resp = engine.replay(req).await?;
        elapsed.push(resp.elapsed_ms);
        bodies.push(resp.body);
    }
    let flag = verify_flag(finding, pattern, &bodies);
    let (reproduced, detail) = reproduces(&finding.evidence, &bodies, &elapsed, digests, &flag);
    Ok(ReplayOutcome { reproduced, flag, detail })
}

fn reproduces(
    evidence: &Evidence,
    bodies: &[Vec<u8>],
    elapsed: &[u64],
    digests: &DigestConfig,
    flag: &Option<String>,
) -> (bool, String) {
    match &evidence.detail {
        EvidenceDetail::ExecutionObserved { marker, .. } => {
            let hit = bodies.iter().any(|b| {
                harness::evaluate_page(&String::from_utf8_lossy(b))
                    .iter()
                    .any(|s| s.marker == *marker)
            });
            (hit, format!("execution signal for {marker}: {hit}"))
        }
        EvidenceDetail::TimingDifferential { threshold_ms, .. } => {
            let max = elapsed.iter().copied().max().unwrap_or(0);
            (
                max >= *threshold_ms,
                format!("max replayed latency {max}ms vs threshold {threshold_ms}ms"),
            )
        }
        EvidenceDetail::DifferentialResponse { matched_digest, differing_digest, .. } => {
            let replayed: Vec<String> = bodies.iter().map(|b| digests.digest(b)).collect();
            let ok = replayed.contains(matched_digest) && replayed.contains(differing_digest);
            (ok, format!("differential digests present: {ok}"))
        }
        EvidenceDetail::ExtractedData { data } => {
            let needle = String::from_utf8_lossy(data).into_owned();
            let hit = bodies
                .iter()
                .any(|b| String::from_utf8_lossy(b).contains(&needle))
                || flag.is_some();
            (hit, format!("extracted data reproduced: {hit}"))
        }
        EvidenceDetail::FlagCaptured { flag: expected } => {
            let hit = bodies.iter().any(|b| String::from_utf8_lossy(b).contains(expected));
            (hit, format!("flag reproduced: {hit}"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Channel, HttpMethod, PointKey, TraceRequest, VulnClass};

    fn rt() -> tokio::runtime::Runtime {
        tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap()
    }

    fn page(html: &str) -> PageSource {
        PageSource { url: "http://t/x".into(), html: html.into() }
    }

    #[test]
    fn hook_page_yields_hook_evidence() {
        let v = HarnessVerifier;
        let out = rt()
            .block_on(v.verify_execution(
                &page("<script>awe_hook('AWE1a2b3c4d')</script>"),
                "AWE1a2b3c4d",
            ))
            .unwrap()
            .expect("evidence");
        assert_eq!(out.signal, SignalKind::HookCallback);
        assert_eq!(out.marker, "AWE1a2b3c4d");
    }

    #[test]
    fn encoded_page_yields_none() {
        let v = HarnessVerifier;
        let out = rt()
            .block_on(v.verify_execution(
                &page("&lt;script&gt;awe_hook('AWE1a2b3c4d')&lt;/script&gt;"),
                "AWE1a2b3c4d",
            ))
            .unwrap();
        assert!(out.is_none());
    }

    #[test]
    fn marker_mismatch_yields_none() {
        let v = HarnessVerifier;
        let out = rt()
            .block_on(v.verify_execution(
                &page("<script>awe_hook('AWEdeadbeef')</script>"),
                "AWE1a2b3c4d",
            ))
            .unwrap();
        assert!(out.is_none(), "evidence marker must equal the expected marker");
    }

    #[test]
    fn browser_backend_requires_endpoint() {
        std::env::remove_var("AWE_BROWSER_ENDPOINT");
        assert!(matches!(BrowserVerifier::from_env(), Err(VerifierError::Unavailable(_))));
        assert!(make_verifier(VerifierChoice::Harness).is_ok());
    }

    fn finding_with(detail: EvidenceDetail) -> Finding {
        Finding {
            vuln_class: VulnClass::Xss,
            point: PointKey {
                method: HttpMethod::Get,
                url: "http://t/".into(),
                channel: Channel::Query,
                name: "q".into(),
            },
            payload: b"p".to_vec(),
            evidence: Evidence {
                detail,
                request_trace: vec![TraceRequest {
                    method: "GET".into(),
                    url: "http://t/".into(),
                    headers: vec![],
                    body: vec![],
                }],
            },
            solved_flag: None,
            elapsed_s: 0.0,
            tokens_spent: 0,
            exploit_attempts: 1,
        }
    }

    #[test]
    fn verify_flag_reads_detail_and_bodies() {
        let pattern = FlagPattern::default();
        let f = finding_with(EvidenceDetail::ExtractedData {
            data: b"found FLAG{deadbeef01} inside".to_vec(),
        });
        assert_eq!(verify_flag(&f, &pattern, &[]), Some("FLAG{deadbeef01}".into()));

        let f = finding_with(EvidenceDetail::ExtractedData { data: b"no flag".to_vec() });
        assert_eq!(verify_flag(&f, &pattern, &[]), None);
        assert_eq!(
            verify_flag(&f, &pattern, &[b"body FLAG{abcdef12}".to_vec()]),
            Some("FLAG{abcdef12}".into())
        );
    }

    #[test]
    fn reproduces_execution_and_timing_predicates() {
        let digests = DigestConfig::default();
        let exec = Evidence {
            detail: EvidenceDetail::ExecutionObserved {
                marker: "AWE1a2b3c4d".into(),
                signal: "hook_callback".into(),
            },
            request_trace: vec![],
        };
        let body = b"<script>awe_hook('AWE1a2b3c4d')</script>".to_vec();
        assert!(reproduces(&exec, &[body], &[5], &digests, &None).0);
        assert!(!reproduces(&exec, &[b"<p>inert</p>".to_vec()], &[5], &digests, &None).0);

        let timing = Evidence {
            detail: EvidenceDetail::TimingDifferential {
                baseline_ms: 10,
                injected_ms: 2010,
                threshold_ms: 1610,
            },
            request_trace: vec![],
        };
        assert!(reproduces(&timing, &[vec![]], &[1700], &digests, &None).0);
        assert!(!reproduces(&timing, &[vec![]], &[40], &digests, &None).0);
    }
}
