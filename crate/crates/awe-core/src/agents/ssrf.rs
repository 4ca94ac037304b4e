//! SSRF agent: internal-endpoint substitution into URL-shaped parameters,
//! with a scanner-hosted callback listener as the fallback method.

use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use url::Url;

use super::{Agent, AgentCx, AgentError, AgentOutput};
use crate::payload::SSRF_SEEDS;
use crate::state::{
    AttemptOutcome, Channel, Evidence, EvidenceDetail, Finding, InjectionPoint, VulnClass,
};

pub fn url_shaped(value: &str) -> bool {
    Url::parse(value)
        .map(|u| matches!(u.scheme(), "http" | "https"))
        .unwrap_or(false)
}

/// SSRF only targets parameters the server fetches: query/body values whose
/// baseline parses as a URL. Header channels like Referer are excluded.
pub fn ssrf_eligible(point: &InjectionPoint) -> bool {
    matches!(point.channel, Channel::Query | Channel::BodyField) && url_shaped(&point.baseline_value)
}

/// Minimal single-shot callback listener: records the path of the first
/// request it receives.
pub struct CallbackListener {
    pub url: String,
    hit: Arc<Mutex<Option<String>>>,
    task: tokio::task::JoinHandle<()>,
}

impl CallbackListener {
    pub async fn bind() -> Option<Self> {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.ok()?;
        let addr = listener.local_addr().ok()?;
        let hit = Arc::new(Mutex::new(None));
        let hit_writer = hit.clone();
        let task = tokio::spawn(async move {
            if let Ok((mut stream, _)) = listener.accept().await {
                let mut buf = vec![0u8; 2048];
                if let Ok(n) = stream.read(&mut buf).await {
                    let text = String::from_utf8_lossy(&buf[..n]).into_owned();
                    if let Some(path) = text.lines().next().and_then(|l| l.split(' ').nth(1)) {
                        *hit_writer.lock().expect("listener lock") = Some(path.to_string());
                    }
                }
                let _ = stream
                    .write_all(b"HTTP/1.1 200 OK\r\ncontent-length: 2\r\n\r\nok")
                    .await;
            }
        });
        Some(CallbackListener { url: format!("http://{addr}"), hit, task })
    }

    pub fn hit_path(&self) -> Option<String> {
        self.hit.lock().expect("listener lock").clone()
    }
}

impl Drop for CallbackListener {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Substitute internal-only URLs; finding iff internal content reflects or
/// the callback fires with the scan-unique token.
pub async fn ssrf_scan(
    cx: &mut AgentCx<'_>,
    point: &InjectionPoint,
) -> Result<Option<Finding>, AgentError> {
    if !ssrf_eligible(point) {
        return Ok(None);
    }
    let siblings = cx.siblings(point);
    let session = cx.session.clone();

    for internal in &SSRF_SEEDS.internal_urls {
        if cx.out_of_time() {
            break;
        }
        if cx.suppressed(&point.key(), VulnClass::Ssrf, internal.as_bytes()) {
            continue;
        }
        let resp = cx
            .engine
            .execute_tagged(point, internal.as_bytes(), &siblings, session.as_ref(), "probe")
            .await?;
        let body = resp.body_text().into_owned();
        let flag = cx.flag_in(body.as_bytes());
        let signature = SSRF_SEEDS
            .internal_signatures
            .iter()
            .find(|s| body.contains(s.as_str()))
            .cloned();
        if flag.is_none() && signature.is_none() {
            cx.register(
                &point.key(),
                VulnClass::Ssrf,
                internal.as_bytes(),
                AttemptOutcome::NoSignal,
                body.as_bytes(),
            );
            continue;
        }
        let data = signature.unwrap_or_else(|| "internal content".to_string());
        let finding = Finding {
            vuln_class: VulnClass::Ssrf,
            point: point.key(),
            payload: internal.clone().into_bytes(),
            evidence: Evidence {
                detail: EvidenceDetail::ExtractedData { data: data.into_bytes() },
                request_trace: vec![resp.request.clone()],
            },
            solved_flag: flag,
            elapsed_s: cx.elapsed_s(),
            tokens_spent: cx.tokens_spent(),
            exploit_attempts: 1,
        };
        cx.emit_finding(finding.clone(), body.as_bytes());
        return Ok(Some(finding));
    }

    // Fallback: scanner-hosted callback. A bind failure just means the
    // internal-endpoint method was the only one available.
    let Some(listener) = CallbackListener::bind().await else {
        return Ok(None);
    };
    let token = cx.markers.next_marker();
    let callback_url = format!("{}/cb/{token}", listener.url);
    let resp = cx
        .engine
        .execute_tagged(point, callback_url.as_bytes(), &siblings, session.as_ref(), "probe")
        .await?;
    tokio::time::sleep(std::time::Duration::from_millis(200)).await;
    match listener.hit_path() {
        Some(path) if path.contains(&token) => {
            let finding = Finding {
                vuln_class: VulnClass::Ssrf,
                point: point.key(),
                payload: callback_url.clone().into_bytes(),
                evidence: Evidence {
                    detail: EvidenceDetail::ExecutionObserved {
                        marker: token,
                        signal: "callback_fired".to_string(),
                    },
                    request_trace: vec![resp.request.clone()],
                },
                solved_flag: None,
                elapsed_s: cx.elapsed_s(),
                tokens_spent: cx.tokens_spent(),
                exploit_attempts: 1,
            };
            cx.emit_finding(finding.clone(), &resp.body);
            Ok(Some(finding))
        }
        _ => {
            cx.register(
                &point.key(),
                VulnClass::Ssrf,
                callback_url.as_bytes(),
                AttemptOutcome::NoSignal,
                &resp.body,
            );
            Ok(None)
        }
    }
}

pub struct SsrfAgent;

#[async_trait]
impl Agent for SsrfAgent {
    fn class(&self) -> VulnClass {
        VulnClass::Ssrf
    }

    async fn run(&self, cx: &mut AgentCx<'_>) -> Result<AgentOutput, AgentError> {
        let mut output = AgentOutput::default();
        let points: Vec<InjectionPoint> =
            cx.state.surface.iter().filter(|p| ssrf_eligible(p)).cloned().collect();
        for point in points {
            if cx.out_of_time() {
                break;
            }
            match ssrf_scan(cx, &point).await {
                Ok(Some(_)) => {
                    output.findings_added += 1;
                    if cx.state.solved() {
                        break;
                    }
                }
                Ok(None) => {}
                Err(err) if err.is_budget() => return Err(err),
                Err(err) => tracing::debug!(%err, "ssrf scan failed on point"),
            }
        }
        Ok(output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_shape_gate() {
        assert!(url_shaped("http://example.com/widget"));
        assert!(url_shaped("https://a.b/c?d=1"));
        assert!(!url_shaped("42"));
        assert!(!url_shaped("hello world"));
        assert!(!url_shaped("ftp://example.com/x"));
    }

    #[tokio::test]
    async fn callback_listener_records_token_path() {
        let listener = CallbackListener::bind().await.expect("bind");
        let url = format!("{}/cb/AWEtok99", listener.url);
        let _ = reqwest::get(&url).await.expect("hit listener");
        tokio::time::sleep(std::time::Duration::from_millis(50)).await;
        assert_eq!(listener.hit_path().as_deref(), Some("/cb/AWEtok99"));
    }
}
