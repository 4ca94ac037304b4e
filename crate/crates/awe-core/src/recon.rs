//! Attack-surface population: same-scope crawl, injection-point extraction,
//! technology fingerprinting, and opportunistic authentication.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::htmlscan::{self, Token};
use crate::http::{HttpEngine, HttpError, RequestSpec, Session, TimedResponse};
use crate::state::{
    Channel, ContentKind, Endpoint, FrameworkHint, HttpMethod, InjectionPoint, TechProfile,
};

pub const SURFACE_SCHEMA: &str = "awe-surface-v1";

/// Crawl must consume well under 10% of the wall budget at the default rate
/// limit.
pub const DEFAULT_MAX_PAGES: usize = 50;

#[derive(Debug, Error)]
pub enum ReconError {
    #[error("no reachable pages under {0}; scan aborted")]
    EmptySurface(Url),
    #[error(transparent)]
    Http(#[from] HttpError),
}

/// A crawled endpoint plus the response that discovered it.
#[derive(Debug, Clone)]
pub struct CrawlResult {
    pub endpoints: Vec<Endpoint>,
    pub responses: Vec<TimedResponse>,
    pub unauthorized_pages: Vec<Url>,
}

fn scope_prefix(base: &Url) -> String {
    let path = base.path();
    match path.rfind('/') {
        Some(idx) => path[..=idx].to_string(),
        None => "/".to_string(),
    }
}

fn in_scope(base: &Url, candidate: &Url) -> bool {
    candidate.origin() == base.origin() && candidate.path().starts_with(&scope_prefix(base))
}

/// Dedup key: (method, normalized path, sorted query parameter names).
fn endpoint_key(endpoint: &Endpoint) -> (HttpMethod, String, Vec<String>) {
    let mut names: Vec<String> =
        endpoint.url.query_pairs().map(|(k, _)| k.into_owned()).collect();
    names.sort();
    names.dedup();
    (endpoint.method, endpoint.url.path().to_string(), names)
}

struct FormSpec {
    action: String,
    method: HttpMethod,
    enctype: Option<String>,
    fields: Vec<(String, String)>,
}

/// Pull anchors and forms out of a page.
fn extract_links_and_forms(html: &str) -> (Vec<String>, Vec<FormSpec>) {
    let tokens = htmlscan::tokenize(html);
    let mut links = Vec::new();
    let mut forms: Vec<FormSpec> = Vec::new();
    let mut open_form: Option<FormSpec> = None;

    let mut i = 0;
    while i < tokens.len() {
        match &tokens[i] {
            Token::StartTag { name, attrs, .. } => {
                let attr = |want: &str| {
                    attrs.iter().find(|a| a.name == want).map(|a| a.value.clone())
                };
                match name.as_str() {
                    "a" => {
                        if let Some(href) = attr("href") {
                            links.push(htmlscan::decode_entities(&href));
                        }
                    }
                    "form" => {
                        open_form = Some(FormSpec {
                            action: attr("action").unwrap_or_default(),
                            method: match attr("method").map(|m| m.to_lowercase()) {
                                Some(m) if m == "post" => HttpMethod::Post,
                                _ => HttpMethod::Get,
                            },
                            enctype: attr("enctype"),
                            fields: Vec::new(),
                        });
                    }
                    "input" | "select" => {
                        if let Some(form) = open_form.as_mut() {
                            if let Some(field_name) = attr("name") {
                                form.fields
                                    .push((field_name, attr("value").unwrap_or_default()));
                            }
                        }
                    }
                    "textarea" => {
                        if let Some(field_name) = attr("name") {
                            // Textarea default value is its raw content.
                            let value = match tokens.get(i + 1) {
                                Some(Token::RawText { element, span }) if element == "textarea" => {
                                    htmlscan::decode_entities(&html[span.clone()])
                                }
                                _ => String::new(),
                            };
                            if let Some(form) = open_form.as_mut() {
                                form.fields.push((field_name, value));
                            }
                        }
                    }
                    _ => {}
                }
            }
            Token::EndTag { name, .. } if name == "form" => {
                if let Some(form) = open_form.take() {
                    forms.push(form);
                }
            }
            _ => {}
        }
        i += 1;
    }
    if let Some(form) = open_form.take() {
        forms.push(form);
    }
    (links, forms)
}

fn form_to_endpoint(base: &Url, form: &FormSpec) -> Option<Endpoint> {
    let action = if form.action.is_empty() { base.to_string() } else { form.action.clone() };
    let mut url = base.join(&action).ok()?;
    match form.method {
        HttpMethod::Get => {
            let mut pairs: Vec<(String, String)> = form.fields.clone();
            pairs.sort();
            let query: Vec<String> = pairs
                .iter()
                .map(|(k, v)| {
                    format!(
                        "{}={}",
                        crate::http::percent_encode_bytes(k.as_bytes()),
                        crate::http::percent_encode_bytes(v.as_bytes())
                    )
                })
                .collect();
            if !query.is_empty() {
                url.set_query(Some(&query.join("&")));
            }
            Some(Endpoint::get(url))
        }
        HttpMethod::Post => {
            let xmlish =
                form.enctype.as_deref().map(|e| e.contains("xml")).unwrap_or(false);
            if xmlish {
                let template = form
                    .fields
                    .iter()
                    .find(|(name, _)| name == "xml")
                    .map(|(_, v)| v.clone())
                    .or_else(|| form.fields.first().map(|(_, v)| v.clone()))?;
                let mut ep = Endpoint::post(url, ContentKind::Xml);
                ep.body_template = Some(template);
                Some(ep)
            } else {
                let mut pairs: Vec<(String, String)> = form.fields.clone();
                pairs.sort();
                let body: Vec<String> = pairs
                    .iter()
                    .map(|(k, v)| {
                        format!(
                            "{}={}",
                            crate::http::percent_encode_bytes(k.as_bytes()),
                            crate::http::percent_encode_bytes(v.as_bytes())
                        )
                    })
                    .collect();
                let mut ep = Endpoint::post(url, ContentKind::FormUrlencoded);
                ep.body_template = Some(body.join("&"));
                Some(ep)
            }
        }
    }
}

/// Breadth-first traversal of same-origin, same-scope links and form actions
/// up to `max_pages` fetches. Output is canonicalized (sorted) so results are
/// deterministic regardless of fetch order.
pub async fn crawl(
    engine: &HttpEngine,
    base_url: &Url,
    max_pages: usize,
    session: Option<&Session>,
) -> Result<CrawlResult, ReconError> {
    let mut queue: VecDeque<Url> = VecDeque::new();
    let mut visited: BTreeSet<String> = BTreeSet::new();
    let mut endpoints: BTreeMap<(HttpMethod, String, Vec<String>), Endpoint> = BTreeMap::new();
    let mut responses = Vec::new();
    let mut unauthorized = Vec::new();
    let mut fetched_ok = 0usize;

    queue.push_back(base_url.clone());
    while let Some(url) = queue.pop_front() {
        if visited.len() >= max_pages {
            break;
        }
        let visit_key = {
            let mut u = url.clone();
            u.set_fragment(None);
            u.to_string()
        };
        if !visited.insert(visit_key) {
            continue;
        }
        let mut spec = RequestSpec::get(url.clone()).phase("recon");
        if let Some(s) = session {
            spec.session = Some(s.clone());
        }
        let resp = match engine.send(spec).await {
            Ok(r) => r,
            Err(HttpError::BudgetExhausted) => return Err(HttpError::BudgetExhausted.into()),
            Err(err) => {
                tracing::debug!(%url, %err, "crawl fetch failed");
                continue;
            }
        };
        if resp.status == 401 || resp.status == 403 {
            unauthorized.push(url.clone());
        }
        if (200..400).contains(&resp.status) {
            fetched_ok += 1;
        }
        // The fetched page itself is a GET endpoint.
        let final_url = Url::parse(&resp.request.url).unwrap_or_else(|_| url.clone());
        let self_ep = Endpoint::get(final_url.clone());
        endpoints.entry(endpoint_key(&self_ep)).or_insert(self_ep);

        let is_html = resp
            .header("content-type")
            .map(|ct| ct.contains("html"))
            .unwrap_or(false);
        if is_html {
            let body = resp.body_text().into_owned();
            let (links, forms) = extract_links_and_forms(&body);
            for link in links {
                if let Ok(target) = final_url.join(&link) {
                    if in_scope(base_url, &target) {
                        let ep = Endpoint::get(target.clone());
                        endpoints.entry(endpoint_key(&ep)).or_insert(ep);
                        queue.push_back(target);
                    }
                }
            }
            for form in &forms {
                if let Some(ep) = form_to_endpoint(&final_url, form) {
                    if in_scope(base_url, &ep.url) {
                        if ep.method == HttpMethod::Get {
                            queue.push_back(ep.url.clone());
                        }
                        endpoints.entry(endpoint_key(&ep)).or_insert(ep);
                    }
                }
            }
        }
        responses.push(resp);
    }

    if fetched_ok == 0 {
        return Err(ReconError::EmptySurface(base_url.clone()));
    }
    let mut out: Vec<Endpoint> = endpoints.into_values().collect();
    out.sort_by_key(|e| (e.url.to_string(), e.method));
    Ok(CrawlResult { endpoints: out, responses, unauthorized_pages: unauthorized })
}

static UUID_SHAPE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$")
        .expect("uuid shape")
});

fn id_shaped(segment: &str) -> bool {
    (!segment.is_empty() && segment.chars().all(|c| c.is_ascii_digit()))
        || UUID_SHAPE.is_match(segment)
}

pub const HEADER_CHANNELS: [(&str, &str); 3] = [
    ("User-Agent", "Mozilla/5.0 (compatible; awe)"),
    ("Referer", "http://example.com/"),
    ("X-Forwarded-For", "203.0.113.7"),
];

/// One injection point per query parameter, body field, id-shaped path
/// segment, standard header channel, and received cookie.
pub fn extract_points(endpoint: &Endpoint, sample_response: &TimedResponse) -> Vec<InjectionPoint> {
    let mut points = Vec::new();
    let mk = |channel, name: &str, baseline: &str| InjectionPoint {
        endpoint: endpoint.clone(),
        channel,
        name: name.to_string(),
        baseline_value: baseline.to_string(),
    };

    for (k, v) in endpoint.url.query_pairs() {
        points.push(mk(Channel::Query, &k, &v));
    }

    match endpoint.content_type {
        ContentKind::FormUrlencoded | ContentKind::Multipart => {
            if let Some(template) = &endpoint.body_template {
                for (k, v) in url::form_urlencoded::parse(template.as_bytes()) {
                    points.push(mk(Channel::BodyField, &k, &v));
                }
            }
        }
        ContentKind::Json => {
            if let Some(template) = &endpoint.body_template {
                if let Ok(serde_json::Value::Object(map)) =
                    serde_json::from_str::<serde_json::Value>(template)
                {
                    for (k, v) in map {
                        let baseline = match v {
                            serde_json::Value::String(s) => s,
                            other => other.to_string(),
                        };
                        points.push(mk(Channel::BodyField, &k, &baseline));
                    }
                }
            }
        }
        ContentKind::Xml => {
            if let Some(template) = &endpoint.body_template {
                for (name, value) in xml_leaf_fields(template) {
                    points.push(mk(Channel::BodyField, &name, &value));
                }
            }
        }
        ContentKind::None => {}
    }

    if let Some(segments) = endpoint.url.path_segments() {
        for (idx, seg) in segments.enumerate() {
            if id_shaped(seg) {
                points.push(mk(Channel::PathSegment, &idx.to_string(), seg));
            }
        }
    }

    for (name, baseline) in HEADER_CHANNELS {
        points.push(mk(Channel::Header, name, baseline));
    }

    for set_cookie in sample_response.headers_all("set-cookie") {
        if let Some((name, value)) = set_cookie.split(';').next().and_then(|p| p.split_once('='))
        {
            points.push(mk(Channel::Cookie, name.trim(), value.trim()));
        }
    }

    points
}

static XML_LEAF: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"<([A-Za-z][\w.-]*)>([^<>]*)</([A-Za-z][\w.-]*)>").expect("xml leaf"));

fn xml_leaf_fields(template: &str) -> Vec<(String, String)> {
    XML_LEAF
        .captures_iter(template)
        .filter(|c| c[1] == c[3])
        .map(|c| (c[1].to_string(), c[2].to_string()))
        .collect()
}

/// Framework hints derived only from observed responses.
pub fn fingerprint(responses: &[TimedResponse]) -> TechProfile {
    let mut profile = TechProfile::default();
    let mut hints: BTreeSet<FrameworkHint> = BTreeSet::new();

    for resp in responses {
        if profile.server_banner.is_none() {
            if let Some(server) = resp.header("server") {
                profile.server_banner = Some(server.to_string());
            }
        }
        let mut observe = |text: &str| {
            let lower = text.to_lowercase();
            if lower.contains("php") {
                hints.insert(FrameworkHint::Php);
            }
            if lower.contains("express") || lower.contains("node") {
                hints.insert(FrameworkHint::Node);
            }
            if lower.contains("servlet") || lower.contains("jsp") || lower.contains("coyote") {
                hints.insert(FrameworkHint::Java);
            }
            if lower.contains("gunicorn") || lower.contains("wsgi") || lower.contains("python") {
                hints.insert(FrameworkHint::Python);
            }
        };
        if let Some(server) = resp.header("server") {
            observe(server);
        }
        if let Some(powered) = resp.header("x-powered-by") {
            observe(powered);
        }
        for set_cookie in resp.headers_all("set-cookie") {
            let name = set_cookie.split('=').next().unwrap_or("").trim();
            match name {
                "PHPSESSID" => {
                    hints.insert(FrameworkHint::Php);
                }
                "JSESSIONID" => {
                    hints.insert(FrameworkHint::Java);
                }
                "connect.sid" => {
                    hints.insert(FrameworkHint::Node);
                }
                "sessionid" | "csrftoken" => {
                    hints.insert(FrameworkHint::Python);
                }
                _ => {}
            }
        }
        if resp.status >= 500 {
            let body = resp.body_text();
            let sample: String = body.chars().take(200).collect();
            if !profile.error_signature_samples.contains(&sample) {
                profile.error_signature_samples.push(sample.clone());
            }
            let lower = body.to_lowercase();
            if lower.contains("mysql") || lower.contains("fatal error") {
                hints.insert(FrameworkHint::Php);
            }
            if lower.contains("psycopg2") || lower.contains("traceback") {
                hints.insert(FrameworkHint::Python);
            }
            if lower.contains("java.sql") || lower.contains("sqlserverexception") {
                hints.insert(FrameworkHint::Java);
            }
        }
        if resp.status == 403 {
            let lower = resp.body_text().to_lowercase();
            if lower.contains("challenge") || lower.contains("captcha") || lower.contains("cf-ray")
            {
                profile.waf_suspected = true;
            }
        }
        let path = resp.request.url.to_lowercase();
        if path.contains(".php") {
            hints.insert(FrameworkHint::Php);
        }
        if path.contains(".jsp") || path.contains(".do") {
            hints.insert(FrameworkHint::Java);
        }
    }

    if hints.is_empty() {
        hints.insert(FrameworkHint::Unknown);
    }
    profile.framework_hints = hints.into_iter().collect();
    profile
}

static DEMO_CRED: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"demo account:\s*<code>([^<]+)</code>\s*/\s*<code>([^<]+)</code>")
        .expect("demo cred pattern")
});

/// Displayed demo credentials harvested from a page (training-lab pattern).
pub fn harvest_demo_creds(html: &str) -> Vec<(String, String)> {
    DEMO_CRED
        .captures_iter(html)
        .map(|c| (c[1].to_string(), c[2].to_string()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct AuthOutcome {
    pub session: Option<Session>,
    pub account: Option<(String, String)>,
    pub diagnostic: String,
}

/// Locate a login or registration form on the crawled pages and obtain a
/// session: supplied credentials first, then benign self-registration.
/// Failure is never fatal; the scan stays anonymous.
pub async fn attempt_auth(
    engine: &HttpEngine,
    base_url: &Url,
    pages: &[TimedResponse],
    credentials: Option<(String, String)>,
    seed: u64,
) -> AuthOutcome {
    let mut login_form: Option<(Url, FormSpec)> = None;
    let mut register_form: Option<(Url, FormSpec)> = None;
    for page in pages {
        let Ok(page_url) = Url::parse(&page.request.url) else { continue };
        if !in_scope(base_url, &page_url) {
            continue;
        }
        let body = page.body_text().into_owned();
        let (_, forms) = extract_links_and_forms(&body);
        for form in forms {
            if form.method != HttpMethod::Post || form.fields.len() < 2 {
                continue;
            }
            let action = form.action.to_lowercase();
            if action.contains("register") && register_form.is_none() {
                register_form = Some((page_url.clone(), form));
            } else if action.contains("login") && login_form.is_none() {
                login_form = Some((page_url.clone(), form));
            }
        }
    }

    if login_form.is_none() && register_form.is_none() {
        return AuthOutcome {
            session: None,
            account: None,
            diagnostic: "no login or registration form discovered".into(),
        };
    }

    let submit = |page_url: Url, form: &FormSpec, user: String, pass: String| {
        let action = if form.action.is_empty() {
            page_url.to_string()
        } else {
            form.action.clone()
        };
        let target = page_url.join(&action);
        let user_field = form
            .fields
            .iter()
            .map(|(k, _)| k.clone())
            .find(|k| k.contains("user") || k.contains("email"))
            .unwrap_or_else(|| "user".to_string());
        let pass_field = form
            .fields
            .iter()
            .map(|(k, _)| k.clone())
            .find(|k| k.contains("pass"))
            .unwrap_or_else(|| "pass".to_string());
        (target, user_field, pass_field, user, pass)
    };

    let tries: Vec<(Url, String, String, String, String)> = {
        let mut v = Vec::new();
        if let (Some((user, pass)), Some((page, form))) = (credentials.clone(), login_form.as_ref())
        {
            let (t, uf, pf, u, p) = submit(page.clone(), form, user, pass);
            if let Ok(t) = t {
                v.push((t, uf, pf, u, p));
            }
        }
        if let Some((page, form)) = register_form.as_ref() {
            let user = format!("awe-user-{:08x}", seed & 0xffff_ffff);
            let pass = format!("awe-pass-{:08x}", (seed >> 16) & 0xffff_ffff);
            let (t, uf, pf, u, p) = submit(page.clone(), form, user, pass);
            if let Ok(t) = t {
                v.push((t, uf, pf, u, p));
            }
        }
        v
    };

    for (target, user_field, pass_field, user, pass) in tries {
        let body = format!(
            "{}={}&{}={}",
            crate::http::percent_encode_bytes(user_field.as_bytes()),
            crate::http::percent_encode_bytes(user.as_bytes()),
            crate::http::percent_encode_bytes(pass_field.as_bytes()),
            crate::http::percent_encode_bytes(pass.as_bytes()),
        );
        let spec = RequestSpec::post(
            target.clone(),
            body.into_bytes(),
            "application/x-www-form-urlencoded",
        )
        .phase("auth");
        match engine.send(spec).await {
            Ok(resp) => {
                let session = engine.session_snapshot();
                // The redirect target doubles as the protected-page probe:
                // reaching it with the fresh cookie proves the session works.
                if resp.status < 400 && !session.is_empty() {
                    return AuthOutcome {
                        session: Some(session),
                        account: Some((user, pass)),
                        diagnostic: format!("authenticated via {}", target.path()),
                    };
                }
                tracing::debug!(status = resp.status, "auth attempt rejected");
            }
            Err(err) => {
                tracing::debug!(%err, "auth attempt failed");
            }
        }
    }

    AuthOutcome {
        session: None,
        account: None,
        diagnostic: "credentials rejected; continuing anonymous".into(),
    }
}

/// `awe-surface-v1` dump consumed by the orchestrator and `--surface-out`.
pub fn surface_json(endpoints: &[Endpoint], points: &[InjectionPoint]) -> serde_json::Value {
    serde_json::json!({
        "schema": SURFACE_SCHEMA,
        "endpoints": endpoints.iter().map(|e| serde_json::json!({
            "url": e.url.to_string(),
            "method": e.method,
            "content_type": e.content_type,
        })).collect::<Vec<_>>(),
        "points": points.iter().map(|p| serde_json::json!({
            "url": p.endpoint.url.to_string(),
            "method": p.endpoint.method,
            "channel": p.channel,
            "name": p.name,
            "baseline_value": p.baseline_value,
        })).collect::<Vec<_>>(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconConfig {
    pub max_pages: usize,
    pub credentials: Option<(String, String)>,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig { max_pages: DEFAULT_MAX_PAGES, credentials: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_response(headers: Vec<(&str, &str)>, status: u16, body: &str) -> TimedResponse {
        TimedResponse {
            status,
            headers: headers
                .into_iter()
                .map(|(k, v)| (k.to_lowercase(), v.to_string()))
                .collect(),
            body: body.as_bytes().to_vec(),
            elapsed_ms: 10,
            ts_ms: 0,
            request: crate::state::TraceRequest {
                method: "GET".into(),
                url: "http://t/".into(),
                headers: vec![],
                body: vec![],
            },
            first_request: crate::state::TraceRequest {
                method: "GET".into(),
                url: "http://t/".into(),
                headers: vec![],
                body: vec![],
            },
        }
    }

    #[test]
    fn page_with_link_and_form_yields_three_endpoints() {
        let html = r#"<a href="/a">a</a><form action="/login" method="post">
            <input name="user"><input name="pass" type="password"></form>"#;
        let (links, forms) = extract_links_and_forms(html);
        assert_eq!(links, vec!["/a"]);
        assert_eq!(forms.len(), 1);
        let base = Url::parse("http://t/").unwrap();
        let ep = form_to_endpoint(&base, &forms[0]).unwrap();
        assert_eq!(ep.method, HttpMethod::Post);
        assert_eq!(ep.url.path(), "/login");
        assert_eq!(ep.body_template.as_deref(), Some("pass=&user="));
    }

    #[test]
    fn external_links_are_out_of_scope() {
        let base = Url::parse("http://t/c/ch1/").unwrap();
        assert!(in_scope(&base, &Url::parse("http://t/c/ch1/echo?q=1").unwrap()));
        assert!(!in_scope(&base, &Url::parse("http://other/c/ch1/x").unwrap()));
        assert!(!in_scope(&base, &Url::parse("http://t/c/ch2/x").unwrap()));
    }

    #[test]
    fn query_points_plus_header_channels() {
        let ep = Endpoint::get(Url::parse("http://t/item?id=3&sort=asc").unwrap());
        let resp = sample_response(vec![], 200, "");
        let points = extract_points(&ep, &resp);
        let query: Vec<&str> = points
            .iter()
            .filter(|p| p.channel == Channel::Query)
            .map(|p| p.name.as_str())
            .collect();
        assert_eq!(query, vec!["id", "sort"]);
        let headers = points.iter().filter(|p| p.channel == Channel::Header).count();
        assert_eq!(headers, 3);
        let id = points.iter().find(|p| p.name == "id").unwrap();
        assert_eq!(id.baseline_value, "3");
    }

    #[test]
    fn post_form_fields_become_body_points() {
        let mut ep =
            Endpoint::post(Url::parse("http://t/login").unwrap(), ContentKind::FormUrlencoded);
        ep.body_template = Some("user=alice&pass=pw".into());
        let points = extract_points(&ep, &sample_response(vec![], 200, ""));
        let body: Vec<&str> = points
            .iter()
            .filter(|p| p.channel == Channel::BodyField)
            .map(|p| p.name.as_str())
            .collect();
        assert_eq!(body, vec!["user", "pass"]);
    }

    #[test]
    fn numeric_path_segment_becomes_point() {
        let ep = Endpoint::get(Url::parse("http://t/user/42/profile").unwrap());
        let points = extract_points(&ep, &sample_response(vec![], 200, ""));
        let seg = points.iter().find(|p| p.channel == Channel::PathSegment).unwrap();
        assert_eq!(seg.name, "1");
        assert_eq!(seg.baseline_value, "42");
        // Non-numeric segments are not points.
        assert_eq!(points.iter().filter(|p| p.channel == Channel::PathSegment).count(), 1);
    }

    #[test]
    fn received_cookies_become_points() {
        let ep = Endpoint::get(Url::parse("http://t/").unwrap());
        let resp =
            sample_response(vec![("set-cookie", "PHPSESSID=abc; Path=/")], 200, "");
        let points = extract_points(&ep, &resp);
        let cookie = points.iter().find(|p| p.channel == Channel::Cookie).unwrap();
        assert_eq!(cookie.name, "PHPSESSID");
        assert_eq!(cookie.baseline_value, "abc");
    }

    #[test]
    fn xml_template_fields_extracted() {
        let mut ep = Endpoint::post(Url::parse("http://t/api").unwrap(), ContentKind::Xml);
        ep.body_template =
            Some("<?xml version=\"1.0\"?><order><item>widget</item><note>hello</note></order>".into());
        let points = extract_points(&ep, &sample_response(vec![], 200, ""));
        let body: Vec<&str> = points
            .iter()
            .filter(|p| p.channel == Channel::BodyField)
            .map(|p| p.name.as_str())
            .collect();
        assert_eq!(body, vec!["item", "note"]);
    }

    #[test]
    fn fingerprint_php_from_server_and_cookie() {
        let resp = sample_response(
            vec![("server", "Apache/2.4 PHP/8.1"), ("set-cookie", "PHPSESSID=x")],
            200,
            "",
        );
        let profile = fingerprint(&[resp]);
        assert_eq!(profile.framework_hints, vec![FrameworkHint::Php]);
        assert_eq!(profile.server_banner.as_deref(), Some("Apache/2.4 PHP/8.1"));
    }

    #[test]
    fn fingerprint_defaults_to_unknown() {
        let resp = sample_response(vec![], 200, "plain");
        let profile = fingerprint(&[resp]);
        assert_eq!(profile.framework_hints, vec![FrameworkHint::Unknown]);
        assert!(!profile.waf_suspected);
    }

    #[test]
    fn fingerprint_waf_suspicion_on_403_challenge() {
        let resp = sample_response(vec![], 403, "please solve this captcha challenge");
        let profile = fingerprint(&[resp]);
        assert!(profile.waf_suspected);
    }

    #[test]
    fn demo_creds_harvested() {
        let html = r#"<ul class="demo-creds">
            <li>demo account: <code>user-a</code> / <code>pw-11</code></li>
            <li>demo account: <code>user-b</code> / <code>pw-22</code></li></ul>"#;
        assert_eq!(
            harvest_demo_creds(html),
            vec![
                ("user-a".to_string(), "pw-11".to_string()),
                ("user-b".to_string(), "pw-22".to_string())
            ]
        );
        assert!(harvest_demo_creds("<p>nothing here</p>").is_empty());
    }

    #[test]
    fn surface_dump_has_schema() {
        let ep = Endpoint::get(Url::parse("http://t/a?x=1").unwrap());
        let points = extract_points(&ep, &sample_response(vec![], 200, ""));
        let doc = surface_json(&[ep], &points);
        assert_eq!(doc["schema"], SURFACE_SCHEMA);
        assert_eq!(doc["endpoints"].as_array().unwrap().len(), 1);
        assert!(doc["points"].as_array().unwrap().len() >= 4);
    }
}
