//! Deterministic, flag-embedding vulnerable web application. Behavior is a
//! pure function of (request, manifest, seed), so every exploit path is
//! reproducible offline and every challenge doubles as a test oracle.

pub mod filters;
pub mod manifest;
pub mod sqlsim;
pub mod template_sim;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::extract::State;
use axum::http::{header, Request, Response, StatusCode};
use axum::Router;
use once_cell::sync::Lazy;
use regex::Regex;
use thiserror::Error;
use url::Url;

use crate::verifier::harness::{self, SignalKind};
use filters::{apply_filter, percent_decode, FilterId};
use manifest::{ChallengeKind, ChallengeSpec, EmbedContext, Persona};

pub use manifest::{default_manifest, EngineKind, Level, DEFAULT_MANIFEST_SEED, MANIFEST_SCHEMA};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("manifest ids must be unique; duplicate {0:?}")]
    DuplicateId(String),
    #[error("bind failed: {0}")]
    Bind(std::io::Error),
}

/// Simulated sleep cap: keeps the blind-SQLi path under a minute.
pub const SLEEP_CAP_MS: u64 = 3_000;

static MARKER_SHAPE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^AWE[0-9a-f]{8}$").expect("marker shape"));

struct Invoice {
    id: u64,
    owner: String,
    body: String,
}

struct DynamicState {
    comments: BTreeMap<String, Vec<String>>,
    accounts: BTreeMap<String, String>,
    sessions: BTreeMap<String, String>,
    invoices: Vec<Invoice>,
    visits: u64,
}

struct LabState {
    manifest: Vec<ChallengeSpec>,
    seed: u64,
    sleep_cap_ms: u64,
    internal_base: String,
    dynamic: Mutex<DynamicState>,
    fetcher: reqwest::Client,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn user_hash(user: &str) -> u64 {
    user.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

/// Fixture-account password, derived from the lab seed.
pub fn fixture_password(seed: u64, user: &str) -> String {
    format!("pw-{:08x}", splitmix64(seed ^ user_hash(user)) & 0xffff_ffff)
}

impl LabState {
    fn fresh_dynamic(manifest: &[ChallengeSpec], seed: u64) -> DynamicState {
        let mut state = DynamicState {
            comments: BTreeMap::new(),
            accounts: BTreeMap::new(),
            sessions: BTreeMap::new(),
            invoices: Vec::new(),
            visits: 0,
        };
        if let Some(idor) = manifest.iter().find(|c| matches!(c.kind, ChallengeKind::Idor { .. }))
        {
            // Two demo fixtures plus the admin row holding the flag; ids are
            // fixed so recorded exploit traces replay after a reset.
            for (id, user) in [(1u64, "admin"), (2, "user-a"), (3, "user-b")] {
                state.accounts.insert(user.to_string(), fixture_password(seed, user));
                let body = if user == "admin" {
                    format!("Account statement for admin - {}", idor.flag)
                } else {
                    format!("Invoice INV-{id} - account ref AWEOWNER-{user}")
                };
                state.invoices.push(Invoice { id, owner: user.to_string(), body });
            }
        }
        state
    }

    fn reset(&self) {
        let mut dynamic = self.dynamic.lock().expect("lab state lock");
        *dynamic = Self::fresh_dynamic(&self.manifest, self.seed);
    }

    /// Session tokens are a pure function of (seed, user), so a replayed
    /// login re-issues the very cookie recorded in the trace.
    fn token_for_user(&self, user: &str) -> String {
        format!("sess{:012x}", splitmix64(self.seed ^ user_hash(user)) & 0xffff_ffff_ffff)
    }

    fn challenge(&self, id: &str) -> Option<&ChallengeSpec> {
        self.manifest.iter().find(|c| c.id == id)
    }
}

/// A running lab plus its metadata.
pub struct LabHandle {
    pub base_url: Url,
    pub internal_url: Url,
    pub manifest: Vec<ChallengeSpec>,
    state: Arc<LabState>,
    tasks: Vec<tokio::task::JoinHandle<()>>,
}

impl LabHandle {
    /// Clear all stored state; flags and behavior are unchanged. Idempotent.
    pub fn reset(&self) {
        self.state.reset();
    }

    pub fn challenge_url(&self, id: &str) -> Url {
        self.base_url.join(&format!("/c/{id}/")).expect("challenge url")
    }

    pub fn flag_of(&self, id: &str) -> &str {
        &self.manifest.iter().find(|c| c.id == id).expect("challenge exists").flag
    }

    pub fn shutdown(&mut self) {
        for task in self.tasks.drain(..) {
            task.abort();
        }
    }
}

impl Drop for LabHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Start the lab on `bind` (ephemeral port when `None`) with the internal
/// SSRF endpoint on its own listener.
pub async fn serve(
    manifest: Vec<ChallengeSpec>,
    seed: u64,
    bind: Option<SocketAddr>,
    internal_bind: Option<SocketAddr>,
) -> Result<LabHandle, LabError> {
    let mut seen = std::collections::HashSet::new();
    for c in &manifest {
        if !seen.insert(c.id.clone()) {
            return Err(LabError::DuplicateId(c.id.clone()));
        }
    }

    let internal_addr: SocketAddr =
        internal_bind.unwrap_or_else(|| "127.0.0.1:0".parse().expect("addr"));
    let internal_listener =
        tokio::net::TcpListener::bind(internal_addr).await.map_err(LabError::Bind)?;
    let internal_actual = internal_listener.local_addr().map_err(LabError::Bind)?;

    let ssrf_flag = manifest
        .iter()
        .find(|c| matches!(c.kind, ChallengeKind::Ssrf { .. }))
        .map(|c| c.flag.clone())
        .unwrap_or_default();

    let state = Arc::new(LabState {
        dynamic: Mutex::new(LabState::fresh_dynamic(&manifest, seed)),
        manifest: manifest.clone(),
        seed,
        sleep_cap_ms: SLEEP_CAP_MS,
        internal_base: format!("http://{internal_actual}"),
        fetcher: reqwest::Client::builder()
            .timeout(Duration::from_secs(2))
            .build()
            .expect("lab fetcher"),
    });

    let internal_app = Router::new().fallback(move |req: Request<Body>| {
        let flag = ssrf_flag.clone();
        async move {
            let body = match req.uri().path() {
                "/" => "internal admin index\n".to_string(),
                "/flag" => format!("internal-only secret store\n{flag}\n"),
                "/admin" => "internal admin panel - restricted\n".to_string(),
                _ => return plain(StatusCode::NOT_FOUND, "not found"),
            };
            plain(StatusCode::OK, &body)
        }
    });

    let main_addr: SocketAddr = bind.unwrap_or_else(|| "127.0.0.1:0".parse().expect("addr"));
    let main_listener = tokio::net::TcpListener::bind(main_addr).await.map_err(LabError::Bind)?;
    let main_actual = main_listener.local_addr().map_err(LabError::Bind)?;

    let app = Router::new().fallback(dispatch).with_state(state.clone());

    let tasks = vec![
        tokio::spawn(async move {
            let _ = axum::serve(internal_listener, internal_app).await;
        }),
        tokio::spawn(async move {
            let _ = axum::serve(main_listener, app).await;
        }),
    ];

    Ok(LabHandle {
        base_url: Url::parse(&format!("http://{main_actual}/")).expect("base url"),
        internal_url: Url::parse(&format!("http://{internal_actual}/")).expect("internal url"),
        manifest,
        state,
        tasks,
    })
}

fn plain(status: StatusCode, body: &str) -> Response<Body> {
    Response::builder()
        .status(status)
        .header(header::CONTENT_TYPE, "text/plain; charset=utf-8")
        .body(Body::from(body.to_string()))
        .expect("response builds")
}

fn html_response(status: StatusCode, body: String) -> Response<Body> {
    Response::builder()
        .status(status)
        .header(header::CONTENT_TYPE, "text/html; charset=utf-8")
        .body(Body::from(body))
        .expect("response builds")
}

fn persona_headers(resp: &mut Response<Body>, persona: Persona) {
    let headers = resp.headers_mut();
    let (server, powered) = match persona {
        Persona::Php => ("Apache/2.4.57 (Debian) PHP/8.1.2", Some("PHP/8.1.2")),
        Persona::Python => ("gunicorn/20.1.0", None),
        Persona::Node => ("nginx/1.24.0", Some("Express")),
        Persona::Java => ("Apache-Coyote/1.1", Some("Servlet/3.1 JSP/2.3")),
    };
    headers.insert(header::SERVER, server.parse().expect("server header"));
    if let Some(p) = powered {
        headers.insert("x-powered-by", p.parse().expect("powered header"));
    }
}

fn persona_cookie_name(persona: Persona) -> &'static str {
    match persona {
        Persona::Php => "PHPSESSID",
        Persona::Python => "sessionid",
        Persona::Node => "connect.sid",
        Persona::Java => "JSESSIONID",
    }
}

fn parse_query(raw: &str) -> Vec<(String, String)> {
    url::form_urlencoded::parse(raw.as_bytes())
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect()
}

fn param<'a>(pairs: &'a [(String, String)], name: &str) -> Option<&'a str> {
    pairs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
}

fn cookie_value(req_headers: &axum::http::HeaderMap, name: &str) -> Option<String> {
    let raw = req_headers.get(header::COOKIE)?.to_str().ok()?;
    for pair in raw.split(';') {
        if let Some((k, v)) = pair.split_once('=') {
            if k.trim() == name {
                return Some(v.trim().to_string());
            }
        }
    }
    None
}

/// The XSS flag gate: a challenge reveals its flag exactly when the rendered
/// page would produce an execution signal in the harness.
fn xss_exploited(page_without_flag: &str) -> bool {
    harness::evaluate_page(page_without_flag).iter().any(|s| match s.kind {
        SignalKind::HookCallback | SignalKind::DialogTriggered => true,
        SignalKind::DomMutation => MARKER_SHAPE.is_match(&s.marker),
    })
}

fn shell_frame(title: &str, inner: &str) -> String {
    format!(
        "<html><head><title>{title}</title></head><body><h1>{title}</h1>{inner}\
         <p class=\"nav\"><a href=\"/\">lab index</a></p></body></html>"
    )
}

async fn dispatch(State(state): State<Arc<LabState>>, req: Request<Body>) -> Response<Body> {
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let raw_query = req.uri().query().unwrap_or("").to_string();
    let req_headers = req.headers().clone();
    let body_bytes = axum::body::to_bytes(req.into_body(), 1 << 20).await.unwrap_or_default();

    if path == "/" {
        let mut items = String::new();
        for c in &state.manifest {
            items.push_str(&format!("<li><a href=\"/c/{0}/\">{0}</a></li>", c.id));
        }
        return html_response(
            StatusCode::OK,
            shell_frame("Vulnerable training lab", &format!("<ul>{items}</ul>")),
        );
    }
    if path == "/_lab/manifest" {
        let doc = serde_json::json!({
            "schema": MANIFEST_SCHEMA,
            "challenges": state.manifest.iter().map(|c| c.redacted()).collect::<Vec<_>>(),
        });
        return Response::builder()
            .status(StatusCode::OK)
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(doc.to_string()))
            .expect("manifest response");
    }
    if path == "/_lab/reset" {
        state.reset();
        return plain(StatusCode::OK, "reset-ok");
    }

    let Some(rest) = path.strip_prefix("/c/") else {
        return plain(StatusCode::NOT_FOUND, "not found");
    };
    let (cid, sub) = match rest.split_once('/') {
        Some((cid, sub)) => (cid.to_string(), format!("/{sub}")),
        None => (rest.to_string(), String::new()),
    };
    let Some(challenge) = state.challenge(&cid).cloned() else {
        return plain(StatusCode::NOT_FOUND, "no such challenge");
    };
    if sub.is_empty() {
        // Canonicalize /c/<id> to /c/<id>/ so relative links resolve.
        return Response::builder()
            .status(StatusCode::MOVED_PERMANENTLY)
            .header(header::LOCATION, format!("/c/{cid}/"))
            .body(Body::empty())
            .expect("redirect");
    }

    let query = parse_query(&raw_query);
    let mut resp = challenge_response(
        &state,
        &challenge,
        method.as_str(),
        &sub,
        &query,
        &req_headers,
        &body_bytes,
    )
    .await;
    persona_headers(&mut resp, challenge.persona);
    // Session cookie hint on the challenge index page only.
    if sub == "/" && !resp.headers().contains_key(header::SET_COOKIE) {
        let token = format!("{:016x}", splitmix64(state.seed ^ cid.len() as u64));
        let cookie = format!("{}={token}; Path=/c/{cid}/", persona_cookie_name(challenge.persona));
        resp.headers_mut()
            .insert(header::SET_COOKIE, cookie.parse().expect("cookie header"));
    }
    resp
}

#[allow(clippy::too_many_arguments)]
async fn challenge_response(
    state: &Arc<LabState>,
    challenge: &ChallengeSpec,
    method: &str,
    sub: &str,
    query: &[(String, String)],
    req_headers: &axum::http::HeaderMap,
    body: &[u8],
) -> Response<Body> {
    match &challenge.kind {
        ChallengeKind::XssReflected { context, filter } => {
            xss_reflected(challenge, *context, *filter, sub, query)
        }
        ChallengeKind::XssStored { filter } => {
            xss_stored(state, challenge, *filter, method, sub, body)
        }
        ChallengeKind::SqliError => sqli_item(challenge, sub, query, true),
        ChallengeKind::SqliBoolean => sqli_item(challenge, sub, query, false),
        ChallengeKind::SqliBlindTime { injectable } => {
            sqli_blind(state, challenge, *injectable, sub, query).await
        }
        ChallengeKind::Ssti { engine } => ssti(challenge, *engine, sub, query),
        ChallengeKind::Cmdi { blind, sanitized } => {
            cmdi(state, challenge, *blind, *sanitized, sub, query).await
        }
        ChallengeKind::Lfi { filter } => lfi(challenge, *filter, sub, query),
        ChallengeKind::Xxe { entities_enabled } => {
            xxe(challenge, *entities_enabled, method, sub, body)
        }
        ChallengeKind::Ssrf { allowlist } => ssrf(state, challenge, *allowlist, sub, query).await,
        ChallengeKind::Idor { enforce_authz } => {
            idor(state, challenge, *enforce_authz, method, sub, query, req_headers, body)
        }
        ChallengeKind::NoisyPage => noisy_page(state, challenge, sub),
    }
}

fn noisy_page(state: &Arc<LabState>, challenge: &ChallengeSpec, sub: &str) -> Response<Body> {
    match sub {
        "/" => html_response(
            StatusCode::OK,
            shell_frame(&challenge.id, "<p>Status board. <a href=\"item?id=1\">item 1</a></p>"),
        ),
        "/item" => {
            let visits = {
                let mut dynamic = state.dynamic.lock().expect("lab state lock");
                dynamic.visits += 1;
                dynamic.visits
            };
            html_response(
                StatusCode::OK,
                shell_frame(&challenge.id, &format!("<p>Item page. visits: {visits}</p>")),
            )
        }
        _ => plain(StatusCode::NOT_FOUND, "not found"),
    }
}

fn with_flag_gate(challenge: &ChallengeSpec, page: String) -> String {
    if xss_exploited(&page) {
        page.replace(
            "</body>",
            &format!("<div class=\"lab-flag\">{}</div></body>", challenge.flag),
        )
    } else {
        page
    }
}

fn xss_reflected(
    challenge: &ChallengeSpec,
    context: EmbedContext,
    filter: FilterId,
    sub: &str,
    query: &[(String, String)],
) -> Response<Body> {
    match sub {
        "/" => html_response(
            StatusCode::OK,
            shell_frame(
                &challenge.id,
                "<p>Echo service. <a href=\"echo?q=hello\">try it</a></p>",
            ),
        ),
        "/echo" => {
            let value = param(query, "q").unwrap_or("");
            let filtered = apply_filter(filter, value);
            let inner = match context {
                EmbedContext::RawHtml => {
                    format!("<div class=\"out\">{filtered}</div>")
                }
                EmbedContext::AttrDouble => format!(
                    "<form action=\"echo\"><input type=\"text\" name=\"q\" value=\"{filtered}\">\
                     <button>search</button></form>"
                ),
                EmbedContext::JsSingle => format!(
                    "<script>var q = '{filtered}';document.title = q;</script>\
                     <div class=\"out\">query recorded</div>"
                ),
            };
            let page = shell_frame(&challenge.id, &inner);
            html_response(StatusCode::OK, with_flag_gate(challenge, page))
        }
        _ => plain(StatusCode::NOT_FOUND, "not found"),
    }
}

fn xss_stored(
    state: &Arc<LabState>,
    challenge: &ChallengeSpec,
    filter: FilterId,
    method: &str,
    sub: &str,
    body: &[u8],
) -> Response<Body> {
    match (method, sub) {
        ("GET", "/") => html_response(
            StatusCode::OK,
            shell_frame(
                &challenge.id,
                "<form action=\"comment\" method=\"post\">\
                 <textarea name=\"comment\">nice post</textarea>\
                 <button>add comment</button></form>\
                 <p><a href=\"view\">view comments</a></p>",
            ),
        ),
        ("POST", "/comment") => {
            let pairs = parse_query(&String::from_utf8_lossy(body));
            let comment = param(&pairs, "comment").unwrap_or("").to_string();
            let filtered = apply_filter(filter, &comment);
            {
                let mut dynamic = state.dynamic.lock().expect("lab state lock");
                dynamic.comments.entry(challenge.id.clone()).or_default().push(filtered);
            }
            Response::builder()
                .status(StatusCode::FOUND)
                .header(header::LOCATION, format!("/c/{}/view", challenge.id))
                .body(Body::empty())
                .expect("redirect")
        }
        ("GET", "/view") => {
            let comments = {
                let dynamic = state.dynamic.lock().expect("lab state lock");
                dynamic.comments.get(&challenge.id).cloned().unwrap_or_default()
            };
            let mut inner = String::from("<div class=\"comments\">");
            for c in &comments {
                inner.push_str(&format!("<div class=\"comment\">{c}</div>"));
            }
            inner.push_str("</div>");
            let page = shell_frame(&challenge.id, &inner);
            html_response(StatusCode::OK, with_flag_gate(challenge, page))
        }
        _ => plain(StatusCode::NOT_FOUND, "not found"),
    }
}

fn sqli_item(
    challenge: &ChallengeSpec,
    sub: &str,
    query: &[(String, String)],
    errors_visible: bool,
) -> Response<Body> {
    let baseline_id = if errors_visible { "1" } else { "7" };
    match sub {
        "/" => html_response(
            StatusCode::OK,
            shell_frame(
                &challenge.id,
                &format!("<p>Catalog. <a href=\"item?id={baseline_id}\">item {baseline_id}</a></p>"),
            ),
        ),
        "/item" => {
            let id = param(query, "id").unwrap_or("");
            let outcome = sqlsim::eval_item_query(id, &["1", "2"]);
            let page = match outcome {
                sqlsim::SqlOutcome::SyntaxError => {
                    if errors_visible {
                        let err = sqlsim::syntax_error_body(challenge.persona);
                        return html_response(
                            StatusCode::INTERNAL_SERVER_ERROR,
                            shell_frame("Database error", &format!("<pre>{err}</pre>")),
                        );
                    }
                    shell_frame(&challenge.id, "<p>No results found.</p>")
                }
                sqlsim::SqlOutcome::AllRows => shell_frame(
                    &challenge.id,
                    &format!(
                        "<ul><li>Item 1: Widget</li><li>Item 2: Gadget</li>\
                         <li>Item 99: {}</li></ul>",
                        challenge.flag
                    ),
                ),
                sqlsim::SqlOutcome::Row(id) => {
                    let name = if id == "1" { "Widget" } else { "Gadget" };
                    shell_frame(&challenge.id, &format!("<p>Item {id}: {name}</p>"))
                }
                sqlsim::SqlOutcome::NoRow => shell_frame(&challenge.id, "<p>No results found.</p>"),
            };
            html_response(StatusCode::OK, page)
        }
        _ => plain(StatusCode::NOT_FOUND, "not found"),
    }
}

async fn sqli_blind(
    state: &Arc<LabState>,
    challenge: &ChallengeSpec,
    injectable: bool,
    sub: &str,
    query: &[(String, String)],
) -> Response<Body> {
    match sub {
        "/" => html_response(
            StatusCode::OK,
            shell_frame(
                &challenge.id,
                "<p>Inventory lookup. <a href=\"item?id=1\">item 1</a></p>",
            ),
        ),
        "/item" => {
            let id = param(query, "id").unwrap_or("");
            if injectable {
                let secret = challenge.secret.as_deref().unwrap_or("");
                let delay = sqlsim::blind_delay_ms(id, secret, state.sleep_cap_ms);
                if delay > 0 {
                    tokio::time::sleep(Duration::from_millis(delay)).await;
                }
                if !secret.is_empty() && id == secret {
                    return html_response(
                        StatusCode::OK,
                        shell_frame(&challenge.id, &format!("<p>Vault item: {}</p>", challenge.flag)),
                    );
                }
            }
            html_response(StatusCode::OK, shell_frame(&challenge.id, "<p>Lookup complete.</p>"))
        }
        _ => plain(StatusCode::NOT_FOUND, "not found"),
    }
}

fn ssti(
    challenge: &ChallengeSpec,
    engine: EngineKind,
    sub: &str,
    query: &[(String, String)],
) -> Response<Body> {
    match sub {
        "/" => html_response(
            StatusCode::OK,
            shell_frame(
                &challenge.id,
                "<p>Greeting card generator. <a href=\"greet?name=world\">greet</a></p>",
            ),
        ),
        "/greet" => {
            let name = param(query, "name").unwrap_or("world");
            let rendered = template_sim::render(engine, name, &challenge.flag);
            // Output is HTML-encoded: this challenge is template injection,
            // not XSS.
            let encoded = apply_filter(FilterId::HtmlEncodeAll, &rendered);
            html_response(
                StatusCode::OK,
                shell_frame(&challenge.id, &format!("<p>Hello {encoded}</p>")),
            )
        }
        _ => plain(StatusCode::NOT_FOUND, "not found"),
    }
}

async fn cmdi(
    state: &Arc<LabState>,
    challenge: &ChallengeSpec,
    blind: bool,
    sanitized: bool,
    sub: &str,
    query: &[(String, String)],
) -> Response<Body> {
    match sub {
        "/" => html_response(
            StatusCode::OK,
            shell_frame(
                &challenge.id,
                "<p>Connectivity checker. <a href=\"ping?host=example.com\">ping example.com</a></p>",
            ),
        ),
        "/ping" => {
            let raw = param(query, "host").unwrap_or("");
            let input = if sanitized {
                raw.replace([';', '|', '&', '$', '(', ')', '`', '\n'], "")
            } else {
                raw.to_string()
            };
            let (host, command) = split_shell(&input);
            let mut output = format!("PING {host} (10.0.0.7): 3 packets, 3 received");
            let mut delay_ms = 0u64;
            if let Some(cmd) = command {
                let (out, delay) = simulate_command(&cmd, &challenge.flag, state.sleep_cap_ms);
                delay_ms = delay;
                if !blind && !out.is_empty() {
                    output.push('\n');
                    output.push_str(&out);
                }
            }
            if delay_ms > 0 {
                tokio::time::sleep(Duration::from_millis(delay_ms)).await;
            }
            // Output is HTML-encoded: this challenge is command injection,
            // not XSS.
            let encoded = apply_filter(FilterId::HtmlEncodeAll, &output);
            html_response(
                StatusCode::OK,
                shell_frame(&challenge.id, &format!("<pre>{encoded}</pre>")),
            )
        }
        _ => plain(StatusCode::NOT_FOUND, "not found"),
    }
}

/// Split a shell-style input at the first command separator.
fn split_shell(input: &str) -> (String, Option<String>) {
    if let (Some(start), Some(end)) = (input.find("$("), input.rfind(')')) {
        if end > start + 2 {
            return (input[..start].trim().to_string(), Some(input[start + 2..end].to_string()));
        }
    }
    for sep in ["&&", ";", "|", "\n"] {
        if let Some(idx) = input.find(sep) {
            return (
                input[..idx].trim().to_string(),
                Some(input[idx + sep.len()..].trim().to_string()),
            );
        }
    }
    (input.trim().to_string(), None)
}

fn simulate_command(cmd: &str, flag: &str, cap_ms: u64) -> (String, u64) {
    let mut parts = cmd.split_whitespace();
    match parts.next() {
        // Shell quote removal: empty quote pairs vanish from echoed words.
        Some("echo") => (
            parts.collect::<Vec<_>>().join(" ").replace("''", "").replace("\"\"", ""),
            0,
        ),
        Some("cat") => match parts.next() {
            Some("/flag" | "/flag.txt" | "flag.txt") => (flag.to_string(), 0),
            Some("/etc/passwd") => ("root:x:0:0:root:/root:/bin/bash".to_string(), 0),
            Some(other) => (format!("cat: {other}: No such file or directory"), 0),
            None => (String::new(), 0),
        },
        Some("sleep") => {
            let seconds: f64 = parts.next().and_then(|s| s.parse().ok()).unwrap_or(0.0);
            (String::new(), ((seconds * 1000.0) as u64).min(cap_ms))
        }
        Some("id") => ("uid=33(www-data) gid=33(www-data)".to_string(), 0),
        _ => (String::new(), 0),
    }
}

fn lfi(
    challenge: &ChallengeSpec,
    filter: FilterId,
    sub: &str,
    query: &[(String, String)],
) -> Response<Body> {
    match sub {
        "/" => html_response(
            StatusCode::OK,
            shell_frame(
                &challenge.id,
                "<p>Document viewer. <a href=\"page?file=about.txt\">about</a></p>",
            ),
        ),
        "/page" => {
            let raw = param(query, "file").unwrap_or("");
            let filtered = apply_filter(filter, raw);
            // Decode-after-sanitize: the filter sees literal text, the
            // resolver sees the decoded path.
            let decoded = percent_decode(&filtered);
            match resolve_virtual(&decoded, &challenge.flag) {
                Some(content) => {
                    let encoded = apply_filter(FilterId::HtmlEncodeAll, &content);
                    html_response(
                        StatusCode::OK,
                        shell_frame(&challenge.id, &format!("<pre>{encoded}</pre>")),
                    )
                }
                None => html_response(
                    StatusCode::NOT_FOUND,
                    shell_frame(&challenge.id, "<p>file not found</p>"),
                ),
            }
        }
        _ => plain(StatusCode::NOT_FOUND, "not found"),
    }
}

/// Virtual filesystem rooted at `/`, with the served directory three levels
/// deep. Sentinels live at the root.
fn resolve_virtual(path: &str, flag: &str) -> Option<String> {
    let mut segments: Vec<&str> = vec!["srv", "app", "files"];
    if path.starts_with('/') {
        segments.clear();
    }
    for seg in path.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                segments.pop();
            }
            s => segments.push(s),
        }
    }
    let resolved = format!("/{}", segments.join("/"));
    match resolved.as_str() {
        "/srv/app/files/about.txt" => Some("About this demo application.".to_string()),
        "/srv/app/files/notes.txt" => Some("nothing to see here".to_string()),
        "/etc/passwd" => Some(
            "root:x:0:0:root:/root:/bin/bash\ndaemon:x:1:1:daemon:/usr/sbin:/usr/sbin/nologin"
                .to_string(),
        ),
        "/flag.txt" => Some(format!("{flag}\n")),
        _ => None,
    }
}

const XXE_TEMPLATE: &str =
    "<?xml version=\"1.0\"?><order><item>widget</item><note>hello</note></order>";

static ENTITY_DECL: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r#"<!ENTITY\s+(\w+)\s+SYSTEM\s+"([^"]+)"\s*>"#).expect("entity decl")
});
static NOTE_FIELD: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?s)<note>(.*?)</note>").expect("note field"));

fn xxe(
    challenge: &ChallengeSpec,
    entities_enabled: bool,
    method: &str,
    sub: &str,
    body: &[u8],
) -> Response<Body> {
    match (method, sub) {
        ("GET", "/") => html_response(
            StatusCode::OK,
            shell_frame(
                &challenge.id,
                &format!(
                    "<p>Order import API.</p>\
                     <form action=\"upload\" method=\"post\" enctype=\"application/xml\">\
                     <textarea name=\"xml\">{}</textarea>\
                     <button>submit order</button></form>",
                    apply_filter(FilterId::HtmlEncodeAll, XXE_TEMPLATE)
                ),
            ),
        ),
        ("POST", "/upload") => {
            let text = String::from_utf8_lossy(body).into_owned();
            if !text.trim_start().starts_with('<') {
                return plain(StatusCode::BAD_REQUEST, "xml parse error: no document");
            }
            let mut doc = text.clone();
            if entities_enabled {
                let decls: Vec<(String, String)> = ENTITY_DECL
                    .captures_iter(&text)
                    .map(|c| (c[1].to_string(), c[2].to_string()))
                    .collect();
                for (name, uri) in decls {
                    let resolved = resolve_entity(&uri, &challenge.flag);
                    doc = doc.replace(&format!("&{name};"), &resolved);
                }
            }
            let note = match NOTE_FIELD.captures(&doc) {
                Some(c) => c[1].to_string(),
                None => return plain(StatusCode::BAD_REQUEST, "xml parse error: missing note"),
            };
            Response::builder()
                .status(StatusCode::OK)
                .header(header::CONTENT_TYPE, "application/xml")
                .body(Body::from(format!(
                    "<?xml version=\"1.0\"?><result><status>ok</status><note>{note}</note></result>"
                )))
                .expect("xxe response")
        }
        _ => plain(StatusCode::NOT_FOUND, "not found"),
    }
}

fn resolve_entity(uri: &str, flag: &str) -> String {
    match uri {
        "file:///flag.txt" => flag.to_string(),
        "file:///etc/passwd" => "root:x:0:0:root:/root:/bin/bash".to_string(),
        _ => String::new(),
    }
}

async fn ssrf(
    state: &Arc<LabState>,
    challenge: &ChallengeSpec,
    allowlist: bool,
    sub: &str,
    query: &[(String, String)],
) -> Response<Body> {
    match sub {
        "/" => html_response(
            StatusCode::OK,
            shell_frame(
                &challenge.id,
                "<p>Remote widget preview. \
                 <a href=\"fetch?url=http%3A%2F%2Fexample.com%2Fwidget\">preview example.com</a></p>",
            ),
        ),
        "/fetch" => {
            let raw = param(query, "url").unwrap_or("");
            let Ok(target) = Url::parse(raw) else {
                return html_response(
                    StatusCode::OK,
                    shell_frame(&challenge.id, "<p>invalid url</p>"),
                );
            };
            if allowlist {
                let ok = target.host_str() == Some("allowed.example");
                let msg = if ok {
                    "<pre>Fetched: allowed resource</pre>"
                } else {
                    "<p>URL not in allowlist</p>"
                };
                return html_response(StatusCode::OK, shell_frame(&challenge.id, msg));
            }
            let body = match target.host_str() {
                Some("example.com") => "Fetched: <html>Example widget</html>".to_string(),
                Some("127.0.0.1" | "localhost") => {
                    // Port 80 (or no port) aliases the internal-only service;
                    // explicit ports are fetched as given.
                    let fetch_url = match target.port() {
                        Some(p) => format!("http://127.0.0.1:{p}{}", target.path()),
                        None => format!(
                            "{}{}",
                            state.internal_base.trim_end_matches('/'),
                            target.path()
                        ),
                    };
                    match state.fetcher.get(&fetch_url).send().await {
                        Ok(resp) => match resp.text().await {
                            Ok(text) => format!("Fetched: {text}"),
                            Err(_) => "fetch failed: read error".to_string(),
                        },
                        Err(_) => "fetch failed: connection error".to_string(),
                    }
                }
                _ => "egress blocked by policy".to_string(),
            };
            html_response(
                StatusCode::OK,
                shell_frame(&challenge.id, &format!("<pre>{body}</pre>")),
            )
        }
        _ => plain(StatusCode::NOT_FOUND, "not found"),
    }
}

#[allow(clippy::too_many_arguments)]
fn idor(
    state: &Arc<LabState>,
    challenge: &ChallengeSpec,
    enforce_authz: bool,
    method: &str,
    sub: &str,
    _query: &[(String, String)],
    req_headers: &axum::http::HeaderMap,
    body: &[u8],
) -> Response<Body> {
    let session_user = cookie_value(req_headers, "idor_session").and_then(|token| {
        let dynamic = state.dynamic.lock().expect("lab state lock");
        dynamic.sessions.get(&token).cloned()
    });

    match (method, sub) {
        ("GET", "/") => {
            let creds: String = ["user-a", "user-b"]
                .iter()
                .map(|u| {
                    format!(
                        "<li>demo account: <code>{u}</code> / <code>{}</code></li>",
                        fixture_password(state.seed, u)
                    )
                })
                .collect();
            html_response(
                StatusCode::OK,
                shell_frame(
                    &challenge.id,
                    &format!(
                        "<p>Billing portal.</p>\
                         <form action=\"register\" method=\"post\">\
                         <input name=\"user\" value=\"newuser\"><input name=\"pass\" value=\"newpass\" type=\"password\">\
                         <button>register</button></form>\
                         <form action=\"login\" method=\"post\">\
                         <input name=\"user\" value=\"user\"><input name=\"pass\" value=\"pass\" type=\"password\">\
                         <button>log in</button></form>\
                         <ul class=\"demo-creds\">{creds}</ul>\
                         <p><a href=\"mine\">my invoices</a></p>"
                    ),
                ),
            )
        }
        ("POST", "/register") => {
            let pairs = parse_query(&String::from_utf8_lossy(body));
            let user = param(&pairs, "user").unwrap_or("").to_string();
            let pass = param(&pairs, "pass").unwrap_or("").to_string();
            if user.is_empty() || pass.is_empty() {
                return plain(StatusCode::BAD_REQUEST, "user and pass required");
            }
            let mut dynamic = state.dynamic.lock().expect("lab state lock");
            if dynamic.accounts.contains_key(&user) {
                return plain(StatusCode::BAD_REQUEST, "user exists");
            }
            dynamic.accounts.insert(user.clone(), pass);
            let invoice_id = dynamic.invoices.iter().map(|i| i.id).max().unwrap_or(0) + 1;
            dynamic.invoices.push(Invoice {
                id: invoice_id,
                owner: user.clone(),
                body: format!("Invoice INV-{invoice_id} - account ref AWEOWNER-{user}"),
            });
            let token = state.token_for_user(&user);
            dynamic.sessions.insert(token.clone(), user);
            drop(dynamic);
            Response::builder()
                .status(StatusCode::FOUND)
                .header(header::LOCATION, format!("/c/{}/mine", challenge.id))
                .header(
                    header::SET_COOKIE,
                    format!("idor_session={token}; Path=/c/{}/", challenge.id),
                )
                .body(Body::empty())
                .expect("register redirect")
        }
        ("POST", "/login") => {
            let pairs = parse_query(&String::from_utf8_lossy(body));
            let user = param(&pairs, "user").unwrap_or("").to_string();
            let pass = param(&pairs, "pass").unwrap_or("").to_string();
            let mut dynamic = state.dynamic.lock().expect("lab state lock");
            if dynamic.accounts.get(&user) != Some(&pass) {
                return html_response(
                    StatusCode::OK,
                    shell_frame(&challenge.id, "<p>login failed</p>"),
                );
            }
            let token = state.token_for_user(&user);
            dynamic.sessions.insert(token.clone(), user);
            drop(dynamic);
            Response::builder()
                .status(StatusCode::FOUND)
                .header(header::LOCATION, format!("/c/{}/mine", challenge.id))
                .header(
                    header::SET_COOKIE,
                    format!("idor_session={token}; Path=/c/{}/", challenge.id),
                )
                .body(Body::empty())
                .expect("login redirect")
        }
        ("GET", "/mine") => {
            let Some(user) = session_user else {
                return plain(StatusCode::UNAUTHORIZED, "authentication required");
            };
            let dynamic = state.dynamic.lock().expect("lab state lock");
            let mut items = String::new();
            for inv in dynamic.invoices.iter().filter(|i| i.owner == user) {
                items.push_str(&format!(
                    "<li><a href=\"invoice/{0}\">invoice/{0}</a></li>",
                    inv.id
                ));
            }
            html_response(
                StatusCode::OK,
                shell_frame(
                    &challenge.id,
                    &format!("<p>Invoices for {user}:</p><ul>{items}</ul>"),
                ),
            )
        }
        ("GET", _) if sub.starts_with("/invoice/") => {
            let Some(user) = session_user else {
                return plain(StatusCode::UNAUTHORIZED, "authentication required");
            };
            let id: u64 = match sub.trim_start_matches("/invoice/").parse() {
                Ok(v) => v,
                Err(_) => return plain(StatusCode::BAD_REQUEST, "bad invoice id"),
            };
            let dynamic = state.dynamic.lock().expect("lab state lock");
            let Some(inv) = dynamic.invoices.iter().find(|i| i.id == id) else {
                return plain(StatusCode::NOT_FOUND, "no such invoice");
            };
            if enforce_authz && inv.owner != user {
                return plain(StatusCode::FORBIDDEN, "Forbidden");
            }
            html_response(
                StatusCode::OK,
                shell_frame(
                    &challenge.id,
                    &format!("<p>owner: {}</p><pre>{}</pre>", inv.owner, inv.body),
                ),
            )
        }
        _ => plain(StatusCode::NOT_FOUND, "not found"),
    }
}
