//! Timed, rate-limited, session-aware HTTP execution with a replayable audit
//! log. Every request to the target goes through [`HttpEngine`].

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::budget::Budget;
use crate::state::{Channel, ContentKind, HttpMethod, InjectionPoint, PointKey, TraceRequest};

pub const TRACE_SCHEMA: &str = "awe-trace-v1";

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("wall budget exhausted; no further requests issued")]
    BudgetExhausted,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("request could not be constructed: {0}")]
    InvalidRequest(String),
}

impl HttpError {
    pub fn is_budget(&self) -> bool {
        matches!(self, HttpError::BudgetExhausted)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Per-host request pacing; any one-second window holds at most
    /// `rate_limit_per_s + 1` requests.
    pub rate_limit_per_s: u32,
    /// Retries on transport errors only; HTTP error statuses are signal.
    pub retries: u32,
    pub retry_backoff_ms: u64,
    pub redirect_depth: u32,
    pub request_timeout_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            rate_limit_per_s: 20,
            retries: 2,
            retry_backoff_ms: 100,
            redirect_depth: 5,
            request_timeout_ms: 10_000,
        }
    }
}

/// Immutable cookie snapshot handed to probe workers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub cookies: BTreeMap<String, String>,
}

impl Session {
    pub fn is_empty(&self) -> bool {
        self.cookies.is_empty()
    }

    pub fn cookie_header(&self) -> Option<String> {
        if self.cookies.is_empty() {
            return None;
        }
        Some(
            self.cookies
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join("; "),
        )
    }

    /// Opaque token representing this session in scan state.
    pub fn token(&self) -> String {
        self.cookie_header().unwrap_or_default()
    }

    fn absorb_set_cookie(&mut self, value: &str) {
        if let Some(pair) = value.split(';').next() {
            if let Some((k, v)) = pair.split_once('=') {
                self.cookies.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
    }
}

/// Fully specified request; `phase` tags the audit record.
#[derive(Debug, Clone)]
pub struct RequestSpec {
    pub method: HttpMethod,
    pub url: Url,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    pub content_type: Option<String>,
    pub phase: &'static str,
    pub record_cookies: bool,
    pub follow_redirects: bool,
    pub session: Option<Session>,
}

impl RequestSpec {
    pub fn get(url: Url) -> Self {
        RequestSpec {
            method: HttpMethod::Get,
            url,
            headers: Vec::new(),
            body: Vec::new(),
            content_type: None,
            phase: "other",
            record_cookies: true,
            follow_redirects: true,
            session: None,
        }
    }

    pub fn post(url: Url, body: Vec<u8>, content_type: &str) -> Self {
        RequestSpec {
            method: HttpMethod::Post,
            url,
            headers: Vec::new(),
            body,
            content_type: Some(content_type.to_string()),
            phase: "other",
            record_cookies: true,
            follow_redirects: true,
            session: None,
        }
    }

    pub fn phase(mut self, phase: &'static str) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_session(mut self, session: Session) -> Self {
        self.session = Some(session);
        self
    }

    pub fn no_cookie_recording(mut self) -> Self {
        self.record_cookies = false;
        self
    }

    /// Surface redirect responses directly (login flows read Set-Cookie off
    /// the 302 itself).
    pub fn no_redirects(mut self) -> Self {
        self.follow_redirects = false;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimedResponse {
    pub status: u16,
    /// Ordered name/value multimap, lowercase names.
    pub headers: Vec<(String, String)>,
    #[serde(with = "crate::state::b64")]
    pub body: Vec<u8>,
    /// Wall milliseconds from request start to last body byte.
    pub elapsed_ms: u64,
    /// Monotonic milliseconds since scan start.
    pub ts_ms: u64,
    /// The exact request that produced this response (final redirect hop).
    pub request: TraceRequest,
    /// The request that started the chain (differs from `request` only when
    /// redirects were followed).
    pub first_request: TraceRequest,
}

impl TimedResponse {
    pub fn body_text(&self) -> Cow<'_, str> {
        String::from_utf8_lossy(&self.body)
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        let name = name.to_lowercase();
        self.headers.iter().find(|(k, _)| *k == name).map(|(_, v)| v.as_str())
    }

    pub fn headers_all(&self, name: &str) -> Vec<&str> {
        let name = name.to_lowercase();
        self.headers.iter().filter(|(k, _)| *k == name).map(|(_, v)| v.as_str()).collect()
    }
}

/// One audit log line (`awe-trace-v1`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub phase: String,
    pub method: String,
    pub url: String,
    pub headers: Vec<(String, String)>,
    #[serde(with = "crate::state::b64")]
    pub body_b64: Vec<u8>,
    pub status: u16,
    pub resp_headers: Vec<(String, String)>,
    #[serde(with = "crate::state::b64")]
    pub resp_body_b64: Vec<u8>,
    pub elapsed_ms: u64,
    pub ts_ms: u64,
}

impl AuditRecord {
    pub fn request(&self) -> TraceRequest {
        TraceRequest {
            method: self.method.clone(),
            url: self.url.clone(),
            headers: self.headers.clone(),
            body: self.body_b64.clone(),
        }
    }
}

/// Serialize audit records as newline-delimited JSON.
pub fn export_trace(records: &[AuditRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("audit record serializes"));
        out.push('\n');
    }
    out
}

/// Robust center: median of a sample.
pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty());
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN timings"));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Median absolute deviation around a given median.
pub fn mad(samples: &[f64], med: f64) -> f64 {
    let devs: Vec<f64> = samples.iter().map(|x| (x - med).abs()).collect();
    median(&devs)
}

/// Robust timing aggregate over benign requests to one point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingBaseline {
    pub point: PointKey,
    pub median_ms: f64,
    pub mad_ms: f64,
    pub samples: u32,
}

struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn new(per_second: u32) -> Self {
        let per_second = per_second.max(1);
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / per_second as f64),
            next: Mutex::new(Instant::now()),
        }
    }

    async fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            if *next <= now {
                *next = now + self.interval;
                Duration::ZERO
            } else {
                let wait = *next - now;
                *next += self.interval;
                wait
            }
        };
        if !wait.is_zero() {
            tokio::time::sleep(wait).await;
        }
    }
}

/// The only path to the target: budget-gated, rate-limited, audit-logged.
///
/// Safe for concurrent use by probe workers; the rate limiter, audit log and
/// active session are internally synchronized.
pub struct HttpEngine {
    client: reqwest::Client,
    cfg: HttpConfig,
    budget: Arc<Budget>,
    limiter: RateLimiter,
    audit: Mutex<Vec<AuditRecord>>,
    seq: AtomicU64,
    active_session: Mutex<Session>,
}

impl HttpEngine {
    pub fn new(cfg: HttpConfig, budget: Arc<Budget>) -> Result<Self, HttpError> {
        let client = reqwest::Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .timeout(Duration::from_millis(cfg.request_timeout_ms))
            .build()
            .map_err(|e| HttpError::InvalidRequest(e.to_string()))?;
        Ok(HttpEngine {
            client,
            limiter: RateLimiter::new(cfg.rate_limit_per_s),
            cfg,
            budget,
            audit: Mutex::new(Vec::new()),
            seq: AtomicU64::new(0),
            active_session: Mutex::new(Session::default()),
        })
    }

    pub fn budget(&self) -> &Arc<Budget> {
        &self.budget
    }

    pub fn now_ms(&self) -> u64 {
        self.budget.now_ms()
    }

    pub fn session_snapshot(&self) -> Session {
        self.active_session.lock().expect("session lock").clone()
    }

    pub fn set_active_session(&self, session: Session) {
        *self.active_session.lock().expect("session lock") = session;
    }

    pub fn audit_snapshot(&self) -> Vec<AuditRecord> {
        self.audit.lock().expect("audit lock").clone()
    }

    pub fn audit_len(&self) -> usize {
        self.audit.lock().expect("audit lock").len()
    }

    /// Requests issued on injection-bearing phases (everything except recon,
    /// auth bookkeeping and verification fetches).
    pub fn injection_request_count(&self) -> usize {
        self.audit
            .lock()
            .expect("audit lock")
            .iter()
            .filter(|r| !matches!(r.phase.as_str(), "recon" | "auth" | "verify" | "replay"))
            .count()
    }

    /// Issue one request, following redirects up to the configured depth.
    /// Each hop is audit-logged; Set-Cookie headers persist into the active
    /// session unless the spec opts out.
    pub async fn send(&self, spec: RequestSpec) -> Result<TimedResponse, HttpError> {
        let mut current = spec;
        let mut depth = 0;
        let mut first: Option<TraceRequest> = None;
        loop {
            let mut resp = self.send_once(&current).await?;
            let origin = first.get_or_insert_with(|| resp.request.clone());
            resp.first_request = origin.clone();
            let redirect =
                current.follow_redirects && matches!(resp.status, 301 | 302 | 303 | 307 | 308);
            if !redirect || depth >= self.cfg.redirect_depth {
                return Ok(resp);
            }
            let location = match resp.header("location") {
                Some(l) => l.to_string(),
                None => return Ok(resp),
            };
            let next_url = current
                .url
                .join(&location)
                .map_err(|e| HttpError::InvalidRequest(format!("redirect target: {e}")))?;
            let keep_method = matches!(resp.status, 307 | 308);
            current = RequestSpec {
                method: if keep_method { current.method } else { HttpMethod::Get },
                url: next_url,
                headers: Vec::new(),
                body: if keep_method { current.body } else { Vec::new() },
                content_type: if keep_method { current.content_type } else { None },
                phase: current.phase,
                record_cookies: current.record_cookies,
                follow_redirects: current.follow_redirects,
                session: current.session,
            };
            depth += 1;
        }
    }

    async fn send_once(&self, spec: &RequestSpec) -> Result<TimedResponse, HttpError> {
        if self.budget.wall_exceeded() {
            return Err(HttpError::BudgetExhausted);
        }
        self.limiter.acquire().await;

        let mut headers = spec.headers.clone();
        let session = match &spec.session {
            Some(s) => s.clone(),
            None => self.session_snapshot(),
        };
        // Merge session cookies with any cookie header already present.
        let explicit_cookie = headers.iter().position(|(k, _)| k.eq_ignore_ascii_case("cookie"));
        if let Some(mut cookie) = session.cookie_header() {
            if let Some(idx) = explicit_cookie {
                cookie = format!("{}; {}", cookie, headers[idx].1);
                headers[idx].1 = cookie;
            } else {
                headers.push(("cookie".to_string(), cookie));
            }
        }
        if let Some(ct) = &spec.content_type {
            headers.push(("content-type".to_string(), ct.clone()));
        }

        let trace = TraceRequest {
            method: spec.method.to_string(),
            url: spec.url.to_string(),
            headers: headers.clone(),
            body: spec.body.clone(),
        };

        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.issue(spec, &headers).await {
                Ok((status, resp_headers, body, elapsed_ms)) => {
                    let ts_ms = self.budget.now_ms();
                    if spec.record_cookies {
                        let mut active = self.active_session.lock().expect("session lock");
                        for (k, v) in &resp_headers {
                            if k == "set-cookie" {
                                active.absorb_set_cookie(v);
                            }
                        }
                    }
                    let record = AuditRecord {
                        seq: self.seq.fetch_add(1, Ordering::SeqCst),
                        phase: spec.phase.to_string(),
                        method: trace.method.clone(),
                        url: trace.url.clone(),
                        headers: trace.headers.clone(),
                        body_b64: trace.body.clone(),
                        status,
                        resp_headers: resp_headers.clone(),
                        resp_body_b64: body.clone(),
                        elapsed_ms,
                        ts_ms,
                    };
                    self.audit.lock().expect("audit lock").push(record);
                    return Ok(TimedResponse {
                        status,
                        headers: resp_headers,
                        body,
                        elapsed_ms,
                        ts_ms,
                        request: trace.clone(),
                        first_request: trace,
                    });
                }
                Err(err) if attempt <= self.cfg.retries => {
                    tracing::debug!(attempt, error = %err, "transport error, retrying");
                    tokio::time::sleep(Duration::from_millis(self.cfg.retry_backoff_ms)).await;
                }
                Err(err) => {
                    return Err(HttpError::Transport { message: err, attempts: attempt });
                }
            }
        }
    }

    async fn issue(
        &self,
        spec: &RequestSpec,
        headers: &[(String, String)],
    ) -> Result<(u16, Vec<(String, String)>, Vec<u8>, u64), String> {
        let method = match spec.method {
            HttpMethod::Get => reqwest::Method::GET,
            HttpMethod::Post => reqwest::Method::POST,
        };
        let mut req = self.client.request(method, spec.url.clone());
        for (k, v) in headers {
            req = req.header(
                reqwest::header::HeaderName::from_bytes(k.as_bytes())
                    .map_err(|e| format!("header name {k:?}: {e}"))?,
                reqwest::header::HeaderValue::from_bytes(v.as_bytes())
                    .map_err(|e| format!("header value for {k:?}: {e}"))?,
            );
        }
        if !spec.body.is_empty() {
            req = req.body(spec.body.clone());
        }
        let started = Instant::now();
        let resp = req.send().await.map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let resp_headers: Vec<(String, String)> = resp
            .headers()
            .iter()
            .map(|(k, v)| (k.as_str().to_lowercase(), String::from_utf8_lossy(v.as_bytes()).into_owned()))
            .collect();
        // Timing runs to the last body byte: sleep-based payloads delay full
        // body production, not just the status line.
        let body = resp.bytes().await.map_err(|e| e.to_string())?.to_vec();
        let elapsed_ms = started.elapsed().as_millis() as u64;
        Ok((status, resp_headers, body, elapsed_ms))
    }

    /// Substitute `injected_value` into exactly the channel named by `point`;
    /// all sibling parameters carry their baseline values.
    pub async fn execute(
        &self,
        point: &InjectionPoint,
        injected_value: &[u8],
        siblings: &[InjectionPoint],
        session: Option<&Session>,
    ) -> Result<TimedResponse, HttpError> {
        let mut spec = build_request(point, injected_value, siblings)?;
        if let Some(s) = session {
            spec.session = Some(s.clone());
        }
        spec.phase = "probe";
        self.send(spec).await
    }

    pub async fn execute_tagged(
        &self,
        point: &InjectionPoint,
        injected_value: &[u8],
        siblings: &[InjectionPoint],
        session: Option<&Session>,
        phase: &'static str,
    ) -> Result<TimedResponse, HttpError> {
        let mut spec = build_request(point, injected_value, siblings)?;
        if let Some(s) = session {
            spec.session = Some(s.clone());
        }
        spec.phase = phase;
        self.send(spec).await
    }

    /// Median/MAD over `n` benign requests carrying the baseline value.
    /// Timing probes run strictly serially.
    pub async fn measure_baseline(
        &self,
        point: &InjectionPoint,
        n: u32,
        siblings: &[InjectionPoint],
    ) -> Result<TimingBaseline, HttpError> {
        if n < 3 {
            return Err(HttpError::Precondition(format!("baseline needs n >= 3, got {n}")));
        }
        let mut samples = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let resp = self
                .execute_tagged(point, point.baseline_value.as_bytes(), siblings, None, "timing")
                .await?;
            samples.push(resp.elapsed_ms as f64);
        }
        let med = median(&samples);
        Ok(TimingBaseline {
            point: point.key(),
            median_ms: med,
            mad_ms: mad(&samples, med),
            samples: n,
        })
    }

    /// Re-issue a captured request byte-for-byte (replay path).
    pub async fn replay(&self, req: &TraceRequest) -> Result<TimedResponse, HttpError> {
        let method = match req.method.as_str() {
            "GET" => HttpMethod::Get,
            "POST" => HttpMethod::Post,
            other => return Err(HttpError::InvalidRequest(format!("method {other:?}"))),
        };
        let url = Url::parse(&req.url)
            .map_err(|e| HttpError::InvalidRequest(format!("replay url: {e}")))?;
        let spec = RequestSpec {
            method,
            url,
            headers: req.headers.clone(),
            body: req.body.clone(),
            content_type: None,
            phase: "replay",
            record_cookies: false,
            follow_redirects: true,
            session: Some(Session::default()),
        };
        self.send(spec).await
    }
}

/// Percent-encode arbitrary bytes for URL and form contexts.
pub fn percent_encode_bytes(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 3);
    for &b in bytes {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' | b'_' | b'~' => {
                out.push(b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

fn build_request(
    point: &InjectionPoint,
    value: &[u8],
    siblings: &[InjectionPoint],
) -> Result<RequestSpec, HttpError> {
    let endpoint = &point.endpoint;
    let mut url = endpoint.url.clone();
    let mut headers: Vec<(String, String)> = Vec::new();
    let mut body: Vec<u8> = Vec::new();
    let mut content_type: Option<String> = None;

    match point.channel {
        Channel::Query => {
            let pairs: Vec<(String, String)> = url
                .query_pairs()
                .map(|(k, v)| (k.into_owned(), v.into_owned()))
                .collect();
            let mut query = String::new();
            let mut replaced = false;
            for (k, v) in &pairs {
                if !query.is_empty() {
                    query.push('&');
                }
                if *k == point.name && !replaced {
                    query.push_str(&percent_encode_bytes(k.as_bytes()));
                    query.push('=');
                    query.push_str(&percent_encode_bytes(value));
                    replaced = true;
                } else {
                    query.push_str(&percent_encode_bytes(k.as_bytes()));
                    query.push('=');
                    query.push_str(&percent_encode_bytes(v.as_bytes()));
                }
            }
            if !replaced {
                if !query.is_empty() {
                    query.push('&');
                }
                query.push_str(&percent_encode_bytes(point.name.as_bytes()));
                query.push('=');
                query.push_str(&percent_encode_bytes(value));
            }
            url.set_query(Some(&query));
        }
        Channel::BodyField => match endpoint.content_type {
            ContentKind::FormUrlencoded | ContentKind::Multipart => {
                let mut fields: Vec<(String, Vec<u8>)> = Vec::new();
                for sib in siblings {
                    if sib.channel == Channel::BodyField
                        && sib.endpoint.url == endpoint.url
                        && sib.endpoint.method == endpoint.method
                        && sib.name != point.name
                    {
                        fields.push((sib.name.clone(), sib.baseline_value.clone().into_bytes()));
                    }
                }
                fields.push((point.name.clone(), value.to_vec()));
                fields.sort_by(|a, b| a.0.cmp(&b.0));
                let encoded: Vec<String> = fields
                    .iter()
                    .map(|(k, v)| {
                        format!("{}={}", percent_encode_bytes(k.as_bytes()), percent_encode_bytes(v))
                    })
                    .collect();
                body = encoded.join("&").into_bytes();
                content_type = Some("application/x-www-form-urlencoded".to_string());
            }
            ContentKind::Json => {
                let template = endpoint.body_template.clone().unwrap_or_else(|| "{}".to_string());
                let mut doc: serde_json::Value = serde_json::from_str(&template)
                    .map_err(|e| HttpError::InvalidRequest(format!("json template: {e}")))?;
                if let Some(obj) = doc.as_object_mut() {
                    obj.insert(
                        point.name.clone(),
                        serde_json::Value::String(String::from_utf8_lossy(value).into_owned()),
                    );
                }
                body = serde_json::to_vec(&doc).expect("json body");
                content_type = Some("application/json".to_string());
            }
            ContentKind::Xml => {
                let template = endpoint
                    .body_template
                    .clone()
                    .ok_or_else(|| HttpError::InvalidRequest("xml endpoint lacks template".into()))?;
                let open = format!("<{}>", point.name);
                let close = format!("</{}>", point.name);
                let replaced = match (template.find(&open), template.find(&close)) {
                    (Some(a), Some(b)) if b >= a + open.len() => {
                        let mut s = String::new();
                        s.push_str(&template[..a + open.len()]);
                        s.push_str(&String::from_utf8_lossy(value));
                        s.push_str(&template[b..]);
                        s
                    }
                    _ => {
                        return Err(HttpError::InvalidRequest(format!(
                            "xml field {} not found in template",
                            point.name
                        )))
                    }
                };
                body = replaced.into_bytes();
                content_type = Some("application/xml".to_string());
            }
            ContentKind::None => {
                return Err(HttpError::InvalidRequest(
                    "body_field point on endpoint without a body".into(),
                ))
            }
        },
        Channel::Header => {
            headers.push((
                point.name.clone(),
                String::from_utf8_lossy(value).into_owned(),
            ));
        }
        Channel::Cookie => {
            headers.push((
                "cookie".to_string(),
                format!("{}={}", point.name, String::from_utf8_lossy(value)),
            ));
        }
        Channel::PathSegment => {
            let idx: usize = point.name.parse().map_err(|_| {
                HttpError::InvalidRequest(format!(
                    "path segment point name must be an index, got {:?}",
                    point.name
                ))
            })?;
            let segments: Vec<String> = url
                .path_segments()
                .map(|s| s.map(String::from).collect())
                .unwrap_or_default();
            if idx >= segments.len() {
                return Err(HttpError::InvalidRequest(format!(
                    "path segment index {idx} out of range"
                )));
            }
            let mut new_path = String::new();
            for (i, seg) in segments.iter().enumerate() {
                new_path.push('/');
                if i == idx {
                    new_path.push_str(&percent_encode_bytes(value));
                } else {
                    new_path.push_str(seg);
                }
            }
            url.set_path(&new_path);
        }
    }

    // POST endpoints with only non-body channels still need their baseline
    // body so the request shape matches the endpoint contract.
    if endpoint.method == HttpMethod::Post
        && body.is_empty()
        && point.channel != Channel::BodyField
    {
        if endpoint.content_type == ContentKind::FormUrlencoded {
            let mut fields: Vec<(String, String)> = siblings
                .iter()
                .filter(|s| {
                    s.channel == Channel::BodyField
                        && s.endpoint.url == endpoint.url
                        && s.endpoint.method == endpoint.method
                })
                .map(|s| (s.name.clone(), s.baseline_value.clone()))
                .collect();
            fields.sort();
            let encoded: Vec<String> = fields
                .iter()
                .map(|(k, v)| {
                    format!(
                        "{}={}",
                        percent_encode_bytes(k.as_bytes()),
                        percent_encode_bytes(v.as_bytes())
                    )
                })
                .collect();
            body = encoded.join("&").into_bytes();
            content_type = Some("application/x-www-form-urlencoded".to_string());
        } else if let Some(template) = &endpoint.body_template {
            body = template.clone().into_bytes();
            content_type = Some(match endpoint.content_type {
                ContentKind::Json => "application/json".to_string(),
                ContentKind::Xml => "application/xml".to_string(),
                _ => "application/octet-stream".to_string(),
            });
        }
    }

    Ok(RequestSpec {
        method: endpoint.method,
        url,
        headers,
        body,
        content_type,
        phase: "probe",
        record_cookies: true,
        follow_redirects: true,
        session: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::{Budget, BudgetLimits};
    use crate::state::Endpoint;

    fn budget() -> Arc<Budget> {
        Arc::new(Budget::new(BudgetLimits::default()))
    }

    fn engine(cfg: HttpConfig) -> HttpEngine {
        HttpEngine::new(cfg, budget()).unwrap()
    }

    #[test]
    fn median_and_mad_examples() {
        assert_eq!(median(&[20.0, 21.0, 22.0]), 21.0);
        assert_eq!(mad(&[20.0, 21.0, 22.0], 21.0), 1.0);
        // Median is outlier-robust.
        assert_eq!(median(&[10.0, 10.0, 10.0, 10.0, 500.0]), 10.0);
    }

    #[test]
    fn baseline_precondition_rejects_small_n() {
        let rt = tokio::runtime::Runtime::new().unwrap();
        let eng = engine(HttpConfig::default());
        let point = InjectionPoint {
            endpoint: Endpoint::get(Url::parse("http://127.0.0.1:1/x").unwrap()),
            channel: Channel::Query,
            name: "q".into(),
            baseline_value: "1".into(),
        };
        let err = rt.block_on(eng.measure_baseline(&point, 2, &[])).unwrap_err();
        assert!(matches!(err, HttpError::Precondition(_)));
    }

    #[test]
    fn query_substitution_replaces_only_named_param() {
        let point = InjectionPoint {
            endpoint: Endpoint::get(Url::parse("http://t/item?id=3&sort=asc").unwrap()),
            channel: Channel::Query,
            name: "id".into(),
            baseline_value: "3".into(),
        };
        let spec = build_request(&point, b"3'--", &[]).unwrap();
        assert_eq!(spec.url.as_str(), "http://t/item?id=3%27--&sort=asc");
    }

    #[test]
    fn header_channel_carries_value_verbatim() {
        let point = InjectionPoint {
            endpoint: Endpoint::get(Url::parse("http://t/x").unwrap()),
            channel: Channel::Header,
            name: "X-Test".into(),
            baseline_value: "base".into(),
        };
        let spec = build_request(&point, b"payload-value", &[]).unwrap();
        assert_eq!(spec.headers, vec![("X-Test".to_string(), "payload-value".to_string())]);
    }

    #[test]
    fn form_body_substitution_keeps_sibling_baselines() {
        let ep = Endpoint::post(
            Url::parse("http://t/login").unwrap(),
            ContentKind::FormUrlencoded,
        );
        let user = InjectionPoint {
            endpoint: ep.clone(),
            channel: Channel::BodyField,
            name: "user".into(),
            baseline_value: "alice".into(),
        };
        let pass = InjectionPoint {
            endpoint: ep,
            channel: Channel::BodyField,
            name: "pass".into(),
            baseline_value: "pw".into(),
        };
        let spec = build_request(&user, b"x' OR 1=1", &[user.clone(), pass]).unwrap();
        let body = String::from_utf8(spec.body).unwrap();
        assert!(body.contains("pass=pw"));
        assert!(body.contains("user=x%27%20OR%201%3D1"));
    }

    #[test]
    fn path_segment_substitution() {
        let point = InjectionPoint {
            endpoint: Endpoint::get(Url::parse("http://t/user/42/profile").unwrap()),
            channel: Channel::PathSegment,
            name: "1".into(),
            baseline_value: "42".into(),
        };
        let spec = build_request(&point, b"43", &[]).unwrap();
        assert_eq!(spec.url.path(), "/user/43/profile");
    }

    #[test]
    fn xml_body_field_substitution() {
        let mut ep = Endpoint::post(Url::parse("http://t/api").unwrap(), ContentKind::Xml);
        ep.body_template = Some("<order><note>hello</note></order>".into());
        let point = InjectionPoint {
            endpoint: ep,
            channel: Channel::BodyField,
            name: "note".into(),
            baseline_value: "hello".into(),
        };
        let spec = build_request(&point, b"&xxe;", &[]).unwrap();
        assert_eq!(spec.body, b"<order><note>&xxe;</note></order>");
    }

    #[test]
    fn connection_refused_is_transport_error_after_retries() {
        let rt = tokio::runtime::Runtime::new().unwrap();
        let eng = engine(HttpConfig { retries: 2, retry_backoff_ms: 10, ..Default::default() });
        let spec = RequestSpec::get(Url::parse("http://127.0.0.1:1/").unwrap());
        let err = rt.block_on(eng.send(spec)).unwrap_err();
        match err {
            HttpError::Transport { attempts, .. } => assert_eq!(attempts, 3),
            other => panic!("expected transport error, got {other:?}"),
        }
    }

    #[test]
    fn budget_exhaustion_blocks_requests() {
        let rt = tokio::runtime::Runtime::new().unwrap();
        let b = Arc::new(Budget::new(BudgetLimits { wall_limit_s: 0.0, ..Default::default() }));
        let eng = HttpEngine::new(HttpConfig::default(), b).unwrap();
        let spec = RequestSpec::get(Url::parse("http://127.0.0.1:1/").unwrap());
        let err = rt.block_on(eng.send(spec)).unwrap_err();
        assert!(err.is_budget());
    }
}
