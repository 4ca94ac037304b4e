//! Domain types and the global exploitation context shared by every layer.

use std::collections::HashSet;
use std::fmt;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

pub const STATE_SCHEMA: &str = "awe-state-v1";

#[derive(Debug, Error)]
pub enum StateError {
    #[error("injection point not registered in surface: {0}")]
    UnknownPoint(String),
    #[error("finding rejected: evidence missing or empty request trace")]
    MissingEvidence,
    #[error("finding rejected: no verified attempt for {0}")]
    AttemptNotVerified(String),
    #[error("auth may only upgrade anonymous -> authenticated")]
    AuthDowngrade,
    #[error("state document is not {STATE_SCHEMA}: found {0:?}")]
    SchemaMismatch(Option<String>),
    #[error("state deserialization: {0}")]
    Decode(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HttpMethod::Get => write!(f, "GET"),
            HttpMethod::Post => write!(f, "POST"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentKind {
    FormUrlencoded,
    Multipart,
    Json,
    Xml,
    None,
}

/// A parameterized HTTP endpoint on the target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub url: Url,
    pub method: HttpMethod,
    pub content_type: ContentKind,
    /// Sample body for structured (json/xml) endpoints; field substitution
    /// rewrites the named field inside this template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_template: Option<String>,
}

impl Endpoint {
    pub fn get(url: Url) -> Self {
        Endpoint {
            url,
            method: HttpMethod::Get,
            content_type: ContentKind::None,
            body_template: None,
        }
    }

    pub fn post(url: Url, content_type: ContentKind) -> Self {
        Endpoint { url, method: HttpMethod::Post, content_type, body_template: None }
    }
}

/// Input channel an attacker-controlled value travels through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Query,
    BodyField,
    Header,
    Cookie,
    PathSegment,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Channel::Query => "query",
            Channel::BodyField => "body_field",
            Channel::Header => "header",
            Channel::Cookie => "cookie",
            Channel::PathSegment => "path_segment",
        };
        f.write_str(s)
    }
}

/// One attacker-controlled input channel on an endpoint.
///
/// `(endpoint, channel, name)` is unique within a [`ScanState`]; the baseline
/// value is recorded before any mutation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InjectionPoint {
    pub endpoint: Endpoint,
    pub channel: Channel,
    pub name: String,
    pub baseline_value: String,
}

impl InjectionPoint {
    pub fn key(&self) -> PointKey {
        PointKey {
            method: self.endpoint.method,
            url: self.endpoint.url.to_string(),
            channel: self.channel,
            name: self.name.clone(),
        }
    }
}

/// Stable identity of an injection point, used for dedup and attempt history.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PointKey {
    pub method: HttpMethod,
    pub url: String,
    pub channel: Channel,
    pub name: String,
}

impl fmt::Display for PointKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} [{}:{}]", self.method, self.url, self.channel, self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VulnClass {
    Xss,
    SqliError,
    SqliBoolean,
    SqliBlindTime,
    Ssti,
    Cmdi,
    Lfi,
    Xxe,
    Ssrf,
    Idor,
}

impl VulnClass {
    pub const ALL: [VulnClass; 10] = [
        VulnClass::Xss,
        VulnClass::SqliError,
        VulnClass::SqliBoolean,
        VulnClass::SqliBlindTime,
        VulnClass::Ssti,
        VulnClass::Cmdi,
        VulnClass::Lfi,
        VulnClass::Xxe,
        VulnClass::Ssrf,
        VulnClass::Idor,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            VulnClass::Xss => "xss",
            VulnClass::SqliError => "sqli_error",
            VulnClass::SqliBoolean => "sqli_boolean",
            VulnClass::SqliBlindTime => "sqli_blind_time",
            VulnClass::Ssti => "ssti",
            VulnClass::Cmdi => "cmdi",
            VulnClass::Lfi => "lfi",
            VulnClass::Xxe => "xxe",
            VulnClass::Ssrf => "ssrf",
            VulnClass::Idor => "idor",
        }
    }

    pub fn parse(s: &str) -> Option<VulnClass> {
        Self::ALL.iter().copied().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for VulnClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    NoSignal,
    PartialSignal,
    Blocked,
    Verified,
}

/// One payload sent through one injection point, with its observed outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PayloadAttempt {
    pub point: PointKey,
    pub vuln_class: VulnClass,
    /// Exact byte string sent, kept byte-exact.
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
    pub outcome: AttemptOutcome,
    pub response_digest: String,
    /// Milliseconds since scan start (monotonic within a scan).
    pub sent_at_ms: u64,
}

/// A raw request captured for replay; headers keep insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRequest {
    pub method: String,
    pub url: String,
    pub headers: Vec<(String, String)>,
    #[serde(with = "b64")]
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    ExecutionObserved,
    TimingDifferential,
    DifferentialResponse,
    ExtractedData,
    FlagCaptured,
}

/// Kind-specific proof payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvidenceDetail {
    ExecutionObserved { marker: String, signal: String },
    TimingDifferential { baseline_ms: u64, injected_ms: u64, threshold_ms: u64 },
    DifferentialResponse { summary: String, matched_digest: String, differing_digest: String },
    ExtractedData {
        #[serde(with = "b64")]
        data: Vec<u8>,
    },
    FlagCaptured { flag: String },
}

impl EvidenceDetail {
    pub fn kind(&self) -> EvidenceKind {
        match self {
            EvidenceDetail::ExecutionObserved { .. } => EvidenceKind::ExecutionObserved,
            EvidenceDetail::TimingDifferential { .. } => EvidenceKind::TimingDifferential,
            EvidenceDetail::DifferentialResponse { .. } => EvidenceKind::DifferentialResponse,
            EvidenceDetail::ExtractedData { .. } => EvidenceKind::ExtractedData,
            EvidenceDetail::FlagCaptured { .. } => EvidenceKind::FlagCaptured,
        }
    }
}

/// Replayable proof: the detail plus the exact requests that produce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evidence {
    pub detail: EvidenceDetail,
    pub request_trace: Vec<TraceRequest>,
}

impl Evidence {
    pub fn kind(&self) -> EvidenceKind {
        self.detail.kind()
    }
}

/// A verified vulnerability with concrete evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Finding {
    pub vuln_class: VulnClass,
    pub point: PointKey,
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
    pub evidence: Evidence,
    pub solved_flag: Option<String>,
    pub elapsed_s: f64,
    pub tokens_spent: u64,
    /// Exploit-phase attempts spent on this finding (regression guard input).
    pub exploit_attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum AuthState {
    Anonymous,
    Authenticated { session_token: String },
}

impl AuthState {
    pub fn is_authenticated(&self) -> bool {
        matches!(self, AuthState::Authenticated { .. })
    }
}

/// Serializable snapshot of the scan's resource counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetCounters {
    pub wall_limit_s: f64,
    pub wall_elapsed_s: f64,
    pub token_limit: u64,
    pub tokens_used: u64,
    pub cost_limit_usd: f64,
    pub cost_used_usd: f64,
}

impl Default for BudgetCounters {
    fn default() -> Self {
        BudgetCounters {
            wall_limit_s: 600.0,
            wall_elapsed_s: 0.0,
            token_limit: 200_000,
            tokens_used: 0,
            cost_limit_usd: 1.0,
            cost_used_usd: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameworkHint {
    Php,
    Python,
    Node,
    Java,
    Unknown,
}

/// Technology profile inferred from observed responses only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TechProfile {
    pub server_banner: Option<String>,
    pub framework_hints: Vec<FrameworkHint>,
    pub waf_suspected: bool,
    pub error_signature_samples: Vec<String>,
}

impl TechProfile {
    pub fn unknown() -> Self {
        TechProfile { framework_hints: vec![FrameworkHint::Unknown], ..Default::default() }
    }

    pub fn hints(&self) -> &[FrameworkHint] {
        &self.framework_hints
    }
}

/// Fine-grained DOM position where injected input reappears.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    RawHtml,
    AttrDoubleQuoted,
    AttrSingleQuoted,
    AttrUnquoted,
    JsStringSingle,
    JsStringDouble,
    JsRaw,
    HtmlComment,
    UrlAttribute,
    CssContext,
    NotReflected,
}

impl ContextKind {
    /// Exploitability rank for multi-occurrence tie-breaks: raw HTML beats
    /// JS contexts beats attributes beats comment beats CSS beats URL.
    pub fn exploitability_rank(&self) -> u8 {
        match self {
            ContextKind::RawHtml => 0,
            ContextKind::JsStringSingle | ContextKind::JsStringDouble | ContextKind::JsRaw => 1,
            ContextKind::AttrDoubleQuoted
            | ContextKind::AttrSingleQuoted
            | ContextKind::AttrUnquoted => 2,
            ContextKind::HtmlComment => 3,
            ContextKind::CssContext => 4,
            ContextKind::UrlAttribute => 5,
            ContextKind::NotReflected => 9,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ContextKind::RawHtml => "raw_html",
            ContextKind::AttrDoubleQuoted => "attr_double_quoted",
            ContextKind::AttrSingleQuoted => "attr_single_quoted",
            ContextKind::AttrUnquoted => "attr_unquoted",
            ContextKind::JsStringSingle => "js_string_single",
            ContextKind::JsStringDouble => "js_string_double",
            ContextKind::JsRaw => "js_raw",
            ContextKind::HtmlComment => "html_comment",
            ContextKind::UrlAttribute => "url_attribute",
            ContextKind::CssContext => "css_context",
            ContextKind::NotReflected => "not_reflected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionContext {
    pub kind: ContextKind,
    pub enclosing_tag: Option<String>,
    pub attribute_name: Option<String>,
}

impl ReflectionContext {
    pub fn of(kind: ContextKind) -> Self {
        ReflectionContext { kind, enclosing_tag: None, attribute_name: None }
    }
}

/// Result of registering an attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegisterOutcome {
    Appended,
    Duplicate,
}

/// Global exploitation context: discovered surface, auth status, attempt
/// history, findings, budget counters.
///
/// Single logical owner; probe workers hand results back to the owning task,
/// so the state itself is never concurrently mutated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanState {
    pub target: Url,
    pub surface: Vec<InjectionPoint>,
    pub auth: AuthState,
    attempts: Vec<PayloadAttempt>,
    pub findings: Vec<Finding>,
    pub budget: BudgetCounters,
    pub tech: TechProfile,
    pub solved_flags: Vec<String>,
    #[serde(skip)]
    dup_index: HashSet<(PointKey, VulnClass, String)>,
}

impl ScanState {
    pub fn new(target: Url) -> Self {
        ScanState {
            target,
            surface: Vec::new(),
            auth: AuthState::Anonymous,
            attempts: Vec::new(),
            findings: Vec::new(),
            budget: BudgetCounters::default(),
            tech: TechProfile::default(),
            solved_flags: Vec::new(),
            dup_index: HashSet::new(),
        }
    }

    pub fn attempts(&self) -> &[PayloadAttempt] {
        &self.attempts
    }

    pub fn add_point(&mut self, point: InjectionPoint) -> bool {
        if self.surface.iter().any(|p| p.key() == point.key()) {
            return false;
        }
        self.surface.push(point);
        true
    }

    pub fn has_point(&self, key: &PointKey) -> bool {
        self.surface.iter().any(|p| &p.key() == key)
    }

    /// Upgrade to an authenticated session. Downgrades are rejected.
    pub fn set_auth(&mut self, auth: AuthState) -> Result<(), StateError> {
        if self.auth.is_authenticated() && !auth.is_authenticated() {
            return Err(StateError::AuthDowngrade);
        }
        self.auth = auth;
        Ok(())
    }

    /// Append an attempt. Duplicate key is byte-exact payload equality on
    /// `(point, vuln_class, payload)`; duplicates leave the state unchanged.
    pub fn register_attempt(
        &mut self,
        attempt: PayloadAttempt,
    ) -> Result<RegisterOutcome, StateError> {
        if !self.has_point(&attempt.point) {
            return Err(StateError::UnknownPoint(attempt.point.to_string()));
        }
        let key = (attempt.point.clone(), attempt.vuln_class, payload_hash(&attempt.payload));
        if !self.dup_index.insert(key) {
            return Ok(RegisterOutcome::Duplicate);
        }
        self.attempts.push(attempt);
        Ok(RegisterOutcome::Appended)
    }

    pub fn was_attempted(&self, point: &PointKey, class: VulnClass, payload: &[u8]) -> bool {
        self.dup_index.contains(&(point.clone(), class, payload_hash(payload)))
    }

    /// Upgrade an already-registered attempt to `verified` once its evidence
    /// lands. The history stays append-only; only the recorded outcome of
    /// the existing entry is corrected.
    pub fn mark_verified(&mut self, point: &PointKey, class: VulnClass, payload: &[u8]) -> bool {
        for attempt in self.attempts.iter_mut().rev() {
            if attempt.point == *point
                && attempt.vuln_class == class
                && attempt.payload == payload
            {
                attempt.outcome = AttemptOutcome::Verified;
                return true;
            }
        }
        false
    }

    /// Append a finding. Evidence must be present (non-empty trace) and the
    /// corresponding attempt must already be registered as verified.
    pub fn register_finding(&mut self, finding: Finding) -> Result<(), StateError> {
        if finding.evidence.request_trace.is_empty() {
            return Err(StateError::MissingEvidence);
        }
        let verified = self.attempts.iter().any(|a| {
            a.point == finding.point
                && a.vuln_class == finding.vuln_class
                && a.payload == finding.payload
                && a.outcome == AttemptOutcome::Verified
        });
        if !verified {
            return Err(StateError::AttemptNotVerified(finding.point.to_string()));
        }
        if let Some(flag) = &finding.solved_flag {
            if !self.solved_flags.contains(flag) {
                self.solved_flags.push(flag.clone());
            }
        }
        self.findings.push(finding);
        Ok(())
    }

    /// High-impact signal: a configured flag has been captured.
    pub fn solved(&self) -> bool {
        !self.solved_flags.is_empty()
    }

    /// Consistency check run at scan end: every verified attempt backs a
    /// finding and every finding has evidence of an enumerated kind.
    pub fn check_invariants(&self) -> Result<(), StateError> {
        for a in &self.attempts {
            if a.outcome == AttemptOutcome::Verified {
                let backed = self.findings.iter().any(|f| {
                    f.point == a.point && f.vuln_class == a.vuln_class && f.payload == a.payload
                });
                if !backed {
                    return Err(StateError::AttemptNotVerified(a.point.to_string()));
                }
            }
        }
        for f in &self.findings {
            if f.evidence.request_trace.is_empty() {
                return Err(StateError::MissingEvidence);
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut doc = serde_json::to_value(self).expect("state serializes");
        doc.as_object_mut()
            .expect("state is an object")
            .insert("schema".into(), serde_json::Value::String(STATE_SCHEMA.into()));
        doc
    }

    pub fn from_json(doc: &serde_json::Value) -> Result<Self, StateError> {
        let schema = doc.get("schema").and_then(|v| v.as_str());
        if schema != Some(STATE_SCHEMA) {
            return Err(StateError::SchemaMismatch(schema.map(String::from)));
        }
        let mut state: ScanState = serde_json::from_value(doc.clone())?;
        state.dup_index = state
            .attempts
            .iter()
            .map(|a| (a.point.clone(), a.vuln_class, payload_hash(&a.payload)))
            .collect();
        Ok(state)
    }
}

fn payload_hash(payload: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(payload);
    format!("{:x}", h.finalize())
}

/// Response digest: sha256 of the body after stripping volatile substrings,
/// so dedup and boolean differentials stay stable across requests.
#[derive(Debug, Clone)]
pub struct DigestConfig {
    volatile: Vec<Regex>,
}

static DEFAULT_VOLATILE: Lazy<Vec<Regex>> = Lazy::new(|| {
    [
        // ISO-8601 timestamps
        r"\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:?\d{2})?",
        // RFC-2822 dates (Date header style leaking into bodies)
        r"(Mon|Tue|Wed|Thu|Fri|Sat|Sun), \d{2} \w{3} \d{4} \d{2}:\d{2}:\d{2} GMT",
        // nonce attributes
        r#"nonce="[^"]*""#,
    ]
    .iter()
    .map(|p| Regex::new(p).expect("volatile pattern compiles"))
    .collect()
});

impl Default for DigestConfig {
    fn default() -> Self {
        DigestConfig { volatile: DEFAULT_VOLATILE.clone() }
    }
}

impl DigestConfig {
    pub fn with_patterns(patterns: &[&str]) -> Result<Self, regex::Error> {
        Ok(DigestConfig {
            volatile: patterns.iter().map(|p| Regex::new(p)).collect::<Result<_, _>>()?,
        })
    }

    pub fn normalize(&self, body: &[u8]) -> String {
        let mut text = String::from_utf8_lossy(body).into_owned();
        for re in &self.volatile {
            text = re.replace_all(&text, "").into_owned();
        }
        text
    }

    pub fn digest(&self, body: &[u8]) -> String {
        let normalized = self.normalize(body);
        let mut h = Sha256::new();
        h.update(normalized.as_bytes());
        format!("{:x}", h.finalize())
    }
}

pub const DEFAULT_FLAG_PATTERN: &str = r"FLAG\{[0-9a-f]{8,64}\}";

/// Configurable matcher for the lab's success criterion.
#[derive(Debug, Clone)]
pub struct FlagPattern {
    re: Regex,
}

impl Default for FlagPattern {
    fn default() -> Self {
        FlagPattern { re: Regex::new(DEFAULT_FLAG_PATTERN).expect("default flag pattern") }
    }
}

impl FlagPattern {
    pub fn new(pattern: &str) -> Result<Self, regex::Error> {
        Ok(FlagPattern { re: Regex::new(pattern)? })
    }

    /// All flag matches in a response body, in order of appearance.
    pub fn find_all(&self, body: &[u8]) -> Vec<String> {
        let text = String::from_utf8_lossy(body);
        self.re.find_iter(&text).map(|m| m.as_str().to_string()).collect()
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.re.is_match(text)
    }
}

/// Byte-exact base64 (de)serialization for payload and body fields.
pub mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(de)?;
        STANDARD.decode(s.as_bytes()).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(url: &str, name: &str) -> InjectionPoint {
        InjectionPoint {
            endpoint: Endpoint::get(Url::parse(url).unwrap()),
            channel: Channel::Query,
            name: name.into(),
            baseline_value: "1".into(),
        }
    }

    fn attempt(p: &InjectionPoint, payload: &[u8], outcome: AttemptOutcome) -> PayloadAttempt {
        PayloadAttempt {
            point: p.key(),
            vuln_class: VulnClass::Xss,
            payload: payload.to_vec(),
            outcome,
            response_digest: "d".into(),
            sent_at_ms: 1,
        }
    }

    #[test]
    fn register_attempt_appends_to_empty_state() {
        let mut state = ScanState::new(Url::parse("http://t/").unwrap());
        let p = point("http://t/echo", "q");
        state.add_point(p.clone());
        let out = state.register_attempt(attempt(&p, b"A", AttemptOutcome::NoSignal)).unwrap();
        assert_eq!(out, RegisterOutcome::Appended);
        assert_eq!(state.attempts().len(), 1);
    }

    #[test]
    fn register_attempt_dedups_byte_identical() {
        let mut state = ScanState::new(Url::parse("http://t/").unwrap());
        let p = point("http://t/echo", "q");
        state.add_point(p.clone());
        state.register_attempt(attempt(&p, b"A", AttemptOutcome::NoSignal)).unwrap();
        let out = state.register_attempt(attempt(&p, b"A", AttemptOutcome::NoSignal)).unwrap();
        assert_eq!(out, RegisterOutcome::Duplicate);
        assert_eq!(state.attempts().len(), 1);
        // Different payload bytes are a different key; no normalization.
        let out = state.register_attempt(attempt(&p, b"a", AttemptOutcome::NoSignal)).unwrap();
        assert_eq!(out, RegisterOutcome::Appended);
    }

    #[test]
    fn register_attempt_rejects_unknown_point() {
        let mut state = ScanState::new(Url::parse("http://t/").unwrap());
        let p = point("http://t/echo", "q");
        let err = state.register_attempt(attempt(&p, b"A", AttemptOutcome::NoSignal)).unwrap_err();
        assert!(matches!(err, StateError::UnknownPoint(_)));
    }

    #[test]
    fn dedup_key_includes_point() {
        let mut state = ScanState::new(Url::parse("http://t/").unwrap());
        let a = point("http://t/a", "q");
        let b = point("http://t/b", "q");
        state.add_point(a.clone());
        state.add_point(b.clone());
        state.register_attempt(attempt(&a, b"P", AttemptOutcome::NoSignal)).unwrap();
        assert!(state.was_attempted(&a.key(), VulnClass::Xss, b"P"));
        assert!(!state.was_attempted(&b.key(), VulnClass::Xss, b"P"));
    }

    fn verified_finding(p: &InjectionPoint) -> Finding {
        Finding {
            vuln_class: VulnClass::Xss,
            point: p.key(),
            payload: b"<x>".to_vec(),
            evidence: Evidence {
                detail: EvidenceDetail::ExecutionObserved {
                    marker: "AWE00000001".into(),
                    signal: "hook_callback".into(),
                },
                request_trace: vec![TraceRequest {
                    method: "GET".into(),
                    url: "http://t/echo?q=%3Cx%3E".into(),
                    headers: vec![],
                    body: vec![],
                }],
            },
            solved_flag: None,
            elapsed_s: 0.1,
            tokens_spent: 0,
            exploit_attempts: 1,
        }
    }

    #[test]
    fn register_finding_requires_verified_attempt() {
        let mut state = ScanState::new(Url::parse("http://t/").unwrap());
        let p = point("http://t/echo", "q");
        state.add_point(p.clone());
        let err = state.register_finding(verified_finding(&p)).unwrap_err();
        assert!(matches!(err, StateError::AttemptNotVerified(_)));

        state.register_attempt(attempt(&p, b"<x>", AttemptOutcome::Verified)).unwrap();
        state.register_finding(verified_finding(&p)).unwrap();
        assert_eq!(state.findings.len(), 1);
        state.check_invariants().unwrap();
    }

    #[test]
    fn register_finding_rejects_empty_trace() {
        let mut state = ScanState::new(Url::parse("http://t/").unwrap());
        let p = point("http://t/echo", "q");
        state.add_point(p.clone());
        state.register_attempt(attempt(&p, b"<x>", AttemptOutcome::Verified)).unwrap();
        let mut f = verified_finding(&p);
        f.evidence.request_trace.clear();
        assert!(matches!(state.register_finding(f), Err(StateError::MissingEvidence)));
    }

    #[test]
    fn solved_flag_marks_scan_complete() {
        let mut state = ScanState::new(Url::parse("http://t/").unwrap());
        let p = point("http://t/echo", "q");
        state.add_point(p.clone());
        state.register_attempt(attempt(&p, b"<x>", AttemptOutcome::Verified)).unwrap();
        let mut f = verified_finding(&p);
        f.solved_flag = Some("FLAG{deadbeef01}".into());
        state.register_finding(f).unwrap();
        assert!(state.solved());
        assert_eq!(state.solved_flags, vec!["FLAG{deadbeef01}".to_string()]);
    }

    #[test]
    fn auth_never_downgrades() {
        let mut state = ScanState::new(Url::parse("http://t/").unwrap());
        state.set_auth(AuthState::Authenticated { session_token: "s".into() }).unwrap();
        assert!(state.set_auth(AuthState::Anonymous).is_err());
        state.set_auth(AuthState::Authenticated { session_token: "s2".into() }).unwrap();
    }

    #[test]
    fn state_round_trips_through_versioned_json() {
        let mut state = ScanState::new(Url::parse("http://t/").unwrap());
        let p = point("http://t/echo", "q");
        state.add_point(p.clone());
        state.register_attempt(attempt(&p, b"A", AttemptOutcome::NoSignal)).unwrap();
        let doc = state.to_json();
        assert_eq!(doc["schema"], STATE_SCHEMA);
        let restored = ScanState::from_json(&doc).unwrap();
        assert_eq!(restored.attempts().len(), 1);
        // Dedup index is rebuilt on load.
        assert!(restored.was_attempted(&p.key(), VulnClass::Xss, b"A"));
    }

    #[test]
    fn from_json_rejects_wrong_schema() {
        let doc = serde_json::json!({"schema": "awe-state-v0"});
        assert!(matches!(ScanState::from_json(&doc), Err(StateError::SchemaMismatch(_))));
    }

    #[test]
    fn digest_strips_volatile_substrings() {
        let cfg = DigestConfig::default();
        let a = cfg.digest(b"hello 2025-01-02T10:00:00Z world");
        let b = cfg.digest(b"hello 2026-11-30T23:59:59Z world");
        let c = cfg.digest(b"hello there world");
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn flag_pattern_default_matches() {
        let f = FlagPattern::default();
        assert_eq!(
            f.find_all(b"x FLAG{deadbeef01} y"),
            vec!["FLAG{deadbeef01}".to_string()]
        );
        assert!(f.find_all(b"FLAG{nothex}").is_empty());
        assert!(f.find_all(b"FLAG{abc}").is_empty()); // below 8 hex chars
    }
}
