//! Pluggable LLM provider abstraction with exact token/cost accounting,
//! advisory planning, payload-synthesis prompts, and a deterministic offline
//! stub. Model churn must never touch agent logic: providers are thin
//! text-in/text-out adapters plus a price table.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use async_trait::async_trait;
use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::{Budget, NANO_PER_USD};
use crate::payload::{CharTransform, FilterModel};
use crate::state::{ContextKind, FrameworkHint, VulnClass};

pub const ADVISE_PLAN_PROMPT: &str = include_str!("../data/prompts/advise-plan-v1.txt");
pub const SYNTHESIZE_PROMPT: &str = include_str!("../data/prompts/synthesize-payloads-v1.txt");
pub const STUB_RULEBOOK_JSON: &str = include_str!("../data/stub-rulebook-v1.json");

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("llm budget exhausted; no request issued")]
    BudgetExhausted,
    #[error("provider failure after {attempts} attempt(s): {message}")]
    Provider { message: String, attempts: u32 },
}

impl LlmError {
    pub fn is_budget(&self) -> bool {
        matches!(self, LlmError::BudgetExhausted)
    }
}

/// Stub token estimate: ceil(len/4). Adapters without usage reporting share
/// the same rule so accounting stays exact and reproducible.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceTable {
    pub usd_per_m_input: f64,
    pub usd_per_m_output: f64,
}

impl Default for PriceTable {
    fn default() -> Self {
        PriceTable { usd_per_m_input: 3.0, usd_per_m_output: 15.0 }
    }
}

impl PriceTable {
    pub fn cost_nano(&self, input_tokens: u64, output_tokens: u64) -> u64 {
        let in_nano_per_tok = (self.usd_per_m_input * 1000.0).round() as u64;
        let out_nano_per_tok = (self.usd_per_m_output * 1000.0).round() as u64;
        input_tokens * in_nano_per_tok + output_tokens * out_nano_per_tok
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: f64,
    pub cost_nano_usd: u64,
    pub provider_id: String,
    pub latency_ms: u64,
}

/// Structured context handed to payload synthesis; never carries raw
/// response bodies, only bounded summaries.
#[derive(Debug, Clone, Default)]
pub struct ContextPacket {
    pub vuln_class: Option<VulnClass>,
    pub context: Option<ContextKind>,
    pub filter: FilterModel,
    pub last_failures: Vec<(String, String)>,
    pub tech_hints: Vec<FrameworkHint>,
}

const MAX_FAILURES_IN_PACKET: usize = 5;
const MAX_FAILURE_LEN: usize = 120;

impl ContextPacket {
    pub fn push_failure(&mut self, payload: &str, observation: &str) {
        let mut p = payload.to_string();
        p.truncate(MAX_FAILURE_LEN);
        let mut o = observation.to_string();
        o.truncate(MAX_FAILURE_LEN);
        self.last_failures.push((p, o));
        if self.last_failures.len() > MAX_FAILURES_IN_PACKET {
            self.last_failures.remove(0);
        }
    }

    fn char_transform_summary(&self) -> String {
        let parts: Vec<String> = self
            .filter
            .char_map
            .iter()
            .filter(|(_, t)| **t != CharTransform::Passed)
            .map(|(c, t)| {
                let fate = match t {
                    CharTransform::Passed => "passed",
                    CharTransform::Stripped => "stripped",
                    CharTransform::HtmlEncoded => "html_encoded",
                    CharTransform::UrlEncoded => "url_encoded",
                    CharTransform::EscapedBackslash => "escaped_backslash",
                    CharTransform::Replaced { .. } => "replaced",
                };
                format!("{c:?}:{fate}")
            })
            .collect();
        if parts.is_empty() { "none".to_string() } else { parts.join(", ") }
    }
}

/// Recon digest the planning prompt is built from.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReconSummary {
    pub endpoints: usize,
    pub points: usize,
    pub reflected_points: usize,
    pub xml_endpoints: usize,
    pub url_shaped_points: usize,
    pub id_shaped_points: usize,
    pub authenticated: bool,
    pub framework_hints: Vec<FrameworkHint>,
}

impl ReconSummary {
    fn render(&self) -> String {
        let hints: Vec<String> =
            self.framework_hints.iter().map(|h| format!("{h:?}").to_lowercase()).collect();
        format!(
            "- endpoints: {}\n- points: {}\n- reflected_points: {}\n- xml_endpoints: {}\n\
             - url_shaped_points: {}\n- id_shaped_points: {}\n- authenticated: {}\n\
             - framework_hints: {}",
            self.endpoints,
            self.points,
            self.reflected_points,
            self.xml_endpoints,
            self.url_shaped_points,
            self.id_shaped_points,
            self.authenticated,
            if hints.is_empty() { "none".to_string() } else { hints.join(",") },
        )
    }
}

#[async_trait]
pub trait Provider: Send + Sync {
    fn id(&self) -> &str;
    async fn complete(&self, prompt: &str, max_output_tokens: u64) -> Result<String, String>;
}

#[derive(Debug, Deserialize)]
struct PlanRule {
    when_feature: String,
    agents: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct BypassRule {
    #[serde(default)]
    when_blocked_tag: Option<String>,
    #[serde(default)]
    when_blocked_handler: Option<String>,
    #[serde(default)]
    when_char_transformed: Option<String>,
    candidates: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct StubRulebook {
    schema: String,
    plan_rules: Vec<PlanRule>,
    bypass_candidates: Vec<BypassRule>,
}

static RULEBOOK: Lazy<StubRulebook> = Lazy::new(|| {
    let book: StubRulebook =
        serde_json::from_str(STUB_RULEBOOK_JSON).expect("stub rulebook parses");
    assert_eq!(book.schema, "awe-stub-rulebook-v1");
    book
});

/// Deterministic offline provider: a rulebook keyed on features it reads
/// back out of the structured prompts. Keeps CI hermetic.
#[derive(Debug, Default)]
pub struct StubProvider;

impl StubProvider {
    fn prompt_field(prompt: &str, field: &str) -> Option<String> {
        for line in prompt.lines() {
            let line = line.trim().trim_start_matches("- ");
            if let Some(rest) = line.strip_prefix(&format!("{field}:")) {
                return Some(rest.trim().to_string());
            }
        }
        None
    }

    fn feature_positive(prompt: &str, feature: &str) -> bool {
        match feature {
            "always" => true,
            "id_shaped_points_authenticated" => {
                Self::prompt_field(prompt, "authenticated").as_deref() == Some("true")
                    && Self::prompt_field(prompt, "id_shaped_points")
                        .and_then(|v| v.parse::<usize>().ok())
                        .unwrap_or(0)
                        > 0
            }
            name => Self::prompt_field(prompt, name)
                .and_then(|v| v.parse::<usize>().ok())
                .unwrap_or(0)
                > 0,
        }
    }

    fn plan_response(prompt: &str) -> String {
        let mut ranked: Vec<(String, String)> = Vec::new();
        for rule in &RULEBOOK.plan_rules {
            if Self::feature_positive(prompt, &rule.when_feature) {
                for agent in &rule.agents {
                    if !ranked.iter().any(|(a, _)| a == agent) {
                        ranked.push((agent.clone(), format!("signal {}", rule.when_feature)));
                    }
                }
            }
        }
        ranked
            .iter()
            .enumerate()
            .map(|(i, (agent, why))| format!("{}. {agent} — {why}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn synth_response(prompt: &str) -> String {
        let blocked_tags = Self::prompt_field(prompt, "blocked_tags").unwrap_or_default();
        let blocked_handlers = Self::prompt_field(prompt, "blocked_handlers").unwrap_or_default();
        let transforms = Self::prompt_field(prompt, "char_transforms").unwrap_or_default();
        let n: usize = Self::prompt_field(prompt, "max_candidates")
            .and_then(|v| v.parse().ok())
            .unwrap_or(4);
        let mut candidates: Vec<String> = Vec::new();
        for rule in &RULEBOOK.bypass_candidates {
            let hit = rule
                .when_blocked_tag
                .as_ref()
                .map(|t| blocked_tags.split(',').any(|b| b.trim() == t))
                .unwrap_or(false)
                || rule
                    .when_blocked_handler
                    .as_ref()
                    .map(|h| blocked_handlers.split(',').any(|b| b.trim() == h))
                    .unwrap_or(false)
                || rule
                    .when_char_transformed
                    .as_ref()
                    .map(|c| transforms.contains(&format!("{:?}", c.chars().next().unwrap_or(' '))))
                    .unwrap_or(false);
            if hit {
                for cand in &rule.candidates {
                    if !candidates.contains(cand) {
                        candidates.push(cand.clone());
                    }
                }
            }
        }
        candidates.truncate(n);
        format!("```payloads\n{}\n```", candidates.join("\n"))
    }
}

#[async_trait]
impl Provider for StubProvider {
    fn id(&self) -> &str {
        "stub"
    }

    async fn complete(&self, prompt: &str, _max_output_tokens: u64) -> Result<String, String> {
        if prompt.starts_with("TASK: rank-agents") {
            Ok(Self::plan_response(prompt))
        } else if prompt.starts_with("TASK: synthesize-payloads") {
            Ok(Self::synth_response(prompt))
        } else {
            Ok("OK".to_string())
        }
    }
}

/// Thin adapter for an external completion endpoint configured by env vars.
/// The wire format is a minimal JSON POST; agent logic never sees it.
pub struct HttpProvider {
    endpoint: String,
    api_key: String,
    model: String,
    client: reqwest::Client,
}

impl HttpProvider {
    pub fn from_env() -> Result<Self, String> {
        let endpoint =
            std::env::var("AWE_LLM_ENDPOINT").map_err(|_| "AWE_LLM_ENDPOINT not set")?;
        let api_key = std::env::var("AWE_API_KEY").unwrap_or_default();
        let model = std::env::var("AWE_MODEL").unwrap_or_else(|_| "default".to_string());
        Ok(HttpProvider {
            endpoint,
            api_key,
            model,
            client: reqwest::Client::builder()
                .timeout(std::time::Duration::from_secs(30))
                .build()
                .map_err(|e| e.to_string())?,
        })
    }
}

#[async_trait]
impl Provider for HttpProvider {
    fn id(&self) -> &str {
        "http"
    }

    async fn complete(&self, prompt: &str, max_output_tokens: u64) -> Result<String, String> {
        let body = serde_json::json!({
            "model": self.model,
            "prompt": prompt,
            "max_tokens": max_output_tokens,
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .await
            .map_err(|e| e.to_string())?;
        let doc: serde_json::Value = resp.json().await.map_err(|e| e.to_string())?;
        doc.get("text")
            .and_then(|t| t.as_str())
            .map(String::from)
            .ok_or_else(|| "response missing text field".to_string())
    }
}

/// Build a provider from `AWE_PROVIDER` (stub | http), defaulting to stub.
pub fn provider_from_env(name: Option<&str>) -> Result<Box<dyn Provider>, String> {
    let name = match name {
        Some(n) => n.to_string(),
        None => std::env::var("AWE_PROVIDER").unwrap_or_else(|_| "stub".to_string()),
    };
    match name.as_str() {
        "stub" => Ok(Box::new(StubProvider)),
        "http" => Ok(Box::new(HttpProvider::from_env()?)),
        other => Err(format!("unknown provider {other:?} (expected stub|http)")),
    }
}

pub fn price_table_from_env() -> PriceTable {
    let mut table = PriceTable::default();
    if let Ok(v) = std::env::var("AWE_PRICE_IN") {
        if let Ok(p) = v.parse() {
            table.usd_per_m_input = p;
        }
    }
    if let Ok(v) = std::env::var("AWE_PRICE_OUT") {
        if let Ok(p) = v.parse() {
            table.usd_per_m_output = p;
        }
    }
    table
}

const LLM_RETRIES: u32 = 2;
const DEFAULT_MAX_OUTPUT: u64 = 1024;

/// Shared, internally synchronized gateway; one in-flight completion at a
/// time by default (cost control).
pub struct LlmGateway {
    provider: Box<dyn Provider>,
    price: PriceTable,
    budget: Arc<Budget>,
    calls: Mutex<Vec<(String, Completion)>>,
    gate: tokio::sync::Semaphore,
}

impl LlmGateway {
    pub fn new(provider: Box<dyn Provider>, price: PriceTable, budget: Arc<Budget>) -> Self {
        Self::with_concurrency(provider, price, budget, 1)
    }

    /// One in-flight completion by default (cost control); configurable
    /// upward.
    pub fn with_concurrency(
        provider: Box<dyn Provider>,
        price: PriceTable,
        budget: Arc<Budget>,
        max_in_flight: usize,
    ) -> Self {
        LlmGateway {
            provider,
            price,
            budget,
            calls: Mutex::new(Vec::new()),
            gate: tokio::sync::Semaphore::new(max_in_flight.max(1)),
        }
    }

    pub fn stub(budget: Arc<Budget>) -> Self {
        Self::new(Box::new(StubProvider), PriceTable::default(), budget)
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    /// Per-call accounting mirror for report totals.
    pub fn call_log(&self) -> Vec<Completion> {
        self.calls.lock().expect("call log lock").iter().map(|(_, c)| c.clone()).collect()
    }

    /// Full prompt/completion transcript for the audit trail.
    pub fn transcript(&self) -> Vec<(String, Completion)> {
        self.calls.lock().expect("call log lock").clone()
    }

    /// Text completion with exact accounting. The global budget counters are
    /// incremented atomically by the per-call token counts.
    pub async fn complete(&self, prompt: &str, max_output: u64) -> Result<Completion, LlmError> {
        let input_tokens = estimate_tokens(prompt);
        if !self.budget.has_llm_headroom(input_tokens + max_output) {
            return Err(LlmError::BudgetExhausted);
        }
        let _permit = self.gate.acquire().await.expect("gateway semaphore");
        let started = Instant::now();
        let mut attempt = 0;
        let text = loop {
            attempt += 1;
            match self.provider.complete(prompt, max_output).await {
                Ok(t) => break t,
                Err(message) if attempt <= LLM_RETRIES => {
                    tracing::debug!(attempt, %message, "provider failure, retrying");
                }
                Err(message) => return Err(LlmError::Provider { message, attempts: attempt }),
            }
        };
        let output_tokens = estimate_tokens(&text);
        let cost_nano = self.price.cost_nano(input_tokens, output_tokens);
        self.budget.record_llm_usage(input_tokens + output_tokens, cost_nano);
        let completion = Completion {
            text,
            input_tokens,
            output_tokens,
            cost_usd: cost_nano as f64 / NANO_PER_USD as f64,
            cost_nano_usd: cost_nano,
            provider_id: self.provider.id().to_string(),
            latency_ms: started.elapsed().as_millis() as u64,
        };
        self.calls
            .lock()
            .expect("call log lock")
            .push((prompt.to_string(), completion.clone()));
        Ok(completion)
    }

    /// Convert recon output into a prioritized agent list. Never fatal: any
    /// failure or unparseable output yields an empty list and the caller
    /// substitutes the deterministic heuristic ranking.
    pub async fn advise_plan(
        &self,
        recon: &ReconSummary,
        memory_summary: &str,
    ) -> Vec<(VulnClass, String)> {
        let prompt = ADVISE_PLAN_PROMPT
            .replace("{RECON}", &recon.render())
            .replace("{MEMORY}", memory_summary);
        let completion = match self.complete(&prompt, DEFAULT_MAX_OUTPUT).await {
            Ok(c) => c,
            Err(err) => {
                tracing::debug!(%err, "advise_plan unavailable, deferring to heuristics");
                return Vec::new();
            }
        };
        parse_plan_response(&completion.text)
    }

    /// Up to `n` raw candidate strings; admission control stays with the
    /// payload engine. Budget exhaustion yields an empty list so the
    /// deterministic pipeline continues.
    pub async fn synthesize_payloads(&self, packet: &ContextPacket, n: usize) -> Vec<String> {
        if n == 0 {
            return Vec::new();
        }
        let failures = if packet.last_failures.is_empty() {
            "none".to_string()
        } else {
            packet
                .last_failures
                .iter()
                .map(|(p, o)| format!("- {p:?} => {o}"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let hints: Vec<String> =
            packet.tech_hints.iter().map(|h| format!("{h:?}").to_lowercase()).collect();
        let prompt = SYNTHESIZE_PROMPT
            .replace("{N}", &n.to_string())
            .replace(
                "{CLASS}",
                packet.vuln_class.map(|c| c.as_str()).unwrap_or("unknown"),
            )
            .replace(
                "{CONTEXT}",
                packet.context.map(|c| c.as_str()).unwrap_or("unknown"),
            )
            .replace(
                "{BLOCKED_TAGS}",
                &join_or_none(packet.filter.blocked_tags.iter().cloned()),
            )
            .replace(
                "{BLOCKED_HANDLERS}",
                &join_or_none(packet.filter.blocked_handlers.iter().cloned()),
            )
            .replace("{CHAR_TRANSFORMS}", &packet.char_transform_summary())
            .replace("{TECH}", &join_or_none(hints.into_iter()))
            .replace("{FAILURES}", &failures);
        match self.complete(&prompt, DEFAULT_MAX_OUTPUT).await {
            Ok(c) => parse_fenced_payloads(&c.text, n),
            Err(err) => {
                tracing::debug!(%err, "synthesize_payloads unavailable");
                Vec::new()
            }
        }
    }
}

fn join_or_none(parts: impl Iterator<Item = String>) -> String {
    let v: Vec<String> = parts.collect();
    if v.is_empty() { "none".to_string() } else { v.join(",") }
}

static PLAN_LINE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^\s*\d+\.\s*([a-z_]+)\s*(?:[—:-]\s*(.*))?$").expect("plan line"));

/// Parse the constrained plan format; hallucinated agent ids are dropped.
pub fn parse_plan_response(text: &str) -> Vec<(VulnClass, String)> {
    let mut out = Vec::new();
    for line in text.lines() {
        if let Some(caps) = PLAN_LINE.captures(line) {
            if let Some(class) = VulnClass::parse(&caps[1]) {
                if !out.iter().any(|(c, _)| *c == class) {
                    let why = caps.get(2).map(|m| m.as_str().to_string()).unwrap_or_default();
                    out.push((class, why));
                }
            }
        }
    }
    out
}

/// Extract candidate lines from the first ```payloads fenced block.
pub fn parse_fenced_payloads(text: &str, n: usize) -> Vec<String> {
    let Some(start) = text.find("```payloads") else {
        return Vec::new();
    };
    let after = &text[start + "```payloads".len()..];
    let end = after.find("```").unwrap_or(after.len());
    after[..end]
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .take(n)
        .map(String::from)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::BudgetLimits;

    fn budget() -> Arc<Budget> {
        Arc::new(Budget::new(BudgetLimits::default()))
    }

    fn rt() -> tokio::runtime::Runtime {
        tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap()
    }

    #[test]
    fn stub_token_estimate_is_len_over_4() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
        let g = LlmGateway::stub(budget());
        let c = rt().block_on(g.complete("abcdefgh", 64)).unwrap();
        assert_eq!(c.input_tokens, 2);
        assert_eq!(c.output_tokens, estimate_tokens(&c.text));
    }

    #[test]
    fn price_arithmetic_10k_in_2k_out_is_6_cents() {
        let table = PriceTable::default();
        let nano = table.cost_nano(10_000, 2_000);
        assert_eq!(nano, 60_000_000);
        assert!((nano as f64 / NANO_PER_USD as f64 - 0.06).abs() < 1e-12);
    }

    #[test]
    fn zero_headroom_is_budget_error_without_a_request() {
        let b = Arc::new(Budget::new(BudgetLimits { token_limit: 0, ..Default::default() }));
        let g = LlmGateway::stub(b);
        let err = rt().block_on(g.complete("hello", 10)).unwrap_err();
        assert!(err.is_budget());
        assert!(g.call_log().is_empty());
    }

    #[test]
    fn accounting_sums_to_budget_counters() {
        let b = budget();
        let g = LlmGateway::stub(b.clone());
        rt().block_on(async {
            g.complete("prompt one", 32).await.unwrap();
            g.complete("prompt two is longer", 32).await.unwrap();
        });
        let total: u64 = g.call_log().iter().map(|c| c.input_tokens + c.output_tokens).sum();
        assert_eq!(total, b.tokens_used());
        let cost: u64 = g.call_log().iter().map(|c| c.cost_nano_usd).sum();
        assert_eq!(cost, b.cost_used_nano());
        // Prompts are mirrored alongside completions.
        let transcript = g.transcript();
        assert_eq!(transcript.len(), 2);
        assert_eq!(transcript[0].0, "prompt one");
    }

    #[test]
    fn stub_plan_puts_xss_first_when_reflections_present() {
        let g = LlmGateway::stub(budget());
        let recon = ReconSummary { reflected_points: 2, points: 5, ..Default::default() };
        let plan = rt().block_on(g.advise_plan(&recon, "none"));
        assert_eq!(plan.first().map(|(c, _)| *c), Some(VulnClass::Xss));
        let classes: Vec<VulnClass> = plan.iter().map(|(c, _)| *c).collect();
        assert!(classes.contains(&VulnClass::SqliError));
        assert!(!classes.contains(&VulnClass::Xxe), "no xml endpoints observed");
    }

    #[test]
    fn plan_parser_drops_hallucinated_agents() {
        let parsed = parse_plan_response("1. rce_magic — nonsense\n2. xss — ok\njunk line");
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].0, VulnClass::Xss);
    }

    #[test]
    fn garbage_provider_text_yields_empty_plan() {
        assert!(parse_plan_response("the weather is nice today").is_empty());
    }

    #[test]
    fn stub_synthesizes_bypasses_for_blocked_script() {
        let g = LlmGateway::stub(budget());
        let mut packet = ContextPacket {
            vuln_class: Some(VulnClass::Xss),
            context: Some(ContextKind::RawHtml),
            ..Default::default()
        };
        packet.filter.blocked_tags.insert("script".into());
        let candidates = rt().block_on(g.synthesize_payloads(&packet, 4));
        assert!(!candidates.is_empty());
        assert!(candidates.iter().any(|c| c.contains("onerror") || c.contains("onload")));
        assert!(candidates.iter().all(|c| c.contains("{MARKER}")));
    }

    #[test]
    fn synthesize_n_zero_is_empty() {
        let g = LlmGateway::stub(budget());
        let out = rt().block_on(g.synthesize_payloads(&ContextPacket::default(), 0));
        assert!(out.is_empty());
    }

    #[test]
    fn fenced_parser_extracts_lines() {
        let text = "noise\n```payloads\n<a>\n<b>\n\n<c>\n```\ntrailing";
        assert_eq!(parse_fenced_payloads(text, 2), vec!["<a>".to_string(), "<b>".to_string()]);
        assert!(parse_fenced_payloads("no fence here", 5).is_empty());
    }

    struct FailingProvider;

    #[async_trait]
    impl Provider for FailingProvider {
        fn id(&self) -> &str {
            "failing"
        }
        async fn complete(&self, _prompt: &str, _max: u64) -> Result<String, String> {
            Err("simulated outage".to_string())
        }
    }

    #[test]
    fn provider_failure_after_retries_yields_empty_results() {
        let g = LlmGateway::new(Box::new(FailingProvider), PriceTable::default(), budget());
        let err = rt().block_on(g.complete("x", 8)).unwrap_err();
        match err {
            LlmError::Provider { attempts, .. } => assert_eq!(attempts, 3),
            other => panic!("expected provider error, got {other}"),
        }
        // Plans and synthesis degrade to empty, never fatal.
        let plan = rt().block_on(g.advise_plan(&ReconSummary::default(), "none"));
        assert!(plan.is_empty());
        let out = rt().block_on(g.synthesize_payloads(&ContextPacket::default(), 4));
        assert!(out.is_empty());
        assert!(g.call_log().is_empty(), "failed calls are not accounted");
    }

    #[test]
    fn budget_exhaustion_mid_scan_yields_empty_synthesis() {
        let b = Arc::new(Budget::new(BudgetLimits { token_limit: 1, ..Default::default() }));
        let g = LlmGateway::stub(b);
        let out = rt().block_on(g.synthesize_payloads(&ContextPacket::default(), 4));
        assert!(out.is_empty());
    }
}
