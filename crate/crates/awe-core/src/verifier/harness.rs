//! Lightweight HTML+script evaluation harness.
//!
//! Deterministically simulates the browser signals that matter for exploit
//! verification: dialog calls, the pre-registered `awe_hook` global, and DOM
//! nodes carrying a marker id. Script bodies and auto-firing event handlers
//! are scanned with a string- and comment-aware lexer so a call that only
//! appears inside a string literal never counts as executed.

use crate::htmlscan::{self, ElementInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    DialogTriggered,
    DomMutation,
    HookCallback,
}

impl SignalKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SignalKind::DialogTriggered => "dialog_triggered",
            SignalKind::DomMutation => "dom_mutation",
            SignalKind::HookCallback => "hook_callback",
        }
    }
}

/// One observed execution signal. `marker` is empty when the executed call
/// carried no string-literal argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signal {
    pub kind: SignalKind,
    pub marker: String,
}

const HOOK_FUNCTION: &str = "awe_hook";
const DIALOG_FUNCTIONS: [&str; 3] = ["alert", "confirm", "prompt"];

/// Evaluate a page and report every execution signal it would produce.
pub fn evaluate_page(html: &str) -> Vec<Signal> {
    let mut signals = Vec::new();
    for el in htmlscan::elements(html) {
        if el.name == "script" {
            if let Some(js) = &el.raw_content {
                scan_js(js, &mut signals);
            }
        }
        for attr in &el.attrs {
            if attr.name.starts_with("on") && handler_fires(&el, &attr.name) {
                // Browsers entity-decode attribute values before execution.
                let js = htmlscan::decode_entities(&attr.value);
                scan_js(&js, &mut signals);
            }
        }
        // An element node carrying a marker as its id is a DOM mutation the
        // injected markup caused; text or encoded occurrences never get here.
        if let Some(id) = el.attr("id") {
            if !id.is_empty() {
                signals.push(Signal { kind: SignalKind::DomMutation, marker: id.to_string() });
            }
        }
    }
    signals
}

/// Whether an event handler fires without user interaction in the harness.
///
/// Images never load here, so `onerror` on img/video/audio always fires and
/// `onload` on them never does; `onload` fires for structural elements.
fn handler_fires(el: &ElementInfo, handler: &str) -> bool {
    match (el.name.as_str(), handler) {
        ("img" | "video" | "audio" | "source", "onerror") => true,
        ("svg" | "body" | "iframe" | "frame", "onload") => true,
        ("input" | "textarea" | "select" | "button", "onfocus") => el.has_attr("autofocus"),
        ("details", "ontoggle") => el.has_attr("open"),
        _ => false,
    }
}

/// Scan a JS snippet for executed hook/dialog calls, skipping anything inside
/// string literals or comments.
fn scan_js(js: &str, signals: &mut Vec<Signal>) {
    let bytes = js.as_bytes();
    let mut pos = 0;
    while pos < bytes.len() {
        let c = bytes[pos];
        match c {
            b'\'' | b'"' | b'`' => {
                pos = skip_string(bytes, pos, c);
            }
            b'/' if pos + 1 < bytes.len() && bytes[pos + 1] == b'/' => {
                pos = js[pos..].find('\n').map(|i| pos + i + 1).unwrap_or(bytes.len());
            }
            b'/' if pos + 1 < bytes.len() && bytes[pos + 1] == b'*' => {
                pos = js[pos + 2..].find("*/").map(|i| pos + 2 + i + 2).unwrap_or(bytes.len());
            }
            _ if c.is_ascii_alphabetic() || c == b'_' => {
                let start = pos;
                while pos < bytes.len()
                    && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_')
                {
                    pos += 1;
                }
                // Property accesses like window.alert still execute the call.
                let ident = &js[start..pos];
                let callee = if ident == HOOK_FUNCTION {
                    Some(SignalKind::HookCallback)
                } else if DIALOG_FUNCTIONS.contains(&ident) {
                    Some(SignalKind::DialogTriggered)
                } else {
                    None
                };
                if let Some(kind) = callee {
                    if let Some((arg, next)) = parse_call_arg(js, pos) {
                        signals.push(Signal { kind, marker: arg });
                        pos = next;
                    }
                }
            }
            _ => pos += 1,
        }
    }
}

fn skip_string(bytes: &[u8], start: usize, quote: u8) -> usize {
    let mut pos = start + 1;
    while pos < bytes.len() {
        match bytes[pos] {
            b'\\' => pos += 2,
            c if c == quote => return pos + 1,
            _ => pos += 1,
        }
    }
    pos
}

/// Parse `(` `'arg'` `)` after a recognized callee; the argument may be a
/// single-, double-, or backtick-quoted literal, or absent.
fn parse_call_arg(js: &str, mut pos: usize) -> Option<(String, usize)> {
    let bytes = js.as_bytes();
    while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
        pos += 1;
    }
    if pos >= bytes.len() || bytes[pos] != b'(' {
        return None;
    }
    pos += 1;
    while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
        pos += 1;
    }
    if pos < bytes.len() && matches!(bytes[pos], b'\'' | b'"' | b'`') {
        let quote = bytes[pos];
        let arg_start = pos + 1;
        let end = skip_string(bytes, pos, quote);
        if end > arg_start && end <= bytes.len() {
            let arg = js[arg_start..end - 1].to_string();
            return Some((arg, end));
        }
    }
    // Call with a non-literal or empty argument still executed.
    Some((String::new(), pos))
}
