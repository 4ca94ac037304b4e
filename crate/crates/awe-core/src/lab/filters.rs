//! Named, documented pure filter functions referenced from the manifest.
//! They double as oracles for filter-inference tests.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterId {
    /// Identity.
    None,
    /// htmlspecialchars-style: `& < > " '` become entities.
    HtmlEncodeAll,
    /// Encodes `< >` only; quotes pass through.
    HtmlEncodeAngle,
    /// Removes `<script ...>` / `</script>` tags, case-insensitively.
    StripScriptCi,
    /// Same, but case-sensitive: mixed-case tags survive.
    StripScriptCs,
    /// addslashes-style: backslash-escapes `\ ' "`.
    EscapeQuotes,
    /// Deletes `'` and `"` outright.
    StripQuotes,
    /// Deletes literal `../` sequences in a single non-recursive pass.
    StripDotdotOnce,
    /// Deletes ASCII spaces.
    StripSpaces,
}

static SCRIPT_TAG_CI: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)</?script\b[^>]*>").expect("script tag pattern"));
static SCRIPT_TAG_CS: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"</?script\b[^>]*>").expect("script tag pattern"));

pub fn apply_filter(id: FilterId, input: &str) -> String {
    match id {
        FilterId::None => input.to_string(),
        FilterId::HtmlEncodeAll => input
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;")
            .replace('"', "&quot;")
            .replace('\'', "&#x27;"),
        FilterId::HtmlEncodeAngle => input.replace('<', "&lt;").replace('>', "&gt;"),
        FilterId::StripScriptCi => SCRIPT_TAG_CI.replace_all(input, "").into_owned(),
        FilterId::StripScriptCs => SCRIPT_TAG_CS.replace_all(input, "").into_owned(),
        FilterId::EscapeQuotes => input
            .replace('\\', "\\\\")
            .replace('\'', "\\'")
            .replace('"', "\\\""),
        FilterId::StripQuotes => input.replace(['\'', '"'], ""),
        FilterId::StripDotdotOnce => input.replace("../", ""),
        FilterId::StripSpaces => input.replace(' ', ""),
    }
}

/// How one character fares through a filter; ground truth for the
/// filter-inference soundness checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CharFate {
    Passed,
    Stripped,
    HtmlEncoded,
    EscapedBackslash,
    Replaced(String),
}

pub fn char_fate(id: FilterId, c: char) -> CharFate {
    let out = apply_filter(id, &c.to_string());
    if out == c.to_string() {
        CharFate::Passed
    } else if out.is_empty() {
        CharFate::Stripped
    } else if out.starts_with('&') && out.ends_with(';') {
        CharFate::HtmlEncoded
    } else if out == format!("\\{c}") {
        CharFate::EscapedBackslash
    } else {
        CharFate::Replaced(out)
    }
}

/// Decode %XX sequences (single pass). The lab's handlers decode once more
/// after filtering, which is the classic decode-after-sanitize bug the
/// encoded-traversal level exercises.
pub fn percent_decode(input: &str) -> String {
    let bytes = input.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Ok(v) = u8::from_str_radix(&input[i + 1..i + 3], 16) {
                out.push(v);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn html_encode_all_neutralizes_specials() {
        assert_eq!(
            apply_filter(FilterId::HtmlEncodeAll, r#"<a href="x">'"#),
            "&lt;a href=&quot;x&quot;&gt;&#x27;"
        );
    }

    #[test]
    fn strip_script_ci_removes_any_case() {
        assert_eq!(apply_filter(FilterId::StripScriptCi, "<script>x</script>"), "x");
        assert_eq!(apply_filter(FilterId::StripScriptCi, "<ScRiPt>x</SCRIPT>"), "x");
        assert_eq!(apply_filter(FilterId::StripScriptCi, "<img src=x>"), "<img src=x>");
    }

    #[test]
    fn strip_script_cs_lets_mixed_case_through() {
        assert_eq!(apply_filter(FilterId::StripScriptCs, "<script>x</script>"), "x");
        assert_eq!(apply_filter(FilterId::StripScriptCs, "<ScRiPt>x"), "<ScRiPt>x");
    }

    #[test]
    fn escape_quotes_backslashes() {
        assert_eq!(apply_filter(FilterId::EscapeQuotes, "a'b\"c"), "a\\'b\\\"c");
        // Backtick is untouched; that is the documented gap this level has.
        assert_eq!(apply_filter(FilterId::EscapeQuotes, "`t`"), "`t`");
    }

    #[test]
    fn strip_dotdot_once_is_single_pass() {
        assert_eq!(apply_filter(FilterId::StripDotdotOnce, "../../etc/passwd"), "etc/passwd");
        // Non-recursive: crafted input regenerates a traversal.
        assert_eq!(apply_filter(FilterId::StripDotdotOnce, "....//etc"), "../etc");
        // Encoded traversal is untouched pre-decode.
        assert_eq!(
            apply_filter(FilterId::StripDotdotOnce, "%2e%2e%2fetc"),
            "%2e%2e%2fetc"
        );
    }

    #[test]
    fn char_fate_classification() {
        assert_eq!(char_fate(FilterId::HtmlEncodeAll, '<'), CharFate::HtmlEncoded);
        assert_eq!(char_fate(FilterId::HtmlEncodeAll, '('), CharFate::Passed);
        assert_eq!(char_fate(FilterId::EscapeQuotes, '\''), CharFate::EscapedBackslash);
        assert_eq!(char_fate(FilterId::StripQuotes, '"'), CharFate::Stripped);
        assert_eq!(char_fate(FilterId::StripSpaces, ' '), CharFate::Stripped);
    }

    #[test]
    fn percent_decode_single_pass() {
        assert_eq!(percent_decode("%2e%2e%2f"), "../");
        assert_eq!(percent_decode("a%20b"), "a b");
        assert_eq!(percent_decode("100%"), "100%");
    }
}
