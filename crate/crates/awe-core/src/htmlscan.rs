//! Positional HTML tokenizer shared by reflection-context classification, the
//! script-evaluation harness, and crawl extraction.
//!
//! This is a deliberately small HTML5-ish tokenizer: tags with quoted,
//! single-quoted and unquoted attributes, comments, doctypes, and raw-text
//! elements (script/style/textarea/title). It tracks byte offsets so callers
//! can ask "what syntactic position does offset N sit in".

use std::ops::Range;

/// Elements whose content is raw text up to the matching close tag.
const RAW_TEXT_ELEMENTS: [&str; 4] = ["script", "style", "textarea", "title"];

/// Attributes whose value is interpreted as a URL.
const URL_ATTRIBUTES: [&str; 6] = ["href", "src", "action", "formaction", "poster", "data"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attr {
    pub name: String,
    pub value: String,
    /// Byte range of the raw (still-encoded) value in the source.
    pub value_span: Range<usize>,
    pub quote: AttrQuote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrQuote {
    Double,
    Single,
    Unquoted,
    /// Attribute present without a value, e.g. `autofocus`.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    StartTag { name: String, attrs: Vec<Attr>, self_closing: bool, span: Range<usize> },
    EndTag { name: String, span: Range<usize> },
    Text { span: Range<usize> },
    /// Content of a raw-text element; `element` is the lowercase tag name.
    RawText { element: String, span: Range<usize> },
    Comment { span: Range<usize> },
}

/// Tokenize a full document. Unterminated constructs run to end of input.
pub fn tokenize(html: &str) -> Vec<Token> {
    let bytes = html.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    let mut text_start = 0;

    while pos < bytes.len() {
        if bytes[pos] != b'<' {
            pos += 1;
            continue;
        }
        let rest = &html[pos..];
        if rest.starts_with("<!--") {
            flush_text(&mut tokens, text_start, pos);
            let end = html[pos + 4..].find("-->").map(|i| pos + 4 + i + 3).unwrap_or(bytes.len());
            tokens.push(Token::Comment { span: pos + 4..end.saturating_sub(3).max(pos + 4) });
            pos = end;
            text_start = pos;
        } else if rest.starts_with("<!") || rest.starts_with("<?") {
            flush_text(&mut tokens, text_start, pos);
            let end = html[pos..].find('>').map(|i| pos + i + 1).unwrap_or(bytes.len());
            pos = end;
            text_start = pos;
        } else if rest.starts_with("</") {
            flush_text(&mut tokens, text_start, pos);
            let end = html[pos..].find('>').map(|i| pos + i + 1).unwrap_or(bytes.len());
            let name = html[pos + 2..end.saturating_sub(1).max(pos + 2)].trim().to_lowercase();
            tokens.push(Token::EndTag { name, span: pos..end });
            pos = end;
            text_start = pos;
        } else if rest.len() > 1 && rest.as_bytes()[1].is_ascii_alphabetic() {
            flush_text(&mut tokens, text_start, pos);
            let (tag, end) = parse_tag(html, pos);
            let raw = !tag.self_closing
                && RAW_TEXT_ELEMENTS.contains(&tag.name.as_str());
            let name = tag.name.clone();
            tokens.push(Token::StartTag {
                name: tag.name,
                attrs: tag.attrs,
                self_closing: tag.self_closing,
                span: pos..end,
            });
            pos = end;
            text_start = pos;
            if raw {
                let close = format!("</{name}");
                let lower = html[pos..].to_lowercase();
                let content_end = lower.find(&close).map(|i| pos + i).unwrap_or(bytes.len());
                tokens.push(Token::RawText { element: name, span: pos..content_end });
                pos = content_end;
                text_start = pos;
            }
        } else {
            // Literal '<' in text.
            pos += 1;
        }
    }
    flush_text(&mut tokens, text_start, bytes.len());
    tokens
}

fn flush_text(tokens: &mut Vec<Token>, start: usize, end: usize) {
    if end > start {
        tokens.push(Token::Text { span: start..end });
    }
}

struct ParsedTag {
    name: String,
    attrs: Vec<Attr>,
    self_closing: bool,
}

fn parse_tag(html: &str, start: usize) -> (ParsedTag, usize) {
    let bytes = html.as_bytes();
    let mut pos = start + 1;
    let name_start = pos;
    while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'-') {
        pos += 1;
    }
    let name = html[name_start..pos].to_lowercase();
    let mut attrs = Vec::new();
    let mut self_closing = false;

    loop {
        while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            break;
        }
        match bytes[pos] {
            b'>' => {
                pos += 1;
                break;
            }
            b'/' => {
                pos += 1;
                if pos < bytes.len() && bytes[pos] == b'>' {
                    self_closing = true;
                    pos += 1;
                    break;
                }
                // Slash used as a separator, e.g. <img/src=x>; keep scanning.
            }
            _ => {
                let attr_start = pos;
                while pos < bytes.len()
                    && !(bytes[pos] as char).is_whitespace()
                    && bytes[pos] != b'='
                    && bytes[pos] != b'>'
                    && bytes[pos] != b'/'
                {
                    pos += 1;
                }
                let attr_name = html[attr_start..pos].to_lowercase();
                if attr_name.is_empty() {
                    pos += 1;
                    continue;
                }
                while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'=' {
                    pos += 1;
                    while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
                        pos += 1;
                    }
                    let (value, span, quote, next) = parse_attr_value(html, pos);
                    attrs.push(Attr { name: attr_name, value, value_span: span, quote });
                    pos = next;
                } else {
                    attrs.push(Attr {
                        name: attr_name,
                        value: String::new(),
                        value_span: pos..pos,
                        quote: AttrQuote::Empty,
                    });
                }
            }
        }
    }
    (ParsedTag { name, attrs, self_closing }, pos)
}

fn parse_attr_value(html: &str, start: usize) -> (String, Range<usize>, AttrQuote, usize) {
    let bytes = html.as_bytes();
    if start >= bytes.len() {
        return (String::new(), start..start, AttrQuote::Empty, start);
    }
    match bytes[start] {
        q @ (b'"' | b'\'') => {
            let vstart = start + 1;
            let mut pos = vstart;
            while pos < bytes.len() && bytes[pos] != q {
                pos += 1;
            }
            let quote = if q == b'"' { AttrQuote::Double } else { AttrQuote::Single };
            let end = (pos + 1).min(bytes.len());
            (html[vstart..pos].to_string(), vstart..pos, quote, end)
        }
        _ => {
            let vstart = start;
            let mut pos = vstart;
            while pos < bytes.len()
                && !(bytes[pos] as char).is_whitespace()
                && bytes[pos] != b'>'
            {
                pos += 1;
            }
            (html[vstart..pos].to_string(), vstart..pos, AttrQuote::Unquoted, pos)
        }
    }
}

/// Syntactic position of a byte offset in a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HtmlPosition {
    Text,
    Comment,
    RawText { element: String },
    /// Inside a tag's attribute value.
    AttrValue { tag: String, attr: String, quote: AttrQuote },
    /// Inside a tag but not in any attribute value (name space, separators).
    TagInternal { tag: String },
}

/// Classify the syntactic position of `offset` by scanning from the start of
/// the document, never by pattern-matching the surrounding bytes.
pub fn position_at(html: &str, offset: usize) -> HtmlPosition {
    for token in tokenize(html) {
        match &token {
            Token::Text { span } => {
                if span.contains(&offset) {
                    return HtmlPosition::Text;
                }
            }
            Token::Comment { span } => {
                if span.contains(&offset) {
                    return HtmlPosition::Comment;
                }
            }
            Token::RawText { element, span } => {
                if span.contains(&offset) {
                    return HtmlPosition::RawText { element: element.clone() };
                }
            }
            Token::StartTag { name, attrs, span, .. } => {
                if span.contains(&offset) {
                    for attr in attrs {
                        if attr.value_span.contains(&offset) {
                            return HtmlPosition::AttrValue {
                                tag: name.clone(),
                                attr: attr.name.clone(),
                                quote: attr.quote,
                            };
                        }
                    }
                    return HtmlPosition::TagInternal { tag: name.clone() };
                }
            }
            Token::EndTag { span, .. } => {
                if span.contains(&offset) {
                    return HtmlPosition::Text;
                }
            }
        }
    }
    HtmlPosition::Text
}

pub fn is_url_attribute(attr: &str) -> bool {
    URL_ATTRIBUTES.contains(&attr)
}

/// JS lexical position of an offset within a script body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsPosition {
    Code,
    SingleQuoted,
    DoubleQuoted,
    TemplateLiteral,
    Comment,
}

/// Scan JS source up to `offset`, tracking string literals and comments.
pub fn js_position_at(js: &str, offset: usize) -> JsPosition {
    let bytes = js.as_bytes();
    let mut pos = 0;
    let mut state = JsPosition::Code;
    while pos < offset && pos < bytes.len() {
        let c = bytes[pos];
        match state {
            JsPosition::Code => match c {
                b'\'' => state = JsPosition::SingleQuoted,
                b'"' => state = JsPosition::DoubleQuoted,
                b'`' => state = JsPosition::TemplateLiteral,
                b'/' if pos + 1 < bytes.len() && bytes[pos + 1] == b'/' => {
                    let end = js[pos..].find('\n').map(|i| pos + i).unwrap_or(bytes.len());
                    if offset < end {
                        return JsPosition::Comment;
                    }
                    pos = end;
                    continue;
                }
                b'/' if pos + 1 < bytes.len() && bytes[pos + 1] == b'*' => {
                    let end =
                        js[pos + 2..].find("*/").map(|i| pos + 2 + i + 2).unwrap_or(bytes.len());
                    if offset < end {
                        return JsPosition::Comment;
                    }
                    pos = end;
                    continue;
                }
                _ => {}
            },
            JsPosition::SingleQuoted => match c {
                b'\\' => pos += 1,
                b'\'' => state = JsPosition::Code,
                _ => {}
            },
            JsPosition::DoubleQuoted => match c {
                b'\\' => pos += 1,
                b'"' => state = JsPosition::Code,
                _ => {}
            },
            JsPosition::TemplateLiteral => match c {
                b'\\' => pos += 1,
                b'`' => state = JsPosition::Code,
                _ => {}
            },
            JsPosition::Comment => unreachable!("comments are skipped inline"),
        }
        pos += 1;
    }
    state
}

/// Decode the HTML entities that matter for reflection analysis.
pub fn decode_entities(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(idx) = rest.find('&') {
        out.push_str(&rest[..idx]);
        rest = &rest[idx..];
        let decoded = [
            ("&lt;", "<"),
            ("&gt;", ">"),
            ("&amp;", "&"),
            ("&quot;", "\""),
            ("&#x27;", "'"),
            ("&#39;", "'"),
            ("&#x2F;", "/"),
            ("&#47;", "/"),
        ]
        .iter()
        .find(|(ent, _)| rest.len() >= ent.len() && rest[..ent.len()].eq_ignore_ascii_case(ent));
        match decoded {
            Some((ent, rep)) => {
                out.push_str(rep);
                rest = &rest[ent.len()..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// A flattened element view used by the harness and by form extraction.
#[derive(Debug, Clone)]
pub struct ElementInfo {
    pub name: String,
    pub attrs: Vec<Attr>,
    /// Raw content for raw-text elements (script, style, ...).
    pub raw_content: Option<String>,
    pub span: Range<usize>,
}

impl ElementInfo {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|a| a.name == name).map(|a| a.value.as_str())
    }

    pub fn has_attr(&self, name: &str) -> bool {
        self.attrs.iter().any(|a| a.name == name)
    }
}

/// Flatten the document into its element stream, pairing raw-text elements
/// with their content.
pub fn elements(html: &str) -> Vec<ElementInfo> {
    let tokens = tokenize(html);
    let mut out: Vec<ElementInfo> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if let Token::StartTag { name, attrs, span, .. } = &tokens[i] {
            let mut info = ElementInfo {
                name: name.clone(),
                attrs: attrs.clone(),
                raw_content: None,
                span: span.clone(),
            };
            if let Some(Token::RawText { span: content, .. }) = tokens.get(i + 1) {
                info.raw_content = Some(html[content.clone()].to_string());
                i += 1;
            }
            out.push(info);
        }
        i += 1;
    }
    out
}

/// Text content of the document with tags removed (entity-encoded text kept
/// verbatim). Used to decide whether a marker appears only as inert text.
pub fn text_content(html: &str) -> String {
    let mut out = String::new();
    for token in tokenize(html) {
        if let Token::Text { span } = token {
            out.push_str(&html[span]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_tags_text_and_comments() {
        let html = r#"<div class="a">hi</div><!-- note --><img src=x>"#;
        let tokens = tokenize(html);
        assert!(matches!(&tokens[0], Token::StartTag { name, .. } if name == "div"));
        assert!(matches!(&tokens[1], Token::Text { span } if &html[span.clone()] == "hi"));
        assert!(matches!(&tokens[2], Token::EndTag { name, .. } if name == "div"));
        assert!(matches!(&tokens[3], Token::Comment { .. }));
        assert!(matches!(&tokens[4], Token::StartTag { name, .. } if name == "img"));
    }

    #[test]
    fn script_content_is_raw_text() {
        let html = "<script>var a = '<div>';</script><p>x</p>";
        let tokens = tokenize(html);
        let raw = tokens.iter().find_map(|t| match t {
            Token::RawText { element, span } if element == "script" => Some(&html[span.clone()]),
            _ => None,
        });
        assert_eq!(raw, Some("var a = '<div>';"));
    }

    #[test]
    fn position_in_element_text() {
        let html = "<div>CANARY</div>";
        let off = html.find("CANARY").unwrap();
        assert_eq!(position_at(html, off), HtmlPosition::Text);
    }

    #[test]
    fn position_in_double_quoted_attribute() {
        let html = r#"<input value="CANARY">"#;
        let off = html.find("CANARY").unwrap();
        assert_eq!(
            position_at(html, off),
            HtmlPosition::AttrValue {
                tag: "input".into(),
                attr: "value".into(),
                quote: AttrQuote::Double
            }
        );
    }

    #[test]
    fn position_in_unquoted_attribute() {
        let html = "<input value=CANARY>";
        let off = html.find("CANARY").unwrap();
        assert_eq!(
            position_at(html, off),
            HtmlPosition::AttrValue {
                tag: "input".into(),
                attr: "value".into(),
                quote: AttrQuote::Unquoted
            }
        );
    }

    #[test]
    fn position_in_comment_and_script() {
        let html = "<!-- CANARY --><script>var q='CANARY';</script>";
        let c = html.find("CANARY").unwrap();
        assert_eq!(position_at(html, c), HtmlPosition::Comment);
        let s = html.rfind("CANARY").unwrap();
        assert_eq!(position_at(html, s), HtmlPosition::RawText { element: "script".into() });
    }

    #[test]
    fn js_position_tracks_strings_and_comments() {
        let js = "var q = 'CANARY'; // CANARY\nvar r = \"CANARY\"; `CANARY`";
        let first = js.find("CANARY").unwrap();
        assert_eq!(js_position_at(js, first), JsPosition::SingleQuoted);
        let in_comment = js.find("// CANARY").unwrap() + 3;
        assert_eq!(js_position_at(js, in_comment), JsPosition::Comment);
        let dq = js.find("\"CANARY\"").unwrap() + 1;
        assert_eq!(js_position_at(js, dq), JsPosition::DoubleQuoted);
        let tl = js.find("`CANARY`").unwrap() + 1;
        assert_eq!(js_position_at(js, tl), JsPosition::TemplateLiteral);
    }

    #[test]
    fn js_escaped_quote_stays_in_string() {
        let js = r"var q = '\';CANARY';";
        let off = js.find("CANARY").unwrap();
        assert_eq!(js_position_at(js, off), JsPosition::SingleQuoted);
    }

    #[test]
    fn elements_flatten_with_raw_content() {
        let html = "<img src=x onerror=hook()><script>code()</script>";
        let els = elements(html);
        assert_eq!(els.len(), 2);
        assert_eq!(els[0].name, "img");
        assert_eq!(els[0].attr("onerror"), Some("hook()"));
        assert_eq!(els[1].raw_content.as_deref(), Some("code()"));
    }

    #[test]
    fn slash_separated_attributes_parse() {
        // Slash separates attributes after quoted values or bare names; inside
        // an unquoted value it is value text, matching HTML5 tokenization.
        let html = "<img/src='x'/onerror=hook()>";
        let els = elements(html);
        assert_eq!(els[0].attr("src"), Some("x"));
        assert_eq!(els[0].attr("onerror"), Some("hook()"));
        let els = elements("<svg/onload=hook()>");
        assert_eq!(els[0].attr("onload"), Some("hook()"));
    }

    #[test]
    fn gt_inside_quoted_attr_does_not_close_tag() {
        let html = r#"<a title="a > b" href="/x">t</a>"#;
        let els = elements(html);
        assert_eq!(els[0].attr("href"), Some("/x"));
        assert_eq!(els[0].attr("title"), Some("a > b"));
    }

    #[test]
    fn decode_entities_basic() {
        assert_eq!(decode_entities("&lt;script&gt;"), "<script>");
        assert_eq!(decode_entities("a &amp;&quot; b &#x27;c"), "a &\" b 'c");
        assert_eq!(decode_entities("no entities & loose amp"), "no entities & loose amp");
    }

    #[test]
    fn text_content_skips_markup() {
        let html = "<div>alpha</div><script>beta()</script><p>gamma &lt;x&gt;</p>";
        let text = text_content(html);
        assert!(text.contains("alpha"));
        assert!(text.contains("gamma"));
        assert!(!text.contains("beta"));
    }
}
