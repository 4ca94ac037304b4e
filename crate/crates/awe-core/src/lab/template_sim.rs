//! Template-engine simulators implementing the probe decision-table
//! semantics: jinja-like `{{ }}` evaluation and erb-like `<%= %>` evaluation.

use once_cell::sync::Lazy;
use regex::Regex;

use super::manifest::EngineKind;

static INT_MUL: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^\s*(\d+)\s*\*\s*(\d+)\s*$").expect("int mul"));
static INT_STR_MUL: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^\s*(\d+)\s*\*\s*'([^']*)'\s*$").expect("int-str mul"));

/// Evaluate one expression the way the simulated engine would.
/// `secret` is the template variable the exploitation payload reads.
fn eval_expr(engine: EngineKind, expr: &str, secret: &str) -> Option<String> {
    if let Some(caps) = INT_MUL.captures(expr) {
        let a: u64 = caps[1].parse().ok()?;
        let b: u64 = caps[2].parse().ok()?;
        return Some((a * b).to_string());
    }
    if let Some(caps) = INT_STR_MUL.captures(expr) {
        let n: u64 = caps[1].parse().ok()?;
        let s = &caps[2];
        return match engine {
            // Jinja: int * str is sequence repetition.
            EngineKind::JinjaLike => Some(s.repeat(n as usize)),
            // Erb (Ruby): Integer#* with a String raises; renders nothing.
            EngineKind::ErbLike => Some(String::new()),
        };
    }
    match expr.trim() {
        "secret" => Some(secret.to_string()),
        "config" => Some(format!("Config(SECRET='{secret}')")),
        // Undefined names render empty, jinja-style.
        _ => Some(String::new()),
    }
}

/// Render attacker input through the simulated engine. Only the engine's own
/// delimiters evaluate; all other delimiter styles pass through literally.
pub fn render(engine: EngineKind, input: &str, secret: &str) -> String {
    match engine {
        EngineKind::JinjaLike => render_delimited(input, "{{", "}}", |e| {
            eval_expr(EngineKind::JinjaLike, e, secret)
        }),
        EngineKind::ErbLike => render_delimited(input, "<%=", "%>", |e| {
            eval_expr(EngineKind::ErbLike, e, secret)
        }),
    }
}

fn render_delimited(
    input: &str,
    open: &str,
    close: &str,
    eval: impl Fn(&str) -> Option<String>,
) -> String {
    let mut out = String::with_capacity(input.len());
    let mut rest = input;
    while let Some(start) = rest.find(open) {
        out.push_str(&rest[..start]);
        let after = &rest[start + open.len()..];
        match after.find(close) {
            Some(end) => {
                let expr = &after[..end];
                match eval(expr) {
                    Some(rendered) => out.push_str(&rendered),
                    None => {
                        out.push_str(open);
                        out.push_str(expr);
                        out.push_str(close);
                    }
                }
                rest = &after[end + close.len()..];
            }
            None => {
                out.push_str(open);
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jinja_probe_matrix() {
        let s = "s3cr3t";
        assert_eq!(render(EngineKind::JinjaLike, "{{7*7}}", s), "49");
        assert_eq!(render(EngineKind::JinjaLike, "{{7*'7'}}", s), "7777777");
        assert_eq!(render(EngineKind::JinjaLike, "${7*7}", s), "${7*7}");
        assert_eq!(render(EngineKind::JinjaLike, "<%= 7*7 %>", s), "<%= 7*7 %>");
        assert_eq!(render(EngineKind::JinjaLike, "#{7*7}", s), "#{7*7}");
    }

    #[test]
    fn erb_probe_matrix() {
        let s = "s3cr3t";
        assert_eq!(render(EngineKind::ErbLike, "<%= 7*7 %>", s), "49");
        assert_eq!(render(EngineKind::ErbLike, "{{7*7}}", s), "{{7*7}}");
        assert_eq!(render(EngineKind::ErbLike, "{{7*'7'}}", s), "{{7*'7'}}");
        assert_eq!(render(EngineKind::ErbLike, "${7*7}", s), "${7*7}");
    }

    #[test]
    fn secret_read_renders_the_flag_material() {
        assert_eq!(render(EngineKind::JinjaLike, "{{secret}}", "FLAG{aa}"), "FLAG{aa}");
        assert_eq!(render(EngineKind::ErbLike, "<%= secret %>", "FLAG{bb}"), "FLAG{bb}");
    }

    #[test]
    fn arbitrary_products_evaluate() {
        assert_eq!(render(EngineKind::JinjaLike, "x{{123*457}}y", "s"), "x56211y");
    }

    #[test]
    fn plain_text_passes_through() {
        assert_eq!(render(EngineKind::JinjaLike, "hello world", "s"), "hello world");
    }
}
