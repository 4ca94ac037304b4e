//! Simulated database layer: persona-correct error strings, quote-parity
//! syntax checking, boolean conditions, and conditional-sleep semantics.

use once_cell::sync::Lazy;
use regex::Regex;

use super::manifest::Persona;

/// Persona-specific SQL syntax error body. These strings are the oracle for
/// the backend fingerprinting corpus.
pub fn syntax_error_body(persona: Persona) -> &'static str {
    match persona {
        Persona::Php => {
            "You have an error in your SQL syntax; check the manual that corresponds \
             to your MySQL server version for the right syntax to use near '''' at line 1"
        }
        Persona::Python => {
            "psycopg2.errors.SyntaxError: unterminated quoted string at or near \"'\"\nLINE 1: SELECT * FROM items WHERE id='"
        }
        Persona::Node => {
            "SQLITE_ERROR: unrecognized token: \"'\" while executing query"
        }
        Persona::Java => {
            "java.sql.SQLException: Unclosed quotation mark after the character string. \
             com.microsoft.sqlserver.jdbc.SQLServerException"
        }
    }
}

/// A query over the simulated item table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SqlOutcome {
    /// Unbalanced quoting: the surrounding `'...'` no longer parses.
    SyntaxError,
    /// A tautology widened the WHERE clause to every row.
    AllRows,
    Row(String),
    NoRow,
}

static OR_TRUE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\bor\b\s*'?(1|true)'?\s*=\s*'?(1|true)'?").expect("or-true"));
static AND_FALSE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\band\b\s*'?1'?\s*=\s*'?2'?").expect("and-false"));
static AND_TRUE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\band\b\s*'?(1|true)'?\s*=\s*'?(1|true)'?").expect("and-true"));

/// Evaluate `WHERE id='<input>'` against the known ids. SQL comments (`--`)
/// truncate the clause, matching how the injected tail disappears.
pub fn eval_item_query(input: &str, known_ids: &[&str]) -> SqlOutcome {
    let effective = match input.find("--") {
        Some(idx) => &input[..idx],
        None => input,
    };
    let quotes = effective.chars().filter(|c| *c == '\'').count();
    // The application supplies the surrounding pair; odd parity inside the
    // input leaves a dangling literal. A trailing comment swallows the
    // closing quote, flipping the parity requirement.
    let balanced = if input.contains("--") { quotes % 2 == 1 } else { quotes % 2 == 0 };
    if !balanced {
        return SqlOutcome::SyntaxError;
    }
    if OR_TRUE.is_match(effective) {
        return SqlOutcome::AllRows;
    }
    if AND_FALSE.is_match(effective) {
        return SqlOutcome::NoRow;
    }
    let lead: String = effective
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect();
    let id_matches = known_ids.contains(&lead.as_str());
    if AND_TRUE.is_match(effective) {
        return if id_matches { SqlOutcome::Row(lead) } else { SqlOutcome::NoRow };
    }
    // Any other trailing injected text after a quoted id keeps the literal
    // from matching a real id.
    let exact = effective == lead;
    if id_matches && (exact || effective.trim_end_matches('\'') == lead) {
        SqlOutcome::Row(lead)
    } else {
        SqlOutcome::NoRow
    }
}

static SLEEP_CALL: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)\b(?:sleep|pg_sleep)\(\s*(\d+(?:\.\d+)?)\s*\)").expect("sleep call")
});
static IF_SLEEP: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)\bif\(\s*(.+?)\s*,\s*sleep\(\s*(\d+(?:\.\d+)?)\s*\)\s*,\s*0\s*\)")
        .expect("if-sleep")
});
static ASCII_SUBSTR: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"(?i)ascii\(\s*substring\(\s*\(\s*select\s+secret\s*\)\s*,\s*(\d+)\s*,\s*1\s*\)\s*\)\s*(<=|>=|<|>|=)\s*(\d+)",
    )
    .expect("ascii-substr")
});

/// Milliseconds of simulated query delay for a blind-SQLi input.
///
/// Recognized forms (MySQL persona grammar):
///   `... SLEEP(d) ...`                       -> unconditional delay
///   `... IF(<cond>, SLEEP(d), 0) ...`        -> delay iff cond holds
/// where `<cond>` is `ASCII(SUBSTRING((SELECT secret),P,1)) <op> N`.
/// Delays are expressed in seconds and capped by `cap_ms`.
pub fn blind_delay_ms(input: &str, secret: &str, cap_ms: u64) -> u64 {
    if let Some(caps) = IF_SLEEP.captures(input) {
        let cond = caps.get(1).expect("cond").as_str();
        let seconds: f64 = caps[2].parse().unwrap_or(0.0);
        if eval_condition(cond, secret) {
            return ((seconds * 1000.0) as u64).min(cap_ms);
        }
        return 0;
    }
    if let Some(caps) = SLEEP_CALL.captures(input) {
        let seconds: f64 = caps[1].parse().unwrap_or(0.0);
        return ((seconds * 1000.0) as u64).min(cap_ms);
    }
    0
}

fn eval_condition(cond: &str, secret: &str) -> bool {
    if let Some(caps) = ASCII_SUBSTR.captures(cond) {
        let pos: usize = caps[1].parse().unwrap_or(0);
        let op = &caps[2];
        let rhs: u32 = caps[3].parse().unwrap_or(0);
        // 1-based SUBSTRING; beyond the end yields '' whose ASCII() is 0.
        let code = secret.chars().nth(pos.saturating_sub(1)).map(|c| c as u32).unwrap_or(0);
        return match op {
            "<" => code < rhs,
            ">" => code > rhs,
            "=" => code == rhs,
            "<=" => code <= rhs,
            ">=" => code >= rhs,
            _ => false,
        };
    }
    matches!(cond.trim(), "1=1" | "'1'='1'" | "true")
}
