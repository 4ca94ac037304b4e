//! Acceptance suite: one test per criterion, each printing a PASS line.
//! Every tolerance and threshold is pinned here, in code.

use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use awe_core::budget::{Budget, BudgetLimits};
use awe_core::http::{HttpConfig, HttpEngine, RequestSpec};
use awe_core::lab::manifest::{default_manifest, ChallengeSpec, DEFAULT_MANIFEST_SEED};
use awe_core::lab::{self, LabHandle};
use awe_core::orchestrator::{run_scan, ScanConfig, ScanReport, ScanRunner, ScanStatus};
use awe_core::state::{DigestConfig, EvidenceKind, FlagPattern, VulnClass};
use awe_core::verifier;

fn awe_bin() -> &'static str {
    env!("CARGO_BIN_EXE_awe")
}

fn rt() -> tokio::runtime::Runtime {
    tokio::runtime::Runtime::new().expect("tokio runtime")
}

async fn start_lab() -> LabHandle {
    lab::serve(default_manifest(DEFAULT_MANIFEST_SEED), DEFAULT_MANIFEST_SEED, None, None)
        .await
        .expect("lab starts")
}

fn lib_config(seed: u64) -> ScanConfig {
    ScanConfig { seed, provider: Some("stub".into()), ..Default::default() }
}

struct CliScan {
    exit_code: i32,
    report: Option<ScanReport>,
    elapsed: Duration,
}

fn cli_scan(target: &str, report_path: &PathBuf, extra: &[&str]) -> CliScan {
    let started = Instant::now();
    let status = Command::new(awe_bin())
        .arg("scan")
        .arg(target)
        .arg("--provider")
        .arg("stub")
        .arg("--report-out")
        .arg(report_path)
        .args(extra)
        .env_remove("AWE_PROVIDER")
        .output()
        .expect("awe scan runs");
    let elapsed = started.elapsed();
    let report = std::fs::read_to_string(report_path)
        .ok()
        .and_then(|text| serde_json::from_str::<serde_json::Value>(&text).ok())
        .and_then(|doc| ScanReport::from_json(&doc).ok());
    CliScan { exit_code: status.status.code().unwrap_or(-1), report, elapsed }
}

fn manifest_by_id(id: &str) -> ChallengeSpec {
    default_manifest(DEFAULT_MANIFEST_SEED)
        .into_iter()
        .find(|c| c.id == id)
        .expect("challenge exists")
}

/// Criterion 1: with the stub provider and the default 18-challenge
/// manifest, `awe scan` captures the flag on all 16 non-control challenges
/// and reports zero findings on both controls; each challenge < 90 s, full
/// suite < 15 min.
#[test]
fn criterion_01_end_to_end_solvability_matrix() {
    let suite_started = Instant::now();
    let rt = rt();
    let lab = rt.block_on(start_lab());
    let manifest = lab.manifest.clone();
    let tmp = tempfile::tempdir().expect("tempdir");

    let mut pending: Vec<ChallengeSpec> = manifest.clone();
    let mut results: Vec<(String, CliScan)> = Vec::new();
    // Chunked parallel CLI runs; each challenge's state is isolated.
    while !pending.is_empty() {
        let chunk: Vec<ChallengeSpec> =
            pending.drain(..pending.len().min(6)).collect();
        let handles: Vec<_> = chunk
            .into_iter()
            .map(|challenge| {
                let target = lab.challenge_url(&challenge.id).to_string();
                let path = tmp.path().join(format!("{}.json", challenge.id));
                std::thread::spawn(move || {
                    (challenge, cli_scan(&target, &path, &["--seed", "11"]))
                })
            })
            .collect();
        for handle in handles {
            let (challenge, scan) = handle.join().expect("scan thread");
            results.push((challenge.id.clone(), scan));
        }
    }

    for (id, scan) in &results {
        let challenge = manifest_by_id(id);
        let report = scan.report.as_ref().unwrap_or_else(|| panic!("{id}: report written"));
        assert!(
            scan.elapsed < Duration::from_secs(90),
            "{id}: completed in {:?} (< 90 s required)",
            scan.elapsed
        );
        if challenge.is_control() {
            assert_eq!(scan.exit_code, 2, "{id}: control exits 2 (no findings)");
            assert!(report.findings.is_empty(), "{id}: control yields zero findings");
            assert!(report.solved_flags.is_empty(), "{id}: control yields no flag");
        } else {
            assert_eq!(scan.exit_code, 0, "{id}: solvable challenge exits 0");
            assert!(
                report.solved_flags.contains(&challenge.flag),
                "{id}: captured flag equals the manifest flag"
            );
        }
    }
    assert!(
        suite_started.elapsed() < Duration::from_secs(900),
        "full matrix under 15 minutes"
    );
    println!(
        "ACCEPTANCE 1 solvability-matrix: PASS (16 solved, 2 controls clean, {:?} total)",
        suite_started.elapsed()
    );
}

/// Criterion 2: no injection request is issued after wall-limit + 1 s; a
/// forced 1 s budget halts with a graceful partial report and exit 1/2.
#[test]
fn criterion_02_budget_enforcement() {
    let rt = rt();
    let lab = rt.block_on(start_lab());

    // Hard stop at the engine: requests against a slow endpoint stop being
    // issued once the wall limit passes; one in-flight request may finish.
    let wall_limit_s = 1.5_f64;
    let budget = Arc::new(Budget::new(BudgetLimits { wall_limit_s, ..Default::default() }));
    let engine = HttpEngine::new(HttpConfig::default(), budget.clone()).expect("engine");
    let slow_url = lab
        .base_url
        .join("c/sqli-blind/item?id=1%27%20AND%20SLEEP(1)--%20")
        .expect("url");
    rt.block_on(async {
        loop {
            let spec = RequestSpec::get(slow_url.clone()).phase("exploit");
            match engine.send(spec).await {
                Ok(_) => {}
                Err(err) => {
                    assert!(err.is_budget(), "engine stops with a budget error: {err}");
                    break;
                }
            }
        }
    });
    let audit = engine.audit_snapshot();
    assert!(!audit.is_empty());
    let limit_ms = (wall_limit_s * 1000.0) as u64;
    for record in &audit {
        let issued_at = record.ts_ms.saturating_sub(record.elapsed_ms);
        assert!(
            issued_at <= limit_ms + 1_000,
            "no request issued after wall-limit + 1 s (issued at {issued_at} ms)"
        );
    }
    let straddlers = audit.iter().filter(|r| r.ts_ms > limit_ms).count();
    assert!(straddlers <= 1, "at most one already-in-flight request completes");

    // Forced 1 s budget through the CLI: graceful partial report.
    let tmp = tempfile::tempdir().expect("tempdir");
    let path = tmp.path().join("budget.json");
    let scan = cli_scan(
        lab.challenge_url("sqli-blind").as_str(),
        &path,
        &["--time-budget", "1", "--seed", "11"],
    );
    assert!(
        scan.exit_code == 1 || scan.exit_code == 2,
        "forced exhaustion exits 1 or 2, got {}",
        scan.exit_code
    );
    let report = scan.report.expect("partial report written");
    assert_eq!(report.status, ScanStatus::BudgetExhausted);
    println!("ACCEPTANCE 2 budget-enforcement: PASS");
}

fn xss_challenge_ids() -> Vec<&'static str> {
    vec!["xss-raw-none", "xss-raw-basic", "xss-attr-basic", "xss-js-none", "xss-js-basic", "xss-stored"]
}

fn scan_many(ids: &[&str], seed: u64) -> Vec<(String, ScanReport)> {
    let rt = rt();
    rt.block_on(async {
        let lab = start_lab().await;
        let mut handles = Vec::new();
        for id in ids {
            let url = lab.challenge_url(id);
            let cfg = lib_config(seed);
            let id = id.to_string();
            handles.push(tokio::spawn(async move {
                (id, run_scan(url, &cfg).await.expect("scan completes"))
            }));
        }
        let mut out = Vec::new();
        for handle in handles {
            out.push(handle.await.expect("scan task"));
        }
        out
    })
}

/// Criterion 3: every solved lab XSS challenge uses at most 40 exploit
/// attempts (the observed convergence band's upper bound).
#[test]
fn criterion_03_xss_attempt_regression_guard() {
    let results = scan_many(&xss_challenge_ids(), 13);
    for (id, report) in &results {
        assert!(!report.solved_flags.is_empty(), "{id} solved");
        for finding in report.findings.iter().filter(|f| f.vuln_class == VulnClass::Xss) {
            assert!(
                finding.exploit_attempts <= 40,
                "{id}: {} exploit attempts within the hard bound of 40",
                finding.exploit_attempts
            );
        }
    }
    println!("ACCEPTANCE 3 xss-attempt-guard: PASS ({} challenges)", results.len());
}

/// Criterion 4: the inferred FilterModel char_map equals the lab's
/// documented filter function behavior for 100% of probed characters on all
/// filter levels.
#[test]
fn criterion_04_filter_inference_soundness() {
    use awe_core::agents::xss::{probe_filters, ReflectionObservation, PROBE_ALPHABET};
    use awe_core::agents::{AgentConfig, AgentCx};
    use awe_core::lab::filters::{char_fate, CharFate, FilterId};
    use awe_core::lab::manifest::ChallengeKind;
    use awe_core::llm::LlmGateway;
    use awe_core::memory::{LongTermStore, ShortTermMemory};
    use awe_core::payload::{CharTransform, MarkerGen};
    use awe_core::state::{Channel, Endpoint, InjectionPoint, ScanState};

    let rt = rt();
    let lab = rt.block_on(start_lab());
    let levels: Vec<(String, FilterId)> = lab
        .manifest
        .iter()
        .filter_map(|c| match &c.kind {
            ChallengeKind::XssReflected { filter, .. } => Some((c.id.clone(), *filter)),
            _ => None,
        })
        .collect();
    assert!(levels.len() >= 4, "all reflected filter levels covered");

    let mut checked_chars_total = 0;
    for (id, filter_id) in &levels {
        let budget = Arc::new(Budget::new(BudgetLimits::default()));
        let engine = HttpEngine::new(HttpConfig::default(), budget.clone()).expect("engine");
        let gateway = LlmGateway::stub(budget.clone());
        let long_mem = LongTermStore::in_memory(true);
        let verifier = verifier::HarnessVerifier;
        let digests = DigestConfig::default();
        let flag_pattern = FlagPattern::default();
        let config = AgentConfig::default();
        let mut markers = MarkerGen::new(5);
        let mut short_mem = ShortTermMemory::default();
        let echo_url = lab.base_url.join(&format!("c/{id}/echo?q=hello")).expect("url");
        let point = InjectionPoint {
            endpoint: Endpoint::get(echo_url.clone()),
            channel: Channel::Query,
            name: "q".into(),
            baseline_value: "hello".into(),
        };
        let mut state = ScanState::new(lab.challenge_url(id));
        state.add_point(point.clone());
        let observation = ReflectionObservation {
            point: point.key(),
            canary: "AWE00000000".into(),
            occurrences: vec![],
            page_url: Some(echo_url.to_string()),
            stored: false,
            measured: true,
        };
        let mut cx = AgentCx {
            engine: &engine,
            state: &mut state,
            short_mem: &mut short_mem,
            long_mem: &long_mem,
            llm: &gateway,
            verifier: &verifier,
            markers: &mut markers,
            digests: &digests,
            flag_pattern: &flag_pattern,
            config: &config,
            observations: &[],
            render_pages: &[],
            demo_creds: &[],
            session: None,
            deadline: None,
            tokens_at_start: 0,
        };
        let model = rt.block_on(probe_filters(&mut cx, &point, &observation)).expect("probes run");
        for c in PROBE_ALPHABET {
            let inferred = model
                .char_map
                .get(&c)
                .unwrap_or_else(|| panic!("{id}: char {c:?} probed"));
            let expected = match char_fate(*filter_id, c) {
                CharFate::Passed => CharTransform::Passed,
                CharFate::Stripped => CharTransform::Stripped,
                CharFate::HtmlEncoded => CharTransform::HtmlEncoded,
                CharFate::EscapedBackslash => CharTransform::EscapedBackslash,
                CharFate::Replaced(with) => CharTransform::Replaced { with },
            };
            assert_eq!(
                *inferred, expected,
                "{id}: transformation of {c:?} matches the lab filter function"
            );
            checked_chars_total += 1;
        }
    }
    println!(
        "ACCEPTANCE 4 filter-inference-soundness: PASS ({} levels, {} char checks)",
        levels.len(),
        checked_chars_total
    );
}

/// Criterion 5: zero execution evidence over a corpus of >= 30 inert pages;
/// evidence marker equals the payload marker on every solved XSS challenge.
#[test]
fn criterion_05_verification_soundness() {
    use awe_core::verifier::{HarnessVerifier, PageSource, VerifierBackend};

    let marker = "AWE1a2b3c4d";
    let payloads = [
        format!("<script>awe_hook('{marker}')</script>"),
        format!("<img src=x onerror=awe_hook('{marker}')>"),
        format!("<svg onload=awe_hook('{marker}')>"),
        format!("<input autofocus onfocus=awe_hook('{marker}')>"),
        format!("\"><script>awe_hook('{marker}')</script>"),
        format!("';awe_hook('{marker}');//"),
    ];
    let encode = |p: &str| {
        p.replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;")
            .replace('"', "&quot;")
            .replace('\'', "&#x27;")
    };
    let mut inert_pages: Vec<String> = Vec::new();
    for p in &payloads {
        inert_pages.push(format!("<div>{}</div>", encode(p)));
        inert_pages.push(format!("<textarea>{p}</textarea>"));
        inert_pages.push(format!("<!-- {p} -->"));
        inert_pages.push(format!("<input value=\"{}\">", encode(p)));
        inert_pages.push(format!("<script>var q = '{}';</script>", p.replace('\'', "\\'")));
    }
    inert_pages.push(format!("<p>{marker}</p>"));
    inert_pages.push(format!("<div data-x=\"{marker}\">t</div>"));
    assert!(inert_pages.len() >= 30, "corpus holds {} pages", inert_pages.len());

    let rt = rt();
    let backend = HarnessVerifier;
    for (i, html) in inert_pages.iter().enumerate() {
        let evidence = rt
            .block_on(backend.verify_execution(
                &PageSource { url: format!("http://inert/{i}"), html: html.clone() },
                marker,
            ))
            .expect("harness runs");
        assert!(evidence.is_none(), "inert page {i} yields no evidence: {html}");
    }

    // Marker binding on real solved challenges.
    let results = scan_many(&xss_challenge_ids(), 17);
    let mut bound = 0;
    for (id, report) in &results {
        for finding in report.findings.iter().filter(|f| f.vuln_class == VulnClass::Xss) {
            let payload = String::from_utf8_lossy(&finding.payload).into_owned();
            match &finding.evidence.detail {
                awe_core::state::EvidenceDetail::ExecutionObserved { marker, .. } => {
                    assert!(
                        payload.contains(marker.as_str()),
                        "{id}: evidence marker {marker} embedded in payload {payload:?}"
                    );
                    bound += 1;
                }
                other => panic!("{id}: xss evidence must be execution_observed, got {other:?}"),
            }
        }
    }
    assert!(bound >= 6, "every solved xss challenge produced bound evidence");
    println!(
        "ACCEPTANCE 5 verification-soundness: PASS ({} inert pages, {} bound markers)",
        inert_pages.len(),
        bound
    );
}

/// Criterion 6: blind-extracted secrets equal the lab secret exactly with
/// at most 7 timed probes per character; 0/20 timing false positives on the
/// control challenge.
#[test]
fn criterion_06_blind_extraction_correctness() {
    let rt = rt();
    let lab = rt.block_on(start_lab());
    let secret = manifest_by_id("sqli-blind").secret.expect("blind secret");

    let report = rt
        .block_on(run_scan(lab.challenge_url("sqli-blind"), &lib_config(19)))
        .expect("scan completes");
    assert!(report.solved_flags.contains(&manifest_by_id("sqli-blind").flag));
    let notes = serde_json::to_string(&report.agent_runs).expect("notes json");
    assert!(
        notes.contains(&format!("\"extracted\":\"{secret}\"")),
        "extracted secret equals lab secret: {notes}"
    );
    let blind_run = report
        .agent_runs
        .iter()
        .find(|r| r.agent == "sqli_blind_time")
        .expect("blind agent ran");
    // 5 baseline + 3 detection + 1 control + 7*(len+1) extraction probes +
    // final fetch + trace control.
    let max_requests = 5 + 3 + 1 + 7 * (secret.len() + 1) + 2;
    assert!(
        blind_run.requests_issued <= max_requests,
        "{} requests within the 7-probes-per-character bound ({max_requests})",
        blind_run.requests_issued
    );

    // Timing false positives: 0/20 on the control challenge.
    let mut positives = 0;
    for round in 0..20 {
        let report = rt
            .block_on(run_scan(
                lab.challenge_url("timing-control"),
                &ScanConfig {
                    agents_filter: Some(vec![VulnClass::SqliBlindTime]),
                    ..lib_config(100 + round)
                },
            ))
            .expect("control scan completes");
        if !report.findings.is_empty() {
            positives += 1;
        }
    }
    assert_eq!(positives, 0, "timing false-positive rate 0/20");
    println!("ACCEPTANCE 6 blind-extraction: PASS (secret {secret}, 0/20 false positives)");
}

/// Criterion 7: DbFingerprint and EngineId match the lab persona/engine on
/// 100% of the respective challenges.
#[test]
fn criterion_07_fingerprint_accuracy() {
    let expectations = [
        ("sqli-error", "mysql_like"),
        ("sqli-blind", "mysql_like"),
        ("ssti-jinja", "jinja_like"),
        ("ssti-erb", "erb_like"),
    ];
    let ids: Vec<&str> = expectations.iter().map(|(id, _)| *id).collect();
    let results = scan_many(&ids, 23);
    for ((id, expected), (scanned_id, report)) in expectations.iter().zip(&results) {
        assert_eq!(id, scanned_id);
        let notes = serde_json::to_string(&report.agent_runs).expect("notes");
        assert!(
            notes.contains(expected),
            "{id}: fingerprint {expected} present in agent notes"
        );
        assert!(!report.solved_flags.is_empty(), "{id} solved");
    }
    println!("ACCEPTANCE 7 fingerprint-accuracy: PASS (4/4)");
}

/// Criterion 8: a second scan of the same target in one process (long-term
/// memory enabled) issues strictly fewer injection requests.
#[test]
fn criterion_08_memory_effect() {
    let rt = rt();
    let lab = rt.block_on(start_lab());
    let config = ScanConfig { exhaustive: true, ..lib_config(29) };
    let runner = ScanRunner::new(&config).expect("runner");
    let target = lab.challenge_url("xss-raw-basic");

    let first = rt.block_on(runner.run_scan(target.clone(), &config)).expect("first scan");
    lab.reset();
    let second = rt.block_on(runner.run_scan(target, &config)).expect("second scan");

    assert!(!first.solved_flags.is_empty(), "first pass solves");
    assert!(!second.solved_flags.is_empty(), "second pass still solves");
    assert!(
        second.injection_requests < first.injection_requests,
        "second pass issues strictly fewer injection requests ({} < {})",
        second.injection_requests,
        first.injection_requests
    );
    println!(
        "ACCEPTANCE 8 memory-effect: PASS ({} -> {} injection requests)",
        first.injection_requests, second.injection_requests
    );
}

/// Criterion 9: token/cost totals equal the sum of per-call accounting to
/// the cent; 10k-in/2k-out at (3, 15) $/M costs exactly $0.06.
#[test]
fn criterion_09_accounting_exactness() {
    use awe_core::llm::PriceTable;

    let table = PriceTable::default();
    let nano = table.cost_nano(10_000, 2_000);
    assert_eq!(nano, 60_000_000, "synthetic call costs exactly $0.06");
    let usd = nano as f64 / 1e9;
    assert_eq!((usd * 100.0).round() / 100.0, 0.06);

    let results = scan_many(&["xss-raw-basic"], 31);
    let report = &results[0].1;
    assert!(report.llm.calls > 0, "stub provider was consulted");
    assert_eq!(
        report.budget.tokens_used,
        report.llm.input_tokens + report.llm.output_tokens,
        "budget counter equals the sum of per-call token counts"
    );
    let counter_cents = (report.budget.cost_used_usd * 100.0).round();
    let call_cents = (report.llm.cost_usd * 100.0).round();
    assert_eq!(counter_cents, call_cents, "cost totals agree to the cent");
    println!("ACCEPTANCE 9 accounting-exactness: PASS");
}

/// Criterion 10: fixed seed + stub provider + reset lab produce
/// byte-identical reports (after stripping timestamp/timing fields) across
/// three consecutive runs.
#[test]
fn criterion_10_determinism() {
    use awe_core::orchestrator::report::strip_volatile;

    let rt = rt();
    let lab = rt.block_on(start_lab());
    let tmp = tempfile::tempdir().expect("tempdir");
    let mut stripped: Vec<String> = Vec::new();
    for run in 0..3 {
        lab.reset();
        let path = tmp.path().join(format!("det-{run}.json"));
        let scan = cli_scan(
            lab.challenge_url("xss-raw-basic").as_str(),
            &path,
            &["--seed", "42"],
        );
        assert_eq!(scan.exit_code, 0, "run {run} solves");
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).expect("report"))
                .expect("json");
        stripped.push(serde_json::to_string(&strip_volatile(&doc)).expect("stripped json"));
    }
    assert_eq!(stripped[0], stripped[1], "runs 1 and 2 identical");
    assert_eq!(stripped[1], stripped[2], "runs 2 and 3 identical");
    println!("ACCEPTANCE 10 determinism: PASS (3 identical stripped reports)");
}

/// Criterion 11: replaying every finding's evidence trace against a freshly
/// reset lab reproduces the evidence kind, and the flag where applicable.
#[test]
fn criterion_11_replayability() {
    let rt = rt();
    let lab = rt.block_on(start_lab());
    let solvable: Vec<String> = lab
        .manifest
        .iter()
        .filter(|c| !c.is_control())
        .map(|c| c.id.clone())
        .collect();

    // Collect findings from full scans (chunked to keep timing probes calm).
    let mut all: Vec<(String, ScanReport)> = Vec::new();
    for chunk in solvable.chunks(6) {
        let reports = rt.block_on(async {
            let mut handles = Vec::new();
            for id in chunk {
                let url = lab.challenge_url(id);
                let cfg = lib_config(37);
                let id = id.clone();
                handles.push(tokio::spawn(async move {
                    (id, run_scan(url, &cfg).await.expect("scan completes"))
                }));
            }
            let mut out = Vec::new();
            for handle in handles {
                out.push(handle.await.expect("scan task"));
            }
            out
        });
        all.extend(reports);
    }

    lab.reset();
    let budget = Arc::new(Budget::new(BudgetLimits::default()));
    let engine = HttpEngine::new(HttpConfig::default(), budget).expect("replay engine");
    let pattern = FlagPattern::default();
    let digests = DigestConfig::default();

    let mut replayed = 0;
    for (id, report) in &all {
        assert!(!report.findings.is_empty(), "{id} produced findings");
        for finding in &report.findings {
            let outcome = rt
                .block_on(verifier::replay_evidence(&engine, finding, &pattern, &digests))
                .expect("replay requests succeed");
            assert!(
                outcome.reproduced,
                "{id}: {:?} evidence reproduces on replay ({})",
                finding.evidence.kind(),
                outcome.detail
            );
            if let Some(flag) = &finding.solved_flag {
                assert_eq!(
                    outcome.flag.as_ref(),
                    Some(flag),
                    "{id}: replay reproduces the captured flag"
                );
            }
            if finding.evidence.kind() == EvidenceKind::TimingDifferential {
                // Replayed timing evidence re-measures real delays.
                assert!(outcome.detail.contains("threshold"));
            }
            replayed += 1;
        }
    }
    assert!(replayed >= 16, "replayed {replayed} findings across the matrix");
    println!("ACCEPTANCE 11 replayability: PASS ({replayed} findings replayed)");
}
