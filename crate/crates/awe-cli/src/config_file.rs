//! Optional key-value configuration file mirroring every scan flag.
//!
//! Format: one `key = value` per line, `#` comments. Keys use the flag names
//! without the leading dashes (e.g. `time-budget = 300`). Explicit CLI flags
//! override file values; environment variables override neither.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::parser::ValueSource;
use clap::ArgMatches;

use awe_core::orchestrator::ScanConfig;
use awe_core::verifier::VerifierChoice;

use crate::{parse_agents, ScanArgs, VerifierArg};

pub fn parse_lines(text: &str) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Apply a config file onto the defaults.
pub fn apply(config: &mut ScanConfig, path: &Path) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(path)?;
    for (key, value) in parse_lines(&text)? {
        set_key(config, &key, &value).with_context(|| format!("key {key:?}"))?;
    }
    Ok(())
}

fn set_key(config: &mut ScanConfig, key: &str, value: &str) -> anyhow::Result<()> {
    match key {
        "time-budget" => config.limits.wall_limit_s = value.parse()?,
        "token-budget" => config.limits.token_limit = value.parse()?,
        "cost-budget" => config.limits.cost_limit_usd = value.parse()?,
        "provider" => config.provider = Some(value.to_string()),
        "aggressive" => config.aggressive = value.parse()?,
        "agents" => {
            let names: Vec<String> = value.split(',').map(|s| s.trim().to_string()).collect();
            config.agents_filter = Some(parse_agents(&names)?);
        }
        "report-out" => config.report_out = Some(PathBuf::from(value)),
        "exhaustive" => config.exhaustive = value.parse()?,
        "memory-file" => config.memory_file = Some(PathBuf::from(value)),
        "no-long-term" => config.long_term_enabled = !value.parse::<bool>()?,
        "seed" => config.seed = value.parse()?,
        "surface-out" => config.surface_out = Some(PathBuf::from(value)),
        "verifier" => config.verifier = value.parse().map_err(|e: String| anyhow!(e))?,
        "rate-limit" => config.http.rate_limit_per_s = value.parse()?,
        "max-pages" => config.recon.max_pages = value.parse()?,
        "flag-pattern" => config.flag_pattern = value.to_string(),
        other => bail!("unknown config key {other:?}"),
    }
    Ok(())
}

fn from_cli(matches: &ArgMatches, flag: &str) -> bool {
    matches.value_source(flag) == Some(ValueSource::CommandLine)
}

/// Overlay explicit CLI flags on top of whatever the config file set.
/// Defaulted flags never clobber file values.
pub fn overlay_cli(
    config: &mut ScanConfig,
    args: &ScanArgs,
    matches: &ArgMatches,
) -> anyhow::Result<()> {
    if from_cli(matches, "time_budget") {
        config.limits.wall_limit_s = args.time_budget;
    }
    if from_cli(matches, "token_budget") {
        config.limits.token_limit = args.token_budget;
    }
    if from_cli(matches, "cost_budget") {
        config.limits.cost_limit_usd = args.cost_budget;
    }
    if args.provider.is_some() {
        config.provider = args.provider.clone();
    }
    if from_cli(matches, "aggressive") {
        config.aggressive = args.aggressive;
    }
    if let Some(names) = &args.agents {
        config.agents_filter = Some(parse_agents(names)?);
    }
    if args.report_out.is_some() {
        config.report_out = args.report_out.clone();
    }
    if from_cli(matches, "exhaustive") {
        config.exhaustive = args.exhaustive;
    }
    if args.memory_file.is_some() {
        config.memory_file = args.memory_file.clone();
    }
    if from_cli(matches, "no_long_term") {
        config.long_term_enabled = !args.no_long_term;
    }
    if from_cli(matches, "seed") {
        config.seed = args.seed;
    }
    if args.surface_out.is_some() {
        config.surface_out = args.surface_out.clone();
    }
    if from_cli(matches, "verifier") {
        config.verifier = match args.verifier {
            VerifierArg::Harness => VerifierChoice::Harness,
            VerifierArg::Browser => VerifierChoice::Browser,
        };
    }
    if from_cli(matches, "rate_limit") {
        config.http.rate_limit_per_s = args.rate_limit;
    }
    if from_cli(matches, "max_pages") {
        config.recon.max_pages = args.max_pages;
    }
    if from_cli(matches, "flag_pattern") {
        config.flag_pattern = args.flag_pattern.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_value_lines() {
        let lines = parse_lines("# comment\n time-budget = 120 \n\nseed=9\n").unwrap();
        assert_eq!(
            lines,
            vec![
                ("time-budget".to_string(), "120".to_string()),
                ("seed".to_string(), "9".to_string())
            ]
        );
        assert!(parse_lines("not a pair").is_err());
    }

    #[test]
    fn applies_known_keys() {
        let mut config = ScanConfig::default();
        set_key(&mut config, "time-budget", "120").unwrap();
        set_key(&mut config, "seed", "7").unwrap();
        set_key(&mut config, "no-long-term", "true").unwrap();
        set_key(&mut config, "agents", "xss, sqli_error").unwrap();
        assert_eq!(config.limits.wall_limit_s, 120.0);
        assert_eq!(config.seed, 7);
        assert!(!config.long_term_enabled);
        assert_eq!(config.agents_filter.as_ref().unwrap().len(), 2);
        assert!(set_key(&mut config, "bogus", "1").is_err());
    }
}
