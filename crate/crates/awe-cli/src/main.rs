//! `awe`: run scans, serve the built-in vulnerable lab, render reports.

mod config_file;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use url::Url;

use awe_core::lab;
use awe_core::orchestrator::{run_scan, ScanConfig, ScanReport};
use awe_core::state::VulnClass;

const EXIT_FLAG_CAPTURED: u8 = 0;
const EXIT_FINDINGS_NO_FLAG: u8 = 1;
const EXIT_NO_FINDINGS: u8 = 2;
const EXIT_FATAL: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "awe", version, about = "Adaptive web exploitation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan one target URL with the full agent pipeline.
    Scan(ScanArgs),
    /// Built-in deterministic vulnerable lab.
    Lab {
        #[command(subcommand)]
        command: LabCommand,
    },
    /// Render an awe-report-v1 file.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VerifierArg {
    Harness,
    Browser,
}

#[derive(Parser, Debug)]
struct ScanArgs {
    /// Target base URL.
    target: String,
    /// Wall-clock budget in seconds.
    #[arg(long, default_value_t = 600.0)]
    time_budget: f64,
    /// LLM token budget for the scan.
    #[arg(long, default_value_t = 200_000)]
    token_budget: u64,
    /// LLM cost budget in USD.
    #[arg(long, default_value_t = 1.0)]
    cost_budget: f64,
    /// LLM provider (stub | http). Defaults to $AWE_PROVIDER, then stub.
    #[arg(long)]
    provider: Option<String>,
    /// Run every precondition-passing agent.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    aggressive: bool,
    /// Restrict to a comma-separated agent list (e.g. xss,sqli_error).
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<String>>,
    /// Write the JSON report here.
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// Keep scanning after a flag capture.
    #[arg(long, default_value_t = false)]
    exhaustive: bool,
    /// Long-term memory file (awe-memory-v1).
    #[arg(long)]
    memory_file: Option<PathBuf>,
    /// Disable long-term memory.
    #[arg(long, default_value_t = false)]
    no_long_term: bool,
    /// PRNG seed for markers and sampling (reproducibility).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the awe-surface-v1 dump here.
    #[arg(long)]
    surface_out: Option<PathBuf>,
    /// Verification backend.
    #[arg(long, value_enum, default_value_t = VerifierArg::Harness)]
    verifier: VerifierArg,
    /// Per-host request rate limit (req/s).
    #[arg(long, default_value_t = 20)]
    rate_limit: u32,
    /// Crawl page budget.
    #[arg(long, default_value_t = 50)]
    max_pages: usize,
    /// Flag regex for the success criterion.
    #[arg(long, default_value = awe_core::state::DEFAULT_FLAG_PATTERN)]
    flag_pattern: String,
    /// Key-value config file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum LabCommand {
    /// Serve the lab (default 18-challenge manifest).
    Serve {
        /// Manifest JSON file; defaults to the built-in manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Bind address (default 127.0.0.1:0).
        #[arg(long)]
        bind: Option<SocketAddr>,
        /// Internal-only endpoint bind address.
        #[arg(long)]
        internal_bind: Option<SocketAddr>,
        /// Manifest generation seed (flags derive from it).
        #[arg(long, default_value_t = lab::DEFAULT_MANIFEST_SEED)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Markdown,
}

#[derive(Parser, Debug)]
struct ReportArgs {
    /// awe-report-v1 file to render.
    path: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
    format: ReportFormat,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("AWE_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(err) => {
            // Help and version are not usage errors.
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };

    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match cli.command {
        Command::Scan(args) => {
            // Flag-value problems are usage errors, not scan failures.
            if let Err(err) = Url::parse(&args.target) {
                eprintln!("error: target URL {:?}: {err}", args.target);
                return ExitCode::from(EXIT_USAGE);
            }
            if let Some(names) = &args.agents {
                if let Err(err) = parse_agents(names) {
                    eprintln!("error: {err:#}");
                    return ExitCode::from(EXIT_USAGE);
                }
            }
            let scan_matches = matches
                .subcommand_matches("scan")
                .expect("scan subcommand matched")
                .clone();
            match runtime.block_on(cmd_scan(args, scan_matches)) {
                Ok(code) => code,
                Err(err) => {
                    eprintln!("error: {err:#}");
                    ExitCode::from(EXIT_FATAL)
                }
            }
        }
        Command::Lab { command } => match runtime.block_on(cmd_lab(command)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(err) => {
                eprintln!("error: {err:#}");
                ExitCode::from(EXIT_FATAL)
            }
        },
        Command::Report(args) => match cmd_report(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(err) => {
                eprintln!("error: {err:#}");
                ExitCode::from(EXIT_FATAL)
            }
        },
    }
}

fn parse_agents(names: &[String]) -> anyhow::Result<Vec<VulnClass>> {
    names
        .iter()
        .map(|n| {
            VulnClass::parse(n.trim())
                .ok_or_else(|| anyhow!("unknown agent {n:?}; valid: {}", agent_ids()))
        })
        .collect()
}

fn agent_ids() -> String {
    VulnClass::ALL.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(",")
}

async fn cmd_scan(args: ScanArgs, matches: ArgMatches) -> anyhow::Result<ExitCode> {
    let mut config = ScanConfig::default();
    if let Some(path) = &args.config {
        config_file::apply(&mut config, path)
            .with_context(|| format!("config file {}", path.display()))?;
    }
    config_file::overlay_cli(&mut config, &args, &matches)?;

    let target =
        Url::parse(&args.target).with_context(|| format!("target URL {:?}", args.target))?;
    let report = run_scan(target, &config).await?;

    println!("scan {}: status {:?}", report.target, report.status);
    println!(
        "  findings: {} | flags: {} | attempts: {} | requests: {}",
        report.findings.len(),
        if report.solved_flags.is_empty() {
            "none".to_string()
        } else {
            report.solved_flags.join(", ")
        },
        report.attempts_total,
        report.injection_requests,
    );
    println!(
        "  budget: {:.1}s wall, {} tokens, ${:.4}",
        report.budget.wall_elapsed_s, report.budget.tokens_used, report.budget.cost_used_usd
    );
    if let Some(path) = &config.report_out {
        println!("  report: {}", path.display());
    }

    Ok(ExitCode::from(if report.solved() {
        EXIT_FLAG_CAPTURED
    } else if !report.findings.is_empty() {
        EXIT_FINDINGS_NO_FLAG
    } else {
        EXIT_NO_FINDINGS
    }))
}

async fn cmd_lab(command: LabCommand) -> anyhow::Result<()> {
    match command {
        LabCommand::Serve { manifest, bind, internal_bind, seed } => {
            let challenges = match manifest {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("manifest {}", path.display()))?;
                    serde_json::from_str(&text).context("manifest JSON")?
                }
                None => lab::default_manifest(seed),
            };
            let handle = lab::serve(challenges, seed, bind, internal_bind).await?;
            println!("lab serving at {}", handle.base_url);
            println!("internal-only endpoint at {}", handle.internal_url);
            println!("manifest at {}_lab/manifest (flags redacted)", handle.base_url);
            println!("reset at {}_lab/reset", handle.base_url);
            tokio::signal::ctrl_c().await.context("signal handler")?;
            println!("shutting down");
            Ok(())
        }
    }
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.path)
        .with_context(|| format!("report {}", args.path.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text).context("report JSON")?;
    let report = ScanReport::from_json(&doc)?;
    match args.format {
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&report.to_json())?),
        ReportFormat::Markdown => print!("{}", report.to_markdown()),
    }
    Ok(())
}
