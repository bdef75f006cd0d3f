use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Result;
use clap::Parser;
use norec_cli::config::{Backend, CampaignConfig, OracleArg};
use norec_cli::{replay, run_campaign, sqlite};
use norec_core::BugInjection;

/// Hunt for optimizer logic bugs by comparing each query's row count with the
/// number of rows for which its predicate is TRUE.
#[derive(Debug, Parser)]
#[command(name = "norec", version)]
struct Args {
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    /// Toy-engine fault, e.g. like-range-skip.
    #[arg(long)]
    inject: Option<BugInjection>,
    #[arg(long, value_enum)]
    oracle: Option<OracleArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Oracle checks per database.
    #[arg(long)]
    queries: Option<usize>,
    /// Database iterations; 0 runs until --duration-secs elapses.
    #[arg(long)]
    databases: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    #[arg(long)]
    duration_secs: Option<u64>,
    /// TOML file with campaign and generator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run SQLite in a child process.
    #[arg(long)]
    isolate: bool,
    #[arg(long)]
    no_reduce: bool,
    /// Replay every testcase.json under a report directory instead.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long, hide = true)]
    serve_sqlite: Option<u64>,
}

fn build_config(args: &Args) -> Result<CampaignConfig> {
    let mut c = match &args.config {
        Some(p) => CampaignConfig::from_file(p)?,
        None => CampaignConfig::default(),
    };
    macro_rules! set {
        ($($field:ident => $target:ident),*) => {
            $(if let Some(v) = args.$field.clone() { c.$target = v; })*
        };
    }
    set!(backend => backend, oracle => oracle, seed => seed, queries => queries, databases => databases,
         workers => workers, timeout_ms => timeout_ms, out => out);
    if args.inject.is_some() {
        c.injection = args.inject;
    }
    if args.duration_secs.is_some() {
        c.duration_secs = args.duration_secs;
    }
    c.isolate |= args.isolate;
    c.reduce &= !args.no_reduce;
    c.engine_program = std::env::current_exe().ok();
    Ok(c)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(ms) = args.serve_sqlite {
        return match sqlite::serve(Duration::from_millis(ms)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(_) => ExitCode::FAILURE,
        };
    }
    match run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("norec: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(args: &Args) -> Result<ExitCode> {
    let config = build_config(args)?;
    if let Some(dir) = &args.replay {
        let outcomes = replay::replay_dir(dir, Duration::from_millis(config.timeout_ms))?;
        let mut failed = 0;
        for o in &outcomes {
            let observed = o.observed.as_ref().map(|c| c.to_string()).unwrap_or_else(|| "no failure".into());
            if o.reproduced() {
                println!("ok       {} ({})", o.path.display(), o.expected);
            } else {
                failed += 1;
                println!("mismatch {} (expected {}, observed {observed})", o.path.display(), o.expected);
            }
        }
        println!("{} replayed, {failed} mismatched", outcomes.len());
        return Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE });
    }
    let s = run_campaign(&config)?;
    let t = &s.tally;
    println!("engine        {}", s.engine_version);
    println!("databases     {}", t.databases);
    println!("checks        {} ({:.0}/s)", t.checks, s.checks_per_sec);
    println!("consistent    {}", t.consistent);
    println!("skipped       {} expected error, {} timeout", t.skipped_expected_error, t.skipped_timeout);
    println!("discrepancies {}", t.discrepancies);
    println!("errors        {} unexpected, {} crashes", t.unexpected_errors, t.crashes);
    println!("validity      {:.4}", s.validity_rate);
    println!("findings      {} unique of {}", s.findings.len(), s.raw_findings);
    for f in &s.findings {
        println!("  {} {:<12} x{:<4} {}", f.fingerprint, f.kind.name(), f.occurrences, f.path.display());
    }
    for e in &s.harness_errors {
        eprintln!("harness: {e}");
    }
    Ok(if s.harness_errors.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(3) })
}
