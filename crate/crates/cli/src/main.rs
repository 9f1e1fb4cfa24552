//! `aeon`: static checks, bounded exploration, cluster simulation and
//! trace replay for context programs.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use aeon_core::engine::{replay, EngineOptions, GlobalConfig, ReplayError, TraceFile};
use aeon_core::lang::{check_program, parse_program, Program};
use aeon_core::verifier::{explore, Bounds, ExploreOptions};
use aeon_sim::scenario::parse_target;
use aeon_sim::{run_sim, Scenario};

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "aeon", version, about = "Check, explore, simulate and replay context programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for reports, metrics and traces.
    #[arg(long, global = true, env = "AEON_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Records,
}

#[derive(Debug, Clone, Default, clap::Args)]
struct EngineFlags {
    #[arg(long, hide = true)]
    unsafe_no_dominator: bool,
    #[arg(long, hide = true)]
    opt_unshared_start: bool,
}

impl EngineFlags {
    fn options(&self) -> EngineOptions {
        EngineOptions {
            unsafe_no_dominator: self.unsafe_no_dominator,
            opt_unshared_start: self.opt_unshared_start,
            linear: false,
        }
    }

    fn names(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.unsafe_no_dominator {
            v.push("--unsafe-no-dominator".to_string());
        }
        if self.opt_unshared_start {
            v.push("--opt-unshared-start".to_string());
        }
        v
    }
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Static checks: names, arity, readonly discipline, ownership cycles.
    Check {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Explore every schedule of the program's events up to a bound.
    Explore {
        path: PathBuf,
        /// Maximum number of distinct configurations.
        #[arg(long, default_value_t = Bounds::default().max_configs)]
        bound: usize,
        /// Maximum schedule length.
        #[arg(long, default_value_t = Bounds::default().max_depth)]
        max_depth: usize,
        /// Client events replacing the main script's, e.g. `Player1.grab()`.
        #[arg(long = "events", num_args = 1.., value_delimiter = ';')]
        events: Vec<String>,
        /// Skip the serializability check of terminal states.
        #[arg(long)]
        no_serializability: bool,
        #[command(flatten)]
        engine: EngineFlags,
    },
    /// Run a cluster scenario and write its metrics.
    Simulate {
        scenario: PathBuf,
        /// Last tick at which clients issue events.
        #[arg(long)]
        until: Option<u64>,
    },
    /// Execute one seeded schedule and record its trace.
    Run {
        path: PathBuf,
        #[arg(long = "events", num_args = 1.., value_delimiter = ';')]
        events: Vec<String>,
        #[arg(long, default_value_t = 100_000)]
        max_steps: usize,
        #[command(flatten)]
        engine: EngineFlags,
    },
    /// Re-apply a recorded trace and compare the final state.
    Replay {
        trace: PathBuf,
        /// Program the trace was recorded from.
        #[arg(long)]
        program: PathBuf,
        #[arg(long = "events", num_args = 1.., value_delimiter = ';')]
        events: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.cmd {
        Cmd::Check { paths } => cmd_check(cli, paths),
        Cmd::Explore { path, bound, max_depth, events, no_serializability, engine } => {
            cmd_explore(cli, path, Bounds { max_configs: *bound, max_depth: *max_depth }, events, !no_serializability, engine)
        }
        Cmd::Simulate { scenario, until } => cmd_simulate(cli, scenario, *until),
        Cmd::Run { path, events, max_steps, engine } => cmd_run(cli, path, events, *max_steps, engine),
        Cmd::Replay { trace, program, events } => cmd_replay(trace, program, events),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Parses a program, replacing its client events when `events` is given.
fn load_program(path: &Path, events: &[String]) -> anyhow::Result<Program> {
    let src = read(path)?;
    let mut program = parse_program(&src).map_err(|e| anyhow::anyhow!("{}:{e}", path.display()))?;
    if !events.is_empty() {
        program.main.events = events
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let mut spec = parse_target(e.trim())?;
                spec.tick = i as u64;
                Ok(spec)
            })
            .collect::<Result<_, aeon_sim::ScenarioError>>()?;
    }
    Ok(program)
}

fn write_artifact(dir: &Path, name: &str, body: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn cmd_check(cli: &Cli, paths: &[PathBuf]) -> anyhow::Result<u8> {
    let mut rejected = false;
    for path in paths {
        let file = path.display().to_string();
        let src = read(path)?;
        let diags: Vec<(usize, usize, String, String)> = match parse_program(&src) {
            Err(e) => vec![(e.line, e.col, "syntax".into(), format!("expected {}, found {}", e.expected, e.found))],
            Ok(program) => check_program(&program)
                .diagnostics
                .into_iter()
                .map(|d| {
                    let kind = serde_json::to_value(d.kind).ok().and_then(|v| v.as_str().map(String::from));
                    (d.span.line, d.span.col, kind.unwrap_or_default(), d.message)
                })
                .collect(),
        };
        rejected |= !diags.is_empty();
        match cli.format {
            Format::Text if diags.is_empty() => println!("{file}: ok"),
            Format::Text => {
                for (line, col, kind, msg) in &diags {
                    println!("{file}:{line}:{col}: {kind}: {msg}");
                }
            }
            Format::Records => {
                for (line, col, kind, msg) in &diags {
                    println!("{}", json!({ "file": file, "line": line, "col": col, "kind": kind, "message": msg }));
                }
                println!("{}", json!({ "file": file, "accepted": diags.is_empty() }));
            }
        }
    }
    Ok(u8::from(rejected))
}

fn cmd_explore(
    cli: &Cli,
    path: &Path,
    bounds: Bounds,
    events: &[String],
    serializability: bool,
    engine: &EngineFlags,
) -> anyhow::Result<u8> {
    let program = load_program(path, events)?;
    let check = check_program(&program);
    if !check.accepted() {
        for d in &check.diagnostics {
            eprintln!("{}:{d}", path.display());
        }
        bail!("{} does not pass the static checks", path.display());
    }
    let mut m = RunManifest::new("explore");
    m.inputs.push(path.display().to_string());
    m.seed = cli.seed;
    m.bounds.insert("max_configs".into(), bounds.max_configs as u64);
    m.bounds.insert("max_depth".into(), bounds.max_depth as u64);
    m.flags = engine.names();
    m.flags.extend(events.iter().map(|e| format!("--events={e}")));
    if !serializability {
        m.flags.push("--no-serializability".into());
    }
    let report = explore(&program, engine.options(), ExploreOptions { bounds, serializability })?;
    let verdict = report.verdict();
    let out = match cli.format {
        Format::Text => write_artifact(&cli.out_dir, "explore-report.txt", &format!("{}{report}", m.comment()))?,
        Format::Records => {
            let mut v = serde_json::to_value(&report)?;
            v["kind"] = "report".into();
            v["verdict"] = serde_json::to_value(verdict)?;
            write_artifact(&cli.out_dir, "explore-report.jsonl", &format!("{}{v}\n", m.record()))?
        }
    };
    print!("{report}");
    if let Some(w) = report.deadlocks.first() {
        let mut cfg = GlobalConfig::new(&program, engine.options())?;
        for t in &w.trace {
            cfg.apply_mut(t)?;
        }
        let trace = TraceFile::from_run(&program, &cfg, cli.seed);
        let p = write_artifact(&cli.out_dir, "witness.trace.jsonl", &format!("{}{}", m.comment(), trace.to_jsonl()))?;
        println!("deadlock witness written to {}", p.display());
    }
    println!("report written to {}", out.display());
    Ok(verdict.exit_code() as u8)
}

fn cmd_simulate(cli: &Cli, path: &Path, until: Option<u64>) -> anyhow::Result<u8> {
    let mut sc = Scenario::load(path)?;
    if let Some(s) = cli.seed {
        sc.spec.seed = s;
    }
    if let Some(u) = until {
        sc.spec.until = u;
    }
    let mut m = RunManifest::new("simulate");
    m.inputs.push(path.display().to_string());
    m.seed = Some(sc.spec.seed);
    m.bounds.insert("until".into(), sc.spec.until);
    m.bounds.insert("drain".into(), sc.spec.drain);
    let out = run_sim(&sc)?;
    let r = &out.report;
    let jsonl = write_artifact(&cli.out_dir, "metrics.jsonl", &r.to_jsonl(&m))?;
    let csv = write_artifact(&cli.out_dir, "metrics.csv", &r.to_csv(&m))?;
    let s = &r.summary;
    match cli.format {
        Format::Text => {
            println!("ticks: {}", s.ticks);
            println!("events: {} issued, {} completed, {} failed, {} outstanding", s.issued, s.completed, s.failed, s.outstanding);
            println!("throughput: {:.3} events/tick", s.throughput);
            println!("latency: mean {:.2}, p50 {}, p95 {}, p99 {}, max {}", s.latency.mean, s.latency.p50, s.latency.p95, s.latency.p99, s.latency.max);
            println!("servers: max {}; migrations: {}", s.max_servers, s.migrations);
            if s.serializability.checked {
                let verdict = if s.serializability.pass { "PASS" } else { "FAIL" };
                println!("serializability: {verdict}");
            }
            println!("metrics written to {} and {}", jsonl.display(), csv.display());
        }
        Format::Records => println!("{}", serde_json::to_string(s)?),
    }
    Ok(if s.serializability.checked && !s.serializability.pass { 2 } else { 0 })
}

fn cmd_run(cli: &Cli, path: &Path, events: &[String], max_steps: usize, engine: &EngineFlags) -> anyhow::Result<u8> {
    let program = load_program(path, events)?;
    let seed = cli.seed.unwrap_or(0);
    let cfg = GlobalConfig::new(&program, engine.options())?.run_seeded(seed, max_steps)?;
    let mut m = RunManifest::new("run");
    m.inputs.push(path.display().to_string());
    m.seed = Some(seed);
    m.bounds.insert("max_steps".into(), max_steps as u64);
    m.flags = engine.names();
    m.flags.extend(events.iter().map(|e| format!("--events={e}")));
    let trace = TraceFile::from_run(&program, &cfg, Some(seed));
    let p = write_artifact(&cli.out_dir, "run.trace.jsonl", &format!("{}{}", m.comment(), trace.to_jsonl()))?;
    println!("{} steps, {} events finished", trace.entries.len(), cfg.history().len());
    println!("final digest: {}", trace.final_digest);
    println!("trace written to {}", p.display());
    Ok(if cfg.is_quiescent() { 0 } else { 2 })
}

fn cmd_replay(trace: &Path, program: &Path, events: &[String]) -> anyhow::Result<u8> {
    let program = load_program(program, events)?;
    let text = read(trace)?;
    match replay(&program, &text) {
        Ok(cfg) => {
            println!("replay ok: {} steps, final digest {}", cfg.trace().len(), cfg.store_digest());
            Ok(0)
        }
        Err(e @ ReplayError::SchemaMismatch { .. }) => {
            eprintln!("{}: schema mismatch: {e}", trace.display());
            Ok(1)
        }
        Err(e) => {
            eprintln!("{}: {e}", trace.display());
            Ok(1)
        }
    }
}
