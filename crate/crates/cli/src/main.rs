//! `cotguard`: segment, replay, serve, bench and gen.

mod config;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use cotguard_core::bench::{self, EvalOptions, Presets, ReportFormat};
use cotguard_core::{monitor_replay, segment_batch, AnnotatedChain, Termination};
use cotguard_gateway::Delimiters;

use config::{parse_level, AppConfig, VerifierKind};

/// Process exit codes. Stable: scripts may depend on them.
mod exit {
    pub const OK: u8 = 0;
    pub const RUNTIME: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const INPUT: u8 = 4;
    pub const INTERRUPTED: u8 = 10;
    pub const BUDGET_EXCEEDED: u8 = 11;
    pub const VERIFIER_FAILED: u8 = 12;
    pub const SOURCE_FAILED: u8 = 13;
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait OrExit<T> {
    fn or_exit(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

#[derive(Parser, Debug)]
#[command(name = "cotguard", version, about = "Step-level reasoning-safety monitor")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "COTGUARD_CONFIG")]
    config: Option<PathBuf>,
    /// Confidence threshold for interrupting on an unsafe step.
    #[arg(long, global = true, env = "COTGUARD_TAU")]
    tau: Option<f64>,
    #[arg(long, global = true, value_enum, env = "COTGUARD_VERIFIER")]
    verifier: Option<VerifierKind>,
    #[arg(long, global = true, env = "COTGUARD_SEED")]
    seed: Option<u64>,
    /// trace | debug | info | warn | error
    #[arg(long, global = true, env = "COTGUARD_LOG_LEVEL")]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split reasoning text into indexed steps.
    Segment {
        /// Input file; standard input when omitted or `-`.
        input: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Monitor one stored chain and print its report.
    Replay {
        /// A single chain record (JSON object).
        chain: PathBuf,
    },
    /// Run the streaming gateway in the foreground.
    Serve {
        #[arg(long)]
        listen: Option<SocketAddr>,
        #[arg(long)]
        upstream: Option<String>,
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Only monitor content between `<think>` and `</think>`.
        #[arg(long)]
        think_tags: bool,
    },
    /// Replay a JSONL dataset and report position/type accuracy.
    Bench {
        dataset: Option<PathBuf>,
        #[arg(long, value_parser = parse_format)]
        format: Option<ReportFormat>,
        #[arg(long)]
        concurrency: Option<usize>,
    },
    /// Generate a synthetic labeled corpus from a preset.
    Gen {
        /// omnimath | badchain | preemptive | overthink | deadlock
        preset: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        /// Output path; standard output when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

/// Defaults, then the config file, then environment and flags (clap merges
/// those two, flags winning).
fn resolve(cli: &Cli) -> Result<AppConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => AppConfig::load(path).or_exit(exit::CONFIG)?,
        None => AppConfig::default(),
    };
    if let Some(tau) = cli.tau {
        cfg.policy.policy = cfg.policy.policy.with_tau(tau).context("--tau").or_exit(exit::CONFIG)?;
    }
    if let Some(kind) = cli.verifier {
        cfg.verifier.kind = kind;
    }
    if let Some(seed) = cli.seed {
        cfg.bench.seed = seed;
    }
    if let Some(level) = &cli.log_level {
        cfg.log_level = level.clone();
    }
    Ok(cfg)
}

fn init_tracing(level: &str) -> Result<()> {
    let level = parse_level(level)?;
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_max_level(level)
        .with_target(false)
        .try_init()
        .map_err(|e| anyhow!(e))
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let mut cfg = resolve(&cli)?;
    match &cli.command {
        Command::Serve {
            listen,
            upstream,
            log_dir,
            think_tags,
        } => {
            if let Some(a) = listen {
                cfg.gateway.listen_address = *a;
            }
            if let Some(u) = upstream {
                cfg.gateway.upstream_url = u.clone();
            }
            if let Some(d) = log_dir {
                cfg.gateway.log_dir = Some(d.clone());
            }
            if *think_tags {
                cfg.gateway.reasoning_delimiters = Some(Delimiters::think_tags());
            }
            if cli.log_level.is_none() && cfg.log_level == "warn" {
                cfg.log_level = "info".into();
            }
        }
        Command::Bench {
            dataset,
            format,
            concurrency,
        } => {
            if let Some(d) = dataset {
                cfg.bench.dataset = Some(d.clone());
            }
            if let Some(f) = format {
                cfg.bench.format = *f;
            }
            if let Some(c) = concurrency {
                cfg.bench.concurrency = *c;
            }
        }
        Command::Gen { preset, n, .. } => {
            if let Some(p) = preset {
                cfg.bench.preset = Some(p.clone());
            }
            if let Some(n) = n {
                cfg.bench.n = *n;
            }
        }
        _ => {}
    }
    cfg.validate().or_exit(exit::CONFIG)?;
    init_tracing(&cfg.log_level).or_exit(exit::CONFIG)?;

    match cli.command {
        Command::Segment { input, json } => cmd_segment(input.as_deref(), json),
        Command::Replay { chain } => cmd_replay(&chain, &cfg),
        Command::Serve { .. } => cmd_serve(cfg),
        Command::Bench { .. } => cmd_bench(&cfg),
        Command::Gen { output, .. } => cmd_gen(&cfg, output.as_deref()),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .or_exit(exit::RUNTIME)
}

fn read_input(path: Option<&Path>) -> Result<String> {
    let mut text = String::new();
    match path {
        None => io::stdin()
            .read_to_string(&mut text)
            .context("reading standard input")?,
        Some(p) if p == Path::new("-") => io::stdin()
            .read_to_string(&mut text)
            .context("reading standard input")?,
        Some(p) => File::open(p)
            .and_then(|mut f| f.read_to_string(&mut text))
            .with_context(|| format!("cannot read {}", p.display()))?,
    };
    Ok(text)
}

fn cmd_segment(input: Option<&Path>, json: bool) -> Result<u8, Failure> {
    let text = read_input(input).or_exit(exit::INPUT)?;
    let steps = segment_batch(&text);
    let mut out = io::stdout().lock();
    if json {
        serde_json::to_writer_pretty(&mut out, &steps).or_exit(exit::RUNTIME)?;
        writeln!(out).or_exit(exit::RUNTIME)?;
    } else {
        for step in &steps {
            writeln!(out, "[{}]\n{}\n", step.index, step.text).or_exit(exit::RUNTIME)?;
        }
    }
    Ok(exit::OK)
}

fn termination_code(t: Termination) -> u8 {
    match t {
        Termination::Completed => exit::OK,
        Termination::Interrupted => exit::INTERRUPTED,
        Termination::BudgetExceeded => exit::BUDGET_EXCEEDED,
        Termination::VerifierFailed => exit::VERIFIER_FAILED,
        Termination::SourceFailed => exit::SOURCE_FAILED,
    }
}

fn cmd_replay(path: &Path, cfg: &AppConfig) -> Result<u8, Failure> {
    let text = read_input(Some(path)).or_exit(exit::INPUT)?;
    let chain: AnnotatedChain = serde_json::from_str(text.trim())
        .with_context(|| format!("{} is not a chain record", path.display()))
        .or_exit(exit::INPUT)?;
    let verifier = cfg.verifier.build().or_exit(exit::CONFIG)?;
    let report = runtime()?
        .block_on(monitor_replay(&chain, verifier, cfg.policy))
        .or_exit(exit::INPUT)?;
    let json = serde_json::to_string_pretty(&report).or_exit(exit::RUNTIME)?;
    println!("{json}");
    Ok(termination_code(report.termination))
}

fn cmd_serve(mut cfg: AppConfig) -> Result<u8, Failure> {
    let verifier = cfg.verifier.build().or_exit(exit::CONFIG)?;
    cfg.gateway.monitor = cfg.policy;
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    };
    runtime()?
        .block_on(cotguard_gateway::serve(cfg.gateway, verifier, shutdown))
        .or_exit(exit::RUNTIME)?;
    Ok(exit::OK)
}

fn cmd_bench(cfg: &AppConfig) -> Result<u8, Failure> {
    let path = cfg
        .bench
        .dataset
        .as_ref()
        .ok_or_else(|| anyhow!("no dataset given (argument or bench.dataset)"))
        .or_exit(exit::USAGE)?;
    let file = File::open(path)
        .with_context(|| format!("cannot open dataset {}", path.display()))
        .or_exit(exit::INPUT)?;
    let load = bench::load_jsonl(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
        .or_exit(exit::INPUT)?;
    for e in &load.errors {
        tracing::warn!(line = e.line, id = e.id.as_deref().unwrap_or("-"), reason = %e.reason, "skipping malformed record");
    }
    let verifier = cfg.verifier.build().or_exit(exit::CONFIG)?;
    let options = EvalOptions {
        concurrency: cfg.bench.concurrency,
    };
    let mut eval = runtime()?.block_on(bench::evaluate_detailed(&load.records, verifier, cfg.policy, options));
    let mut skipped = load.errors;
    skipped.append(&mut eval.metrics.skipped);
    eval.metrics.skipped = skipped;
    print!("{}", bench::report(&eval.metrics, cfg.bench.format));
    if cfg.bench.format == ReportFormat::Json {
        println!();
    }
    Ok(exit::OK)
}

fn cmd_gen(cfg: &AppConfig, output: Option<&Path>) -> Result<u8, Failure> {
    let name = cfg
        .bench
        .preset
        .as_deref()
        .ok_or_else(|| anyhow!("no preset given (argument or bench.preset)"))
        .or_exit(exit::USAGE)?;
    let presets = Presets::builtin();
    let spec = presets.get(name).or_exit(exit::USAGE)?;
    let chains = bench::generate_synthetic(spec, cfg.bench.seed, cfg.bench.n);
    match output {
        Some(p) => {
            let file = File::create(p)
                .with_context(|| format!("cannot create {}", p.display()))
                .or_exit(exit::INPUT)?;
            bench::write_jsonl(BufWriter::new(file), &chains).or_exit(exit::RUNTIME)?;
        }
        None => bench::write_jsonl(io::stdout().lock(), &chains).or_exit(exit::RUNTIME)?,
    }
    Ok(exit::OK)
}
