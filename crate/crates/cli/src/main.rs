mod commands;
mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use config::{
    schema_example, Command, CostParams, CurveCheckParams, CurveEstimateParams, EstimateParams, Format, GenParams,
    KreissParams, RunConfig, SweepGridParams, SweepRadialParams, VerifyParams, COMMAND_NAMES,
};
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_VIOLATION: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "resolvex", version, about = "Resolvent-based eigenvalue estimation experiments")]
struct Cli {
    /// Run a saved configuration instead of a subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the resolved configuration here before running.
    #[arg(long, global = true)]
    save_config: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; RESOLVEX_THREADS overrides.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Option<Sub>,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Generate a matrix with prescribed Jordan structure.
    Gen(GenParams),
    /// Run the circle (qeue) or segment (qere) pipeline on a matrix file.
    Estimate(EstimateParams),
    /// Run randomized bound-checking suites; exits 2 on any violation.
    Verify(VerifyParams),
    /// Sampled Kreiss constant of a matrix file.
    Kreiss(KreissParams),
    /// Curve-family conformance and estimation.
    Curve {
        #[command(subcommand)]
        action: CurveSub,
    },
    /// Parameter-grid and radial sweeps.
    Sweep {
        #[command(subcommand)]
        kind: SweepSub,
    },
    /// Query-cost scaling score.
    Cost(CostParams),
}

#[derive(Debug, Subcommand)]
enum CurveSub {
    Check(CurveCheckParams),
    Estimate(CurveEstimateParams),
}

#[derive(Debug, Subcommand)]
enum SweepSub {
    Grid(SweepGridParams),
    Radial(SweepRadialParams),
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Gen(p) => Command::Gen(p),
            Sub::Estimate(p) => Command::Estimate(p),
            Sub::Verify(p) => Command::Verify(p),
            Sub::Kreiss(p) => Command::Kreiss(p),
            Sub::Curve { action: CurveSub::Check(p) } => Command::CurveCheck(p),
            Sub::Curve { action: CurveSub::Estimate(p) } => Command::CurveEstimate(p),
            Sub::Sweep { kind: SweepSub::Grid(p) } => Command::SweepGrid(p),
            Sub::Sweep { kind: SweepSub::Radial(p) } => Command::SweepRadial(p),
            Sub::Cost(p) => Command::Cost(p),
        }
    }
}

/// Config-file errors carry the schema of the command they were meant for.
fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        let command = serde_json::from_str::<serde_json::Value>(&text)
            .ok()
            .and_then(|v| v.get("command").and_then(|c| c.as_object()).and_then(|c| c.keys().next().cloned()));
        let hint = match command.as_deref().and_then(schema_example) {
            Some(example) => format!(
                "expected schema, e.g.\n{}",
                serde_json::to_string_pretty(&example).unwrap_or_default()
            ),
            None => format!("expected {{\"seed\": n, \"command\": {{<name>: {{...}}}}}} with <name> one of {}", COMMAND_NAMES.join(", ")),
        };
        anyhow!("invalid config {}: {e}\n{hint}", path.display())
    })
}

fn resolve(cli: Cli) -> Result<RunConfig> {
    let mut cfg = match (cli.config, cli.command) {
        (Some(_), Some(_)) => bail!("--config and a subcommand are mutually exclusive"),
        (None, None) => bail!("no subcommand; expected one of gen, estimate, verify, kreiss, curve, sweep, cost"),
        (Some(path), None) => load_config(&path)?,
        (None, Some(sub)) => RunConfig {
            seed: 0,
            threads: None,
            output: None,
            format: None,
            command: sub.into(),
        },
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if cli.output.is_some() {
        cfg.output = cli.output;
    }
    if cli.format.is_some() {
        cfg.format = cli.format;
    }
    if let Some(path) = cli.save_config {
        std::fs::write(&path, serde_json::to_string_pretty(&cfg)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(cfg)
}

fn configure_threads(hint: Option<usize>) -> Result<()> {
    let n = match std::env::var("RESOLVEX_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| anyhow!("RESOLVEX_THREADS must be a non-negative integer, got {v:?}"))?,
        ),
        Err(_) => hint,
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn csv_body(rows: &[resolvex::suites::CheckRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

fn run(cfg: &RunConfig) -> Result<u8> {
    let format = cfg.format.unwrap_or_else(|| cfg.command.default_format());
    if format == Format::Csv && !cfg.command.supports_csv() {
        bail!("--format csv is only available for verify and sweep grid; {} writes json", cfg.command.name());
    }
    configure_threads(cfg.threads)?;
    let outcome = commands::execute(cfg)?;
    let meta = json!({ "version": resolvex::VERSION, "config": cfg });
    let body = match (format, &outcome.rows) {
        (Format::Csv, Some(rows)) => csv_body(rows)?,
        _ => {
            let mut doc = meta.clone();
            doc["result"] = outcome.result;
            (serde_json::to_string_pretty(&doc)? + "\n").into_bytes()
        }
    };
    match &cfg.output {
        Some(path) => {
            std::fs::write(path, &body).with_context(|| format!("writing {}", path.display()))?;
            if format == Format::Csv {
                let mut side = path.clone().into_os_string();
                side.push(".meta.json");
                std::fs::write(&side, serde_json::to_string_pretty(&meta)? + "\n")?;
            }
            println!("{}", outcome.summary);
        }
        None => {
            std::io::stdout().write_all(&body)?;
            eprintln!("{}", outcome.summary);
        }
    }
    Ok(if outcome.violations { EXIT_VIOLATION } else { 0 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match resolve(cli).and_then(|cfg| run(&cfg)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
