mod commands;
mod config;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use hua_core::acceptance::DEFAULT_SEED;
use hua_core::HuaError;
use serde_json::{json, Value};

use commands::{Outcome, Table};
use config::{ExperimentConfig, Format};

const SEED_VAR: &str = "HUA_SEED";
const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DOMAIN: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "hua",
    version,
    about = "Hua measures on p-adic matrix spaces: constants, samplers and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,

    /// Root seed of every random stream; HUA_SEED overrides it.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Working precision in p-adic digits.
    #[arg(long, global = true, default_value_t = 64)]
    precision: u32,

    /// Report file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(HuaError),
}

impl From<HuaError> for CliError {
    fn from(e: HuaError) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    fn record(&self) -> (Value, u8) {
        match self {
            CliError::Usage(m) => (json!({"error_kind": "usage", "context": m}), EXIT_USAGE),
            CliError::Io(m) => (json!({"error_kind": "io", "context": m}), EXIT_USAGE),
            CliError::Core(e) => {
                let code = if e.is_numeric_domain() {
                    EXIT_DOMAIN
                } else {
                    EXIT_USAGE
                };
                (
                    json!({"error_kind": e.kind(), "context": e.to_string()}),
                    code,
                )
            }
        }
    }
}

fn seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_VAR}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

fn csv_text(table: &Table) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&table.headers).map_err(io)?;
    for row in &table.rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

/// The report: configuration, versions, result and verdict, then wall-clock
/// data in its own section so the rest is reproducible byte for byte.
fn envelope(config: &ExperimentConfig, outcome: &Outcome, seconds: f64) -> Value {
    let mut timing = json!({"seconds": seconds});
    if let Some(extra) = &outcome.timing {
        timing["breakdown"] = extra.clone();
    }
    json!({
        "config": config,
        "versions": {"hua": env!("CARGO_PKG_VERSION"), "rng": hua_core::rng::ALGORITHM},
        "result": outcome.result,
        "passed": outcome.passed,
        "timing": timing,
    })
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let config = ExperimentConfig {
        subcommand: cli.command.name().to_string(),
        parameters: cli.command.parameters(),
        seed: seed(cli.seed)?,
        precision: cli.precision,
        format: cli.format,
        out: cli.out.clone(),
        threads: cli.threads,
    };
    if let Some(t) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let start = Instant::now();
    let outcome = commands::execute(&cli.command, &config)?;
    if !outcome.emit {
        return Ok(0);
    }
    let text = match config.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&envelope(
                &config,
                &outcome,
                start.elapsed().as_secs_f64(),
            ))
            .map_err(|e| CliError::Io(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Csv => match &outcome.table {
            Some(t) => csv_text(t)?,
            None => {
                return Err(CliError::Usage(format!(
                    "{} has no flat table; use --format json",
                    config.subcommand
                )))
            }
        },
    };
    match &outcome.report_path {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(match outcome.passed {
        Some(false) => EXIT_FAILED,
        _ => 0,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let record = json!({"error_kind": "usage", "context": e.render().to_string()});
            eprintln!("{record}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let (record, code) = e.record();
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}
