//! Command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success; every check passed |
//! | 1 | a paired-run, label or leakage check failed |
//! | 2 | bad usage, unreadable or invalid config |
//! | 3 | the monitor denied a flow in fatal mode |
//! | 4 | output could not be written |

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::kernel::{parse_jsonl, to_jsonl, TraceRecord};
use crate::leakage::{measure, CovertExperiment, LeakageError};
use crate::scenario::{
    assert_labels, default_expectations, render_chart, run_paired, ScenarioConfig, ScenarioError, BOB_LONG, BOB_SHORT,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MONITOR_FATAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "tifc-sim", version, about = "Timing information flow control cloud simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario; write the trace and an ASCII schedule chart.
    Run(Common),
    /// Run a scenario twice with the second user's jobs short and long.
    Paired {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = BOB_SHORT)]
        short: u32,
        #[arg(long, default_value_t = BOB_LONG)]
        long: u32,
    },
    /// Run the covert-channel experiment described by the config.
    Leakage(Common),
    /// Check label expectations against a run or an existing trace.
    CheckLabels {
        #[command(flatten)]
        common: Common,
        /// JSON Lines trace to check instead of running the scenario.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Parse and validate a scenario or leakage config.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, env = "TIFC_SIM_SEED")]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
    Txt,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Failure { code: EXIT_CONFIG, message: message.to_string() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = if e.is_monitor_fatal() { EXIT_MONITOR_FATAL } else { EXIT_CONFIG };
        Failure { code, message: e.to_string() }
    }
}

impl From<LeakageError> for Failure {
    fn from(e: LeakageError) -> Self {
        match e {
            LeakageError::Scenario(s) => s.into(),
            other => Failure::config(other),
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Messages go to stdout and stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(command: &Command) -> Result<i32, Failure> {
    match command {
        Command::Run(common) => cmd_run(common),
        Command::Paired { common, short, long } => cmd_paired(common, *short, *long),
        Command::Leakage(common) => cmd_leakage(common),
        Command::CheckLabels { common, trace } => cmd_check_labels(common, trace.as_deref()),
        Command::Validate { config } => cmd_validate(config),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn load_scenario(common: &Common) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::from_json(&read(&common.config)?)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<&Path, Failure> {
    fs::create_dir_all(&common.out).map_err(|e| Failure::io(&common.out, e))?;
    Ok(&common.out)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::io(&path, e))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct TraceCsvRow {
    t: u64,
    kind: String,
    entity: String,
    label: String,
    detail: String,
}

fn kind_name(r: &TraceRecord) -> String {
    serde_json::to_value(r.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

pub fn trace_csv(records: &[TraceRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(TraceCsvRow {
            t: r.time.0,
            kind: kind_name(r),
            entity: r.entity.to_string(),
            label: r.label.as_ref().map_or(String::new(), |l| l.to_string()),
            detail: serde_json::to_string(&r.detail).expect("detail serializes"),
        })
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

pub fn trace_text(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let label = r.label.as_ref().map_or("-".to_string(), |l| l.to_string());
        let detail: Vec<String> = r.detail.iter().map(|(k, v)| format!("{k}={v}")).collect();
        out.push_str(&format!(
            "{:>6} {:<13} {:<14} {:<24} {}\n",
            r.time.0,
            kind_name(r),
            r.entity,
            label,
            detail.join(" ")
        ));
    }
    out
}

fn cmd_run(common: &Common) -> Result<i32, Failure> {
    let cfg = load_scenario(common)?;
    let dir = out_dir(common)?;
    let trace = match common.format.unwrap_or(Format::Jsonl) {
        Format::Jsonl => {
            let path = dir.join("trace.jsonl");
            let file = fs::File::create(&path).map_err(|e| Failure::io(&path, e))?;
            cfg.run_streaming(Box::new(BufWriter::new(file)))?
        }
        Format::Csv => {
            let trace = cfg.run()?;
            write(dir, "trace.csv", &trace_csv(&trace))?;
            trace
        }
        Format::Txt => {
            let trace = cfg.run()?;
            write(dir, "trace.txt", &trace_text(&trace))?;
            trace
        }
    };
    let chart = render_chart(&cfg, &trace);
    write(dir, "chart.txt", &chart)?;
    print!("{chart}");
    Ok(EXIT_OK)
}

fn cmd_paired(common: &Common, short: u32, long: u32) -> Result<i32, Failure> {
    let cfg = load_scenario(common)?;
    let dir = out_dir(common)?;
    let report = run_paired(&cfg, short, long)?;
    write(dir, "report.json", &json(&report))?;
    match common.format {
        Some(Format::Txt) => write(dir, "report.txt", &report.summary())?,
        Some(Format::Jsonl) => {
            write(dir, "trace_short.jsonl", &to_jsonl(&report.trace_short))?;
            write(dir, "trace_long.jsonl", &to_jsonl(&report.trace_long))?;
        }
        Some(Format::Csv) => {
            write(dir, "trace_short.csv", &trace_csv(&report.trace_short))?;
            write(dir, "trace_long.csv", &trace_csv(&report.trace_long))?;
        }
        None => {}
    }
    print!("{}", report.summary());
    Ok(if report.pass { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_leakage(common: &Common) -> Result<i32, Failure> {
    let mut exp = CovertExperiment::from_json(&read(&common.config)?)?;
    if let Some(seed) = common.seed {
        exp.seed = seed;
    }
    let dir = out_dir(common)?;
    let report = measure(&exp)?;
    write(dir, "leakage.csv", &report.to_csv())?;
    write(dir, "leakage.json", &json(&report))?;
    if common.format == Some(Format::Txt) {
        write(dir, "leakage.txt", &report.summary())?;
    }
    print!("{}", report.summary());
    Ok(if report.pass { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_check_labels(common: &Common, trace_path: Option<&Path>) -> Result<i32, Failure> {
    let cfg = load_scenario(common)?;
    let trace = match trace_path {
        Some(path) => parse_jsonl(&read(path)?).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?,
        None => cfg.run()?,
    };
    let mut expectations = default_expectations(&cfg);
    expectations.extend(cfg.expectations.iter().cloned());
    let checks = assert_labels(&trace, &expectations);
    let dir = out_dir(common)?;
    write(dir, "labels.json", &json(&checks))?;
    for c in &checks {
        println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.selector, c.message);
    }
    if checks.is_empty() {
        println!("no label expectations for this config");
    }
    Ok(if checks.iter().all(|c| c.pass) { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_validate(config: &Path) -> Result<i32, Failure> {
    let text = read(config)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", config.display())))?;
    // Scenario configs list their users; leakage experiments never do.
    if value.get("users").is_some() {
        let cfg = ScenarioConfig::from_json(&text)?;
        println!("scenario {}: valid ({:?})", cfg.name, cfg.classify());
    } else {
        let exp = CovertExperiment::from_json(&text)?;
        println!("leakage experiment {}: valid", exp.name);
    }
    Ok(EXIT_OK)
}
