//! Batch front end: reads a run configuration, dispatches one computation and
//! writes a JSON report (plus an optional CSV table).
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 failed
//! hypothesis, 3 numerical non-convergence.

mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{ConfigFile, Effective, Params, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Modulus,
    Capacity,
    CapVsModulus,
    Fmo,
    Condition3,
    Bound,
    Certificate,
    ZooVerify,
    Ahlfors,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Modulus => "modulus",
            Self::Capacity => "capacity",
            Self::CapVsModulus => "cap-vs-modulus",
            Self::Fmo => "fmo",
            Self::Condition3 => "condition3",
            Self::Bound => "bound",
            Self::Certificate => "certificate",
            Self::ZooVerify => "zoo-verify",
            Self::Ahlfors => "ahlfors",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("hypothesis `{hypothesis}` failed: {message}")]
    Hypothesis { hypothesis: String, message: String },
}

impl CliError {
    pub(crate) fn config(line: usize, message: String) -> Self {
        Self::Config(format!("line {line}: {message}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Hypothesis { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "outcome")]
pub enum Status {
    Ok,
    HypothesisFailure { hypothesis: String, message: String },
    NonConvergence { message: String },
}

impl Status {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Ok => 0,
            Self::HypothesisFailure { .. } => 2,
            Self::NonConvergence { .. } => 3,
        }
    }
}

/// Flat table for external plotting. Missing values are empty fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Writes `table` to `path`; an empty table gives a header-only file.
pub fn emit_csv(table: &CsvTable, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(e.into()))?;
    w.write_record(&table.header).map_err(|e| CliError::Io(e.into()))?;
    for row in &table.rows {
        w.write_record(row).map_err(|e| CliError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Result of one command.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Value,
    pub csv: CsvTable,
    pub status: Status,
    pub out_dir: PathBuf,
    pub write_csv: bool,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    /// Report serialized with sorted keys.
    pub fn json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes") + "\n"
    }
}

/// Runs the configured command without touching the file system.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let params = Params::new(&cfg.file);
    let seed = match cfg.seed {
        Some(s) => {
            params.u64("run", "seed", s)?;
            params.derived("run", "seed", s);
            s
        }
        None => params.u64("run", "seed", 0)?,
    };
    let out_dir = match &cfg.out {
        Some(p) => {
            params.string("run", "out", ".");
            params.derived("run", "out", p.display());
            p.clone()
        }
        None => PathBuf::from(params.string("run", "out", ".")),
    };
    let file_csv = params.bool("run", "csv", false)?;
    let write_csv = cfg.csv || file_csv;
    params.derived("run", "csv", write_csv);

    let job = commands::prepare(cfg.command, &params, seed)?;
    let effective = params.finish()?;
    let (result, csv, status) = match job() {
        Ok(out) => (out.result, out.csv, out.status),
        Err(CliError::Hypothesis { hypothesis, message }) => {
            (Value::Null, CsvTable::default(), Status::HypothesisFailure { hypothesis, message })
        }
        Err(e) => return Err(e),
    };
    let report = json!({
        "command": cfg.command.name(),
        "version": ringmod_core::VERSION,
        "seed": seed,
        "config": effective,
        "status": status,
        "result": result,
    });
    Ok(RunOutcome { report, csv, status, out_dir, write_csv })
}

/// Runs the command and writes `<out>/<command>.json` (and `.csv`). Returns the exit code.
pub fn execute(cfg: &RunConfig) -> Result<i32, CliError> {
    let outcome = run(cfg)?;
    std::fs::create_dir_all(&outcome.out_dir)?;
    let stem = cfg.command.name();
    std::fs::write(outcome.out_dir.join(format!("{stem}.json")), outcome.json())?;
    if outcome.write_csv {
        emit_csv(&outcome.csv, &outcome.out_dir.join(format!("{stem}.csv")))?;
    }
    Ok(outcome.exit_code())
}
