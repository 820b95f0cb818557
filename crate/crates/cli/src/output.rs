use std::io::{self, Write};
use std::path::PathBuf;
use std::time::SystemTime;

use clap::ValueEnum;
use serde::Serialize;
use wpc::store::ProfileStore;
use wpc::Exec;

use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub command: &'static str,
    pub store_dir: PathBuf,
    pub seed: u64,
    pub timestamp: bool,
    pub format: Format,
    pub exec: Exec,
}

/// Where a report came from: enough to regenerate it.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub inputs: serde_json::Value,
}

pub type CsvOut = csv::Writer<io::Stdout>;

impl Ctx {
    pub fn store(&self) -> CliResult<ProfileStore> {
        Ok(ProfileStore::open(&self.store_dir)?)
    }

    pub fn provenance(&self, inputs: impl Serialize) -> Provenance {
        Provenance {
            tool: "wpc",
            version: wpc::VERSION,
            command: self.command,
            seed: self.seed,
            timestamp: self
                .timestamp
                .then(|| humantime::format_rfc3339_seconds(SystemTime::now()).to_string()),
            inputs: serde_json::to_value(inputs).expect("inputs serialize"),
        }
    }

    /// Prints `report` as JSON, or calls `rows` to print it as CSV.
    pub fn emit<T: Serialize>(&self, report: &T, rows: impl FnOnce(&mut CsvOut) -> CliResult<()>) -> CliResult<()> {
        match self.format {
            Format::Json => {
                let mut out = io::stdout().lock();
                serde_json::to_writer_pretty(&mut out, report)?;
                writeln!(out)?;
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(io::stdout());
                rows(&mut w)?;
                w.flush()?;
            }
        }
        Ok(())
    }
}

/// Optional float as a CSV cell; undefined values are empty.
pub fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}
