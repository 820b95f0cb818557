pub mod explore;
pub mod fusion;
pub mod gen;
pub mod observe;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use clap::{Args, ValueEnum};
use serde::Serialize;
use wpc::sim::MachineConfig;
use wpc::trace::jsonl::read_trace_jsonl;
use wpc::trace::{binary::MAGIC, read_trace, TraceReader};
use wpc::{Level, Trace, TraceEvent};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

/// Simulated machine selection shared by `simulate` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct MachineArgs {
    /// Machine preset: gold5120t-like or kunpeng920-like.
    #[arg(long, default_value = "gold5120t-like")]
    pub platform: String,
    /// Next-line prefetch in both L1 caches.
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub prefetch: Switch,
    /// Override the L1I capacity (KiB).
    #[arg(long)]
    pub l1i_kib: Option<u64>,
    /// Override the L1D capacity (KiB).
    #[arg(long)]
    pub l1d_kib: Option<u64>,
    /// Override the associativity of both caches.
    #[arg(long)]
    pub ways: Option<u32>,
    /// Config label for stored observations; defaults to the preset name,
    /// suffixed with `+prefetch` when prefetch is on.
    #[arg(long)]
    pub label: Option<String>,
}

impl MachineArgs {
    pub fn machine(&self) -> CliResult<MachineConfig> {
        let mut m = MachineConfig::preset(&self.platform)?.with_prefetch(self.prefetch == Switch::On);
        if let Some(k) = self.l1i_kib {
            m.l1i.capacity_bytes = k * 1024;
        }
        if let Some(k) = self.l1d_kib {
            m.l1d.capacity_bytes = k * 1024;
        }
        if let Some(w) = self.ways {
            m.l1i.associativity = w;
            m.l1d.associativity = w;
        }
        let label = match &self.label {
            Some(l) => l.clone(),
            None if self.prefetch == Switch::On => format!("{}+prefetch", m.label),
            None => m.label.clone(),
        };
        let m = m.with_label(label);
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceMeta {
    pub path: String,
    pub level: Level,
    pub workload: String,
    pub tags: Vec<String>,
    pub seed: Option<u64>,
    pub events: u64,
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))
}

fn is_binary(r: &mut BufReader<File>) -> CliResult<bool> {
    Ok(r.fill_buf()?.starts_with(MAGIC))
}

/// Feeds every event of a binary or JSON-lines trace to `f`. Binary traces
/// are streamed rather than loaded.
pub fn stream_trace(path: &Path, mut f: impl FnMut(&TraceEvent)) -> CliResult<TraceMeta> {
    let mut r = open(path)?;
    let meta = |level, workload: &str, tags: &[String], seed, events| TraceMeta {
        path: path.display().to_string(),
        level,
        workload: workload.to_string(),
        tags: tags.to_vec(),
        seed,
        events,
    };
    if is_binary(&mut r)? {
        let mut reader = TraceReader::new(r)?;
        let m = meta(
            reader.level,
            &reader.workload_name,
            &reader.tag_table,
            reader.seed,
            reader.event_count,
        );
        for e in reader.by_ref() {
            f(&e?);
        }
        reader.finish()?;
        Ok(m)
    } else {
        let t = read_trace_jsonl(r)?;
        t.events.iter().for_each(&mut f);
        Ok(meta(
            t.level,
            &t.workload_name,
            &t.tag_table,
            t.seed,
            t.events.len() as u64,
        ))
    }
}

pub fn load_trace(path: &Path) -> CliResult<Trace> {
    let mut r = open(path)?;
    if is_binary(&mut r)? {
        Ok(read_trace(r)?)
    } else {
        Ok(read_trace_jsonl(r)?)
    }
}

/// Store-safe report name.
pub fn report_name(parts: &[&str]) -> String {
    parts.join("-")
}
