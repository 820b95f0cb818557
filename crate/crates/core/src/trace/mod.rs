//! Multi-level trace model.
//!
//! A [`Trace`] is an ordered sequence of executed instructions observed at
//! one [`Level`]. Each [`TraceEvent`] carries its code address, an optional
//! data address or branch target, the branch outcome, a privilege flag and a
//! component tag. Traces serialize to a fixed-record binary format
//! ([`binary`]) and to a JSON-lines mirror ([`jsonl`]). Hardware counter
//! dumps are ingested through [`counters`].

pub mod binary;
pub mod counters;
pub mod jsonl;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binary::{read_trace, write_trace, write_trace_stream, TraceReader};
pub use counters::{read_counters, CounterRecord};

/// Name of tag 0.
pub const UNTAGGED: &str = "untagged";

/// Stack level a trace or observation belongs to. Ordered IR < ISA < UARCH.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    IR,
    ISA,
    UARCH,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::IR, Level::ISA, Level::UARCH];

    pub fn code(self) -> u8 {
        match self {
            Level::IR => 0,
            Level::ISA => 1,
            Level::UARCH => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Level> {
        match code {
            0 => Some(Level::IR),
            1 => Some(Level::ISA),
            2 => Some(Level::UARCH),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::IR => "IR",
            Level::ISA => "ISA",
            Level::UARCH => "UARCH",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "IR" => Ok(Level::IR),
            "ISA" => Ok(Level::ISA),
            "UARCH" => Ok(Level::UARCH),
            other => Err(format!("unknown level `{other}` (expected IR, ISA or UARCH)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Compute,
    Load,
    Store,
    Branch,
}

impl EventKind {
    pub fn code(self) -> u8 {
        match self {
            EventKind::Compute => 0,
            EventKind::Load => 1,
            EventKind::Store => 2,
            EventKind::Branch => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<EventKind> {
        match code {
            0 => Some(EventKind::Compute),
            1 => Some(EventKind::Load),
            2 => Some(EventKind::Store),
            3 => Some(EventKind::Branch),
            _ => None,
        }
    }

    pub fn is_memory(self) -> bool {
        matches!(self, EventKind::Load | EventKind::Store)
    }
}

/// One executed instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub kind: EventKind,
    pub instr_addr: u64,
    /// Data address for loads and stores, branch target for branches, zero
    /// for compute events.
    pub data_or_target_addr: u64,
    pub taken: bool,
    pub kernel_mode: bool,
    pub tag_id: u16,
}

impl TraceEvent {
    pub fn compute(instr_addr: u64) -> Self {
        Self {
            kind: EventKind::Compute,
            instr_addr,
            data_or_target_addr: 0,
            taken: false,
            kernel_mode: false,
            tag_id: 0,
        }
    }

    pub fn load(instr_addr: u64, data_addr: u64) -> Self {
        Self {
            kind: EventKind::Load,
            data_or_target_addr: data_addr,
            ..Self::compute(instr_addr)
        }
    }

    pub fn store(instr_addr: u64, data_addr: u64) -> Self {
        Self {
            kind: EventKind::Store,
            data_or_target_addr: data_addr,
            ..Self::compute(instr_addr)
        }
    }

    pub fn branch(instr_addr: u64, target: u64, taken: bool) -> Self {
        Self {
            kind: EventKind::Branch,
            data_or_target_addr: target,
            taken,
            ..Self::compute(instr_addr)
        }
    }

    pub fn with_tag(mut self, tag_id: u16) -> Self {
        self.tag_id = tag_id;
        self
    }

    pub fn in_kernel(mut self, kernel_mode: bool) -> Self {
        self.kernel_mode = kernel_mode;
        self
    }

    /// Data address of a load or store.
    #[inline]
    pub fn data_addr(&self) -> Option<u64> {
        self.kind.is_memory().then_some(self.data_or_target_addr)
    }

    pub(crate) fn flags(&self) -> u8 {
        (self.taken as u8) | ((self.kernel_mode as u8) << 1)
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("I/O error at byte {position}: {source}")]
    Io {
        position: u64,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt trace: event {index} is truncated")]
    Truncated { index: u64 },
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("counter schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("counter parse error on line {line}: {message}")]
    CounterParse { line: u64, message: String },
}

/// An ordered sequence of events observed at one level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub level: Level,
    pub workload_name: String,
    /// Component names indexed by `tag_id`. When non-empty, entry 0 is
    /// [`UNTAGGED`].
    pub tag_table: Vec<String>,
    pub events: Vec<TraceEvent>,
    /// Generator seed, present for synthetic traces.
    pub seed: Option<u64>,
}

impl Trace {
    /// Empty trace whose tag table holds only the reserved untagged entry.
    pub fn new(level: Level, workload_name: impl Into<String>) -> Self {
        Self {
            level,
            workload_name: workload_name.into(),
            tag_table: vec![UNTAGGED.to_string()],
            events: Vec::new(),
            seed: None,
        }
    }

    /// Returns the id of `name`, appending it to the tag table if needed.
    pub fn intern_tag(&mut self, name: &str) -> u16 {
        if self.tag_table.is_empty() {
            self.tag_table.push(UNTAGGED.to_string());
        }
        if let Some(pos) = self.tag_table.iter().position(|t| t == name) {
            return pos as u16;
        }
        assert!(self.tag_table.len() < u16::MAX as usize, "tag table full");
        self.tag_table.push(name.to_string());
        (self.tag_table.len() - 1) as u16
    }

    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn tag_name(&self, tag_id: u16) -> Option<&str> {
        self.tag_table.get(tag_id as usize).map(String::as_str)
    }

    /// Checks the structural invariants required by the serializers.
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.workload_name.len() > u16::MAX as usize {
            return Err(TraceError::Invalid("workload name longer than 65535 bytes".into()));
        }
        if self.tag_table.len() > u16::MAX as usize {
            return Err(TraceError::Invalid("more than 65535 tags".into()));
        }
        if let Some(t) = self.tag_table.iter().find(|t| t.len() > u16::MAX as usize) {
            return Err(TraceError::Invalid(format!(
                "tag name of {} bytes exceeds 65535",
                t.len()
            )));
        }
        for (i, e) in self.events.iter().enumerate() {
            validate_event(e, self.tag_table.len(), i as u64)?;
        }
        Ok(())
    }
}

pub(crate) fn validate_event(e: &TraceEvent, tags: usize, index: u64) -> Result<(), TraceError> {
    if e.tag_id as usize >= tags {
        return Err(TraceError::Invalid(format!(
            "event {index}: tag {} not in tag table of {tags} entries",
            e.tag_id
        )));
    }
    if e.kind == EventKind::Compute && e.data_or_target_addr != 0 {
        return Err(TraceError::Invalid(format!(
            "event {index}: compute event with nonzero data address"
        )));
    }
    if e.taken && e.kind != EventKind::Branch {
        return Err(TraceError::Invalid(format!(
            "event {index}: taken flag on a non-branch event"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_ordering_and_codes() {
        assert!(Level::IR < Level::ISA && Level::ISA < Level::UARCH);
        for l in Level::ALL {
            assert_eq!(Level::from_code(l.code()), Some(l));
            assert_eq!(l.as_str().parse::<Level>().unwrap(), l);
        }
        assert_eq!(Level::from_code(3), None);
    }

    #[test]
    fn intern_tag_reuses_existing_ids() {
        let mut t = Trace::new(Level::IR, "w");
        let a = t.intern_tag("language");
        let b = t.intern_tag("framework");
        assert_eq!((a, b), (1, 2));
        assert_eq!(t.intern_tag("language"), 1);
        assert_eq!(t.intern_tag(UNTAGGED), 0);
    }

    #[test]
    fn validate_rejects_dangling_tag() {
        let mut t = Trace::new(Level::ISA, "w");
        t.push(TraceEvent::compute(0x10).with_tag(3));
        assert!(matches!(t.validate(), Err(TraceError::Invalid(_))));
    }

    #[test]
    fn validate_rejects_compute_with_address() {
        let mut t = Trace::new(Level::ISA, "w");
        let mut e = TraceEvent::compute(0x10);
        e.data_or_target_addr = 8;
        t.push(e);
        assert!(t.validate().is_err());
    }
}
