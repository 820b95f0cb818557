//! JSON-lines mirror of the binary format, for inspection and hand-written
//! fixtures. Line 1 is the header; each following line is one event.
//!
//! ```text
//! {"magic":"WPC1","version":1,"level":"IR","workload":"w","tags":["untagged"],"seed":7,"event_count":1}
//! {"kind":"Load","taken":false,"kernel_mode":false,"tag_id":0,"instr_addr":4194304,"data_or_target_addr":268435456}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{validate_event, EventKind, Level, Trace, TraceError, TraceEvent};

#[derive(Serialize, Deserialize)]
struct Header {
    magic: String,
    version: u16,
    level: Level,
    workload: String,
    tags: Vec<String>,
    seed: Option<u64>,
    event_count: u64,
}

#[derive(Serialize, Deserialize)]
struct EventLine {
    kind: EventKind,
    taken: bool,
    kernel_mode: bool,
    tag_id: u16,
    instr_addr: u64,
    data_or_target_addr: u64,
}

pub fn write_trace_jsonl<W: Write>(trace: &Trace, mut sink: W) -> Result<(), TraceError> {
    trace.validate()?;
    let io = |source| TraceError::Io { position: 0, source };
    let header = Header {
        magic: "WPC1".into(),
        version: super::binary::VERSION,
        level: trace.level,
        workload: trace.workload_name.clone(),
        tags: trace.tag_table.clone(),
        seed: trace.seed,
        event_count: trace.events.len() as u64,
    };
    serde_json::to_writer(&mut sink, &header).map_err(|e| TraceError::Format(e.to_string()))?;
    sink.write_all(b"\n").map_err(io)?;
    for e in &trace.events {
        let line = EventLine {
            kind: e.kind,
            taken: e.taken,
            kernel_mode: e.kernel_mode,
            tag_id: e.tag_id,
            instr_addr: e.instr_addr,
            data_or_target_addr: e.data_or_target_addr,
        };
        serde_json::to_writer(&mut sink, &line).map_err(|e| TraceError::Format(e.to_string()))?;
        sink.write_all(b"\n").map_err(io)?;
    }
    sink.flush().map_err(io)
}

pub fn read_trace_jsonl<R: BufRead>(source: R) -> Result<Trace, TraceError> {
    let mut lines = source.lines();
    let first = lines
        .next()
        .ok_or_else(|| TraceError::Format("empty JSON-lines trace".into()))?
        .map_err(|source| TraceError::Io { position: 0, source })?;
    let header: Header = serde_json::from_str(&first).map_err(|e| TraceError::Format(format!("header: {e}")))?;
    if header.magic != "WPC1" {
        return Err(TraceError::Format(format!("bad magic {:?}", header.magic)));
    }
    let mut events = Vec::with_capacity(header.event_count.min(1 << 20) as usize);
    for (index, line) in lines.enumerate() {
        let line = line.map_err(|source| TraceError::Io { position: 0, source })?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: EventLine =
            serde_json::from_str(&line).map_err(|e| TraceError::Format(format!("event {index}: {e}")))?;
        let event = TraceEvent {
            kind: ev.kind,
            taken: ev.taken,
            kernel_mode: ev.kernel_mode,
            tag_id: ev.tag_id,
            instr_addr: ev.instr_addr,
            data_or_target_addr: ev.data_or_target_addr,
        };
        validate_event(&event, header.tags.len(), index as u64)?;
        events.push(event);
    }
    if events.len() as u64 != header.event_count {
        return Err(TraceError::Truncated {
            index: events.len() as u64,
        });
    }
    Ok(Trace {
        level: header.level,
        workload_name: header.workload,
        tag_table: header.tags,
        events,
        seed: header.seed,
    })
}
