//! Binary trace format, version 1. All integers little-endian.
//!
//! ```text
//! header:
//!   magic            4 bytes  "WPC1"
//!   version          u16      1
//!   level            u8       0 = IR, 1 = ISA, 2 = UARCH
//!   reserved         u8       0
//!   name             u16 length + UTF-8 bytes
//!   tag count        u16, then per tag: u16 length + UTF-8 bytes
//!   seed present     u8 (0/1), then u64 seed if present
//!   event count      u64
//! event record (20 bytes):
//!   kind             u8       0 Compute, 1 Load, 2 Store, 3 Branch
//!   flags            u8       bit0 taken, bit1 kernel_mode
//!   tag_id           u16
//!   instr_addr       u64
//!   data_or_target   u64
//! ```

use std::io::{self, Read, Write};

use super::{validate_event, EventKind, Level, Trace, TraceError, TraceEvent};

pub const MAGIC: &[u8; 4] = b"WPC1";
pub const VERSION: u16 = 1;
pub const EVENT_RECORD_BYTES: usize = 20;

const FLAG_TAKEN: u8 = 0b01;
const FLAG_KERNEL: u8 = 0b10;

struct CountingWriter<W> {
    inner: W,
    written: u64,
}

impl<W: Write> CountingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<(), TraceError> {
        self.inner.write_all(bytes).map_err(|source| TraceError::Io {
            position: self.written,
            source,
        })?;
        self.written += bytes.len() as u64;
        Ok(())
    }

    fn put_str(&mut self, s: &str) -> Result<(), TraceError> {
        self.put(&(s.len() as u16).to_le_bytes())?;
        self.put(s.as_bytes())
    }
}

/// Size in bytes of the header `trace` serializes to.
pub fn header_len(trace: &Trace) -> u64 {
    let tags: usize = trace.tag_table.iter().map(|t| 2 + t.len()).sum();
    let seed = if trace.seed.is_some() { 9 } else { 1 };
    (4 + 2 + 1 + 1 + 2 + trace.workload_name.len() + 2 + tags + seed + 8) as u64
}

pub fn encode_event(e: &TraceEvent) -> [u8; EVENT_RECORD_BYTES] {
    let mut rec = [0u8; EVENT_RECORD_BYTES];
    rec[0] = e.kind.code();
    rec[1] = e.flags();
    rec[2..4].copy_from_slice(&e.tag_id.to_le_bytes());
    rec[4..12].copy_from_slice(&e.instr_addr.to_le_bytes());
    rec[12..20].copy_from_slice(&e.data_or_target_addr.to_le_bytes());
    rec
}

pub fn decode_event(rec: &[u8; EVENT_RECORD_BYTES]) -> Result<TraceEvent, TraceError> {
    let kind = EventKind::from_code(rec[0])
        .ok_or_else(|| TraceError::Format(format!("unknown event kind byte {}", rec[0])))?;
    let flags = rec[1];
    if flags & !(FLAG_TAKEN | FLAG_KERNEL) != 0 {
        return Err(TraceError::Format(format!("unknown flag bits {flags:#04x}")));
    }
    Ok(TraceEvent {
        kind,
        taken: flags & FLAG_TAKEN != 0,
        kernel_mode: flags & FLAG_KERNEL != 0,
        tag_id: u16::from_le_bytes([rec[2], rec[3]]),
        instr_addr: u64::from_le_bytes(rec[4..12].try_into().unwrap()),
        data_or_target_addr: u64::from_le_bytes(rec[12..20].try_into().unwrap()),
    })
}

/// Serializes `trace` and returns the number of bytes written.
pub fn write_trace<W: Write>(trace: &Trace, sink: W) -> Result<u64, TraceError> {
    trace.validate()?;
    write_header_and(trace, trace.events.len() as u64, trace.events.iter().copied(), sink)
}

/// Serializes a trace whose events come from an iterator. `header`
/// supplies level, name, tags and seed (its own events are ignored);
/// `count` must equal the number of events the iterator yields.
pub fn write_trace_stream<W, I>(header: &Trace, count: u64, events: I, sink: W) -> Result<u64, TraceError>
where
    W: Write,
    I: IntoIterator<Item = TraceEvent>,
{
    let meta = Trace {
        events: Vec::new(),
        ..header.clone()
    };
    meta.validate()?;
    let tags = meta.tag_table.len();
    let mut index = 0u64;
    let mut bad = None;
    let checked = events.into_iter().map_while(|e| match validate_event(&e, tags, index) {
        Ok(()) => {
            index += 1;
            Some(e)
        }
        Err(err) => {
            bad = Some(err);
            None
        }
    });
    let written = write_header_and(&meta, count, checked, sink)?;
    if let Some(err) = bad {
        return Err(err);
    }
    if index != count {
        return Err(TraceError::Invalid(format!(
            "header promised {count} events, stream yielded {index}"
        )));
    }
    Ok(written)
}

fn write_header_and<W: Write>(
    meta: &Trace,
    count: u64,
    events: impl Iterator<Item = TraceEvent>,
    sink: W,
) -> Result<u64, TraceError> {
    let mut w = CountingWriter {
        inner: sink,
        written: 0,
    };
    w.put(MAGIC)?;
    w.put(&VERSION.to_le_bytes())?;
    w.put(&[meta.level.code(), 0])?;
    w.put_str(&meta.workload_name)?;
    w.put(&(meta.tag_table.len() as u16).to_le_bytes())?;
    for tag in &meta.tag_table {
        w.put_str(tag)?;
    }
    match meta.seed {
        Some(seed) => {
            w.put(&[1])?;
            w.put(&seed.to_le_bytes())?;
        }
        None => w.put(&[0])?,
    }
    w.put(&count.to_le_bytes())?;
    // Batch records to keep the per-event cost down on unbuffered sinks.
    const BATCH: usize = 4096;
    let mut buf = Vec::with_capacity(EVENT_RECORD_BYTES * BATCH);
    for e in events {
        buf.extend_from_slice(&encode_event(&e));
        if buf.len() == buf.capacity() {
            w.put(&buf)?;
            buf.clear();
        }
    }
    w.put(&buf)?;
    w.inner.flush().map_err(|source| TraceError::Io {
        position: w.written,
        source,
    })?;
    Ok(w.written)
}

/// Streaming reader: parses the header eagerly, then yields events one at a
/// time without materializing the whole trace.
pub struct TraceReader<R> {
    inner: R,
    position: u64,
    pub level: Level,
    pub workload_name: String,
    pub tag_table: Vec<String>,
    pub seed: Option<u64>,
    pub event_count: u64,
    next_index: u64,
    failed: bool,
}

impl<R: Read> TraceReader<R> {
    pub fn new(inner: R) -> Result<Self, TraceError> {
        let mut h = HeaderCursor { inner, position: 0 };

        let magic = h.take(4, "magic")?;
        if magic != MAGIC {
            return Err(TraceError::Format(format!(
                "bad magic {:?}, expected \"WPC1\"",
                String::from_utf8_lossy(&magic)
            )));
        }
        let version = h.u16("version")?;
        if version != VERSION {
            return Err(TraceError::Format(format!("unsupported version {version}")));
        }
        let lv = h.take(2, "level")?;
        let level =
            Level::from_code(lv[0]).ok_or_else(|| TraceError::Format(format!("unknown level byte {}", lv[0])))?;
        if lv[1] != 0 {
            return Err(TraceError::Format("reserved header byte is nonzero".into()));
        }
        let workload_name = h.string("workload name")?;
        let tag_count = h.u16("tag count")?;
        let mut tag_table = Vec::with_capacity(tag_count as usize);
        for _ in 0..tag_count {
            tag_table.push(h.string("tag name")?);
        }
        let seed = match h.take(1, "seed flag")?[0] {
            0 => None,
            1 => Some(h.u64("seed")?),
            b => return Err(TraceError::Format(format!("invalid seed flag {b}"))),
        };
        let event_count = h.u64("event count")?;

        Ok(Self {
            inner: h.inner,
            position: h.position,
            level,
            workload_name,
            tag_table,
            seed,
            event_count,
            next_index: 0,
            failed: false,
        })
    }

    fn read_event(&mut self) -> Result<TraceEvent, TraceError> {
        let index = self.next_index;
        let mut rec = [0u8; EVENT_RECORD_BYTES];
        let got = read_full(&mut self.inner, &mut rec, self.position)?;
        if got < EVENT_RECORD_BYTES {
            return Err(TraceError::Truncated { index });
        }
        self.position += EVENT_RECORD_BYTES as u64;
        let event = decode_event(&rec).map_err(|e| match e {
            TraceError::Format(m) => TraceError::Format(format!("event {index}: {m}")),
            other => other,
        })?;
        validate_event(&event, self.tag_table.len(), index)?;
        self.next_index += 1;
        Ok(event)
    }

    /// Consumes the reader, checking that nothing follows the last event.
    pub fn finish(mut self) -> Result<(), TraceError> {
        if self.next_index != self.event_count {
            return Err(TraceError::Format(format!(
                "finish called after {} of {} events",
                self.next_index, self.event_count
            )));
        }
        let mut probe = [0u8; 1];
        if read_full(&mut self.inner, &mut probe, self.position)? != 0 {
            return Err(TraceError::Format(format!(
                "trailing bytes after {} events",
                self.event_count
            )));
        }
        Ok(())
    }
}

impl<R: Read> Iterator for TraceReader<R> {
    type Item = Result<TraceEvent, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.next_index >= self.event_count {
            return None;
        }
        let r = self.read_event();
        self.failed = r.is_err();
        Some(r)
    }
}

/// Reads a complete trace.
pub fn read_trace<R: Read>(source: R) -> Result<Trace, TraceError> {
    let mut reader = TraceReader::new(source)?;
    // Cap the up-front reservation; a corrupt count must not trigger a huge allocation.
    let mut events = Vec::with_capacity(reader.event_count.min(1 << 20) as usize);
    for e in reader.by_ref() {
        events.push(e?);
    }
    let trace = Trace {
        level: reader.level,
        workload_name: std::mem::take(&mut reader.workload_name),
        tag_table: std::mem::take(&mut reader.tag_table),
        events,
        seed: reader.seed,
    };
    reader.finish()?;
    Ok(trace)
}

struct HeaderCursor<R> {
    inner: R,
    position: u64,
}

impl<R: Read> HeaderCursor<R> {
    fn take(&mut self, n: usize, what: &str) -> Result<Vec<u8>, TraceError> {
        let mut buf = vec![0u8; n];
        let got = read_full(&mut self.inner, &mut buf, self.position)?;
        if got < n {
            return Err(TraceError::Format(format!("header truncated while reading {what}")));
        }
        self.position += n as u64;
        Ok(buf)
    }

    fn u16(&mut self, what: &str) -> Result<u16, TraceError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, TraceError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String, TraceError> {
        let len = self.u16(what)? as usize;
        String::from_utf8(self.take(len, what)?).map_err(|_| TraceError::Format(format!("{what} is not valid UTF-8")))
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8], position: u64) -> Result<usize, TraceError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(source) => {
                return Err(TraceError::Io {
                    position: position + got as u64,
                    source,
                })
            }
        }
    }
    Ok(got)
}
