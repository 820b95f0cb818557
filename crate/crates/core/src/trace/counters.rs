//! Hardware counter ingestion.
//!
//! Counter dumps from external tools arrive as CSV with the header
//! `workload,instructions,l1i_misses,l1d_misses,branch_mispredictions,config`.
//! Column order is free; all six columns are required.

use std::io::Read;

use serde::{Deserialize, Serialize};

use super::TraceError;

pub const COUNTER_COLUMNS: [&str; 6] = [
    "workload",
    "instructions",
    "l1i_misses",
    "l1d_misses",
    "branch_mispredictions",
    "config",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterRecord {
    pub workload_name: String,
    pub instructions: u64,
    pub l1i_misses: u64,
    pub l1d_misses: u64,
    pub branch_mispredictions: u64,
    pub config_label: String,
}

pub fn read_counters<R: Read>(source: R) -> Result<Vec<CounterRecord>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let headers = rdr
        .headers()
        .map_err(|e| TraceError::CounterParse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut cols = [0usize; 6];
    for (slot, name) in cols.iter_mut().zip(COUNTER_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TraceError::MissingColumn(name.to_string()))?;
    }

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| TraceError::CounterParse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(str::is_empty) {
            continue;
        }
        let field = |i: usize| -> Result<&str, TraceError> {
            row.get(cols[i]).ok_or_else(|| TraceError::CounterParse {
                line,
                message: format!("missing value for `{}`", COUNTER_COLUMNS[i]),
            })
        };
        let count = |i: usize| -> Result<u64, TraceError> {
            let raw = field(i)?;
            raw.parse::<u64>().map_err(|_| TraceError::CounterParse {
                line,
                message: format!("`{}` is not a non-negative integer: {raw:?}", COUNTER_COLUMNS[i]),
            })
        };
        let record = CounterRecord {
            workload_name: field(0)?.to_string(),
            instructions: count(1)?,
            l1i_misses: count(2)?,
            l1d_misses: count(3)?,
            branch_mispredictions: count(4)?,
            config_label: field(5)?.to_string(),
        };
        if record.instructions == 0 {
            return Err(TraceError::CounterParse {
                line,
                message: "instructions must be positive".into(),
            });
        }
        out.push(record);
    }
    Ok(out)
}
