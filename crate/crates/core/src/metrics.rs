//! Locality metrics: reuse distance, linear branch entropy, MPKI.
//!
//! Reuse distance here is the mean index gap between consecutive accesses to
//! the same address (adjacent repeats have gap 1); first touches contribute
//! nothing. The instruction variant indexes every event, the data variant
//! indexes only loads and stores. All analyzers are single-pass folds and
//! can be fed from a streaming reader.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::trace::{CounterRecord, EventKind, Level, Trace, TraceEvent};

pub const DEFAULT_CONFIG: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    InstrReuseDist,
    DataReuseDist,
    BranchEntropy,
    #[serde(rename = "L1I_MPKI")]
    L1iMpki,
    #[serde(rename = "L1D_MPKI")]
    L1dMpki,
    #[serde(rename = "Branch_MPKI")]
    BranchMpki,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::InstrReuseDist,
        MetricKind::DataReuseDist,
        MetricKind::BranchEntropy,
        MetricKind::L1iMpki,
        MetricKind::L1dMpki,
        MetricKind::BranchMpki,
    ];

    /// Canonical name, as written in JSON.
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::InstrReuseDist => "InstrReuseDist",
            MetricKind::DataReuseDist => "DataReuseDist",
            MetricKind::BranchEntropy => "BranchEntropy",
            MetricKind::L1iMpki => "L1I_MPKI",
            MetricKind::L1dMpki => "L1D_MPKI",
            MetricKind::BranchMpki => "Branch_MPKI",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            MetricKind::InstrReuseDist => "inst-rd",
            MetricKind::DataReuseDist => "data-rd",
            MetricKind::BranchEntropy => "branch-entropy",
            MetricKind::L1iMpki => "l1i-mpki",
            MetricKind::L1dMpki => "l1d-mpki",
            MetricKind::BranchMpki => "branch-mpki",
        }
    }

    pub fn is_mpki(self) -> bool {
        matches!(self, MetricKind::L1iMpki | MetricKind::L1dMpki | MetricKind::BranchMpki)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s) || m.short_name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = MetricKind::ALL.iter().map(|m| m.short_name()).collect();
                format!("unknown metric `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// The three locality families and the metric that represents each at a
/// given level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocalityFamily {
    Instruction,
    Data,
    Branch,
}

impl LocalityFamily {
    pub fn metric_at(self, level: Level) -> MetricKind {
        match (self, level) {
            (LocalityFamily::Instruction, Level::UARCH) => MetricKind::L1iMpki,
            (LocalityFamily::Instruction, _) => MetricKind::InstrReuseDist,
            (LocalityFamily::Data, Level::UARCH) => MetricKind::L1dMpki,
            (LocalityFamily::Data, _) => MetricKind::DataReuseDist,
            (LocalityFamily::Branch, Level::UARCH) => MetricKind::BranchMpki,
            (LocalityFamily::Branch, _) => MetricKind::BranchEntropy,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            LocalityFamily::Instruction => "inst",
            LocalityFamily::Data => "data",
            LocalityFamily::Branch => "branch",
        }
    }
}

impl FromStr for LocalityFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inst" | "instruction" => Ok(LocalityFamily::Instruction),
            "data" => Ok(LocalityFamily::Data),
            "branch" => Ok(LocalityFamily::Branch),
            other => Err(format!(
                "unknown locality family `{other}` (expected inst, data or branch)"
            )),
        }
    }
}

/// One locality value at one level. `value` is `None` when the metric is
/// undefined (no reuse, no branches); it is never silently zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ObservationJson", try_from = "ObservationJson")]
pub struct MetricObservation {
    pub workload_name: String,
    pub level: Level,
    pub metric: MetricKind,
    pub value: Option<f64>,
    pub sample_count: u64,
    pub config_label: String,
}

impl MetricObservation {
    pub fn new(
        workload_name: impl Into<String>,
        level: Level,
        metric: MetricKind,
        value: Option<f64>,
        sample_count: u64,
    ) -> Self {
        Self {
            workload_name: workload_name.into(),
            level,
            metric,
            value,
            sample_count,
            config_label: DEFAULT_CONFIG.to_string(),
        }
    }

    pub fn with_config(mut self, label: impl Into<String>) -> Self {
        self.config_label = label.into();
        self
    }

    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }
}

#[derive(Serialize, Deserialize)]
struct ObservationJson {
    workload: String,
    level: Level,
    metric: MetricKind,
    value: Option<f64>,
    defined: bool,
    samples: u64,
    config: String,
}

impl From<MetricObservation> for ObservationJson {
    fn from(o: MetricObservation) -> Self {
        Self {
            workload: o.workload_name,
            level: o.level,
            metric: o.metric,
            defined: o.value.is_some(),
            value: o.value,
            samples: o.sample_count,
            config: o.config_label,
        }
    }
}

impl TryFrom<ObservationJson> for MetricObservation {
    type Error = String;

    fn try_from(j: ObservationJson) -> Result<Self, Self::Error> {
        if j.defined != j.value.is_some() {
            return Err("`defined` disagrees with `value`".into());
        }
        if let Some(v) = j.value {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("value {v} is not a finite non-negative number"));
            }
            if j.metric == MetricKind::BranchEntropy && v > 1.0 {
                return Err(format!("branch entropy {v} exceeds 1"));
            }
        }
        Ok(Self {
            workload_name: j.workload,
            level: j.level,
            metric: j.metric,
            value: j.value,
            sample_count: j.samples,
            config_label: j.config,
        })
    }
}

/// Consecutive-access gap tracker over an arbitrary key stream.
#[derive(Debug, Default, Clone)]
pub struct ReuseCounter {
    last_seen: FxHashMap<u64, u64>,
    next_index: u64,
    gap_sum: u128,
    gaps: u64,
}

impl ReuseCounter {
    /// Records one access and returns its gap to the previous access of the
    /// same key, if any.
    #[inline]
    pub fn observe(&mut self, key: u64) -> Option<u64> {
        let index = self.next_index;
        self.next_index += 1;
        let prev = self.last_seen.insert(key, index)?;
        let gap = index - prev;
        self.gap_sum += gap as u128;
        self.gaps += 1;
        Some(gap)
    }

    pub fn accesses(&self) -> u64 {
        self.next_index
    }

    pub fn gaps(&self) -> u64 {
        self.gaps
    }

    pub fn gap_sum(&self) -> u128 {
        self.gap_sum
    }

    pub fn distinct(&self) -> usize {
        self.last_seen.len()
    }

    pub fn mean(&self) -> Option<f64> {
        (self.gaps > 0).then(|| self.gap_sum as f64 / self.gaps as f64)
    }
}

/// Per static branch counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub taken: u64,
    pub total: u64,
}

impl BranchCounts {
    pub fn taken_probability(&self) -> f64 {
        self.taken as f64 / self.total as f64
    }

    /// Linear entropy `2 min(p, 1 - p)`.
    pub fn entropy(&self) -> f64 {
        let p = self.taken_probability();
        2.0 * p.min(1.0 - p)
    }
}

/// Branch outcome statistics keyed by branch address.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchStats {
    pub branches: BTreeMap<u64, BranchCounts>,
}

impl BranchStats {
    pub fn executions(&self) -> u64 {
        self.branches.values().map(|c| c.total).sum()
    }

    /// Execution-weighted mean of per-branch entropy.
    pub fn weighted_entropy(&self) -> Option<f64> {
        let total = self.executions();
        if total == 0 {
            return None;
        }
        let mass: f64 = self.branches.values().map(|c| c.entropy() * c.total as f64).sum();
        Some((mass / total as f64).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Default)]
pub struct BranchEntropyAnalyzer {
    // Hot loop: hash map, converted to an ordered map on finish.
    counts: FxHashMap<u64, BranchCounts>,
}

impl BranchEntropyAnalyzer {
    #[inline]
    pub fn push(&mut self, e: &TraceEvent) {
        if e.kind == EventKind::Branch {
            let c = self.counts.entry(e.instr_addr).or_default();
            c.total += 1;
            c.taken += e.taken as u64;
        }
    }

    pub fn stats(&self) -> BranchStats {
        BranchStats {
            branches: self.counts.iter().map(|(&a, &c)| (a, c)).collect(),
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.stats().weighted_entropy()
    }
}

pub fn instruction_reuse_distance(trace: &Trace) -> MetricObservation {
    let mut rd = ReuseCounter::default();
    for e in &trace.events {
        rd.observe(e.instr_addr);
    }
    MetricObservation::new(
        &trace.workload_name,
        trace.level,
        MetricKind::InstrReuseDist,
        rd.mean(),
        rd.gaps(),
    )
}

pub fn data_reuse_distance(trace: &Trace) -> MetricObservation {
    let mut rd = ReuseCounter::default();
    for a in trace.events.iter().filter_map(TraceEvent::data_addr) {
        rd.observe(a);
    }
    MetricObservation::new(
        &trace.workload_name,
        trace.level,
        MetricKind::DataReuseDist,
        rd.mean(),
        rd.gaps(),
    )
}

pub fn branch_entropy(trace: &Trace) -> (MetricObservation, BranchStats) {
    let mut be = BranchEntropyAnalyzer::default();
    for e in &trace.events {
        be.push(e);
    }
    let stats = be.stats();
    let obs = MetricObservation::new(
        &trace.workload_name,
        trace.level,
        MetricKind::BranchEntropy,
        stats.weighted_entropy(),
        stats.executions(),
    );
    (obs, stats)
}

/// All three trace metrics in a single pass over an event stream.
#[derive(Debug, Default)]
pub struct LocalityAnalyzer {
    instr: ReuseCounter,
    data: ReuseCounter,
    branch: BranchEntropyAnalyzer,
}

impl LocalityAnalyzer {
    #[inline]
    pub fn push(&mut self, e: &TraceEvent) {
        self.instr.observe(e.instr_addr);
        if let Some(a) = e.data_addr() {
            self.data.observe(a);
        }
        self.branch.push(e);
    }

    pub fn finish(self, workload: &str, level: Level) -> [MetricObservation; 3] {
        let stats = self.branch.stats();
        [
            MetricObservation::new(
                workload,
                level,
                MetricKind::InstrReuseDist,
                self.instr.mean(),
                self.instr.gaps(),
            ),
            MetricObservation::new(
                workload,
                level,
                MetricKind::DataReuseDist,
                self.data.mean(),
                self.data.gaps(),
            ),
            MetricObservation::new(
                workload,
                level,
                MetricKind::BranchEntropy,
                stats.weighted_entropy(),
                stats.executions(),
            ),
        ]
    }
}

pub fn analyze_trace(trace: &Trace) -> [MetricObservation; 3] {
    let mut a = LocalityAnalyzer::default();
    for e in &trace.events {
        a.push(e);
    }
    a.finish(&trace.workload_name, trace.level)
}

pub fn mpki(misses: u64, instructions: u64) -> f64 {
    misses as f64 * 1000.0 / instructions as f64
}

/// Converts a counter record into L1I, L1D and branch MPKI observations at
/// the UARCH level. Records with zero instructions are rejected by the
/// parser, so the division is always defined.
pub fn mpki_from_counters(record: &CounterRecord) -> [MetricObservation; 3] {
    let mk = |metric, misses| {
        MetricObservation::new(
            &record.workload_name,
            Level::UARCH,
            metric,
            Some(mpki(misses, record.instructions)),
            record.instructions,
        )
        .with_config(&record.config_label)
    };
    [
        mk(MetricKind::L1iMpki, record.l1i_misses),
        mk(MetricKind::L1dMpki, record.l1d_misses),
        mk(MetricKind::BranchMpki, record.branch_mispredictions),
    ]
}
