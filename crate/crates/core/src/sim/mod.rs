//! Desk-scale microarchitecture model.
//!
//! Every event is one instruction fetch through L1I; loads and stores also
//! go through L1D; branches consult and train a bimodal predictor. Caches
//! start empty and no warm-up window is excluded. This is a model of the
//! counters a real machine would report, not a measurement.

pub mod cache;
pub mod knee;
pub mod predictor;
pub mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{Cache, CacheConfig, Replacement};
pub use knee::{detect_knee, Knee, KneeError, DEFAULT_THETA};
pub use predictor::{BimodalPredictor, PredictorConfig};

use crate::exec::Exec;
use crate::metrics::{mpki, MetricKind, MetricObservation};
use crate::trace::{EventKind, Level, Trace, TraceEvent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid simulator configuration: {0}")]
pub struct SimConfigError(pub String);

/// A named simulated machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub label: String,
    pub l1i: CacheConfig,
    pub l1d: CacheConfig,
    pub predictor: PredictorConfig,
}

pub const PRESETS: [&str; 2] = ["gold5120t-like", "kunpeng920-like"];

impl MachineConfig {
    /// 32 KiB, 64 B lines, 8-way L1I and L1D.
    pub fn gold5120t_like() -> Self {
        Self {
            label: "gold5120t-like".into(),
            l1i: CacheConfig::kib(32, 8),
            l1d: CacheConfig::kib(32, 8),
            predictor: PredictorConfig::default(),
        }
    }

    /// 64 KiB, 64 B lines, 4-way L1I and L1D.
    pub fn kunpeng920_like() -> Self {
        Self {
            label: "kunpeng920-like".into(),
            l1i: CacheConfig::kib(64, 4),
            l1d: CacheConfig::kib(64, 4),
            predictor: PredictorConfig::default(),
        }
    }

    pub fn preset(name: &str) -> Result<Self, SimConfigError> {
        match name {
            "gold5120t-like" => Ok(Self::gold5120t_like()),
            "kunpeng920-like" => Ok(Self::kunpeng920_like()),
            other => Err(SimConfigError(format!(
                "unknown platform `{other}`; available: {}",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn with_prefetch(mut self, on: bool) -> Self {
        self.l1i.prefetch_next_line = on;
        self.l1d.prefetch_next_line = on;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn validate(&self) -> Result<(), SimConfigError> {
        self.l1i.validate()?;
        self.l1d.validate()?;
        self.predictor.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimResult {
    pub instructions: u64,
    pub l1i_accesses: u64,
    pub l1i_misses: u64,
    pub l1d_accesses: u64,
    pub l1d_misses: u64,
    pub branches: u64,
    pub mispredictions: u64,
}

impl SimResult {
    fn per_kilo(&self, misses: u64) -> f64 {
        if self.instructions == 0 {
            0.0
        } else {
            mpki(misses, self.instructions)
        }
    }

    pub fn l1i_mpki(&self) -> f64 {
        self.per_kilo(self.l1i_misses)
    }

    pub fn l1d_mpki(&self) -> f64 {
        self.per_kilo(self.l1d_misses)
    }

    pub fn branch_mpki(&self) -> f64 {
        self.per_kilo(self.mispredictions)
    }

    /// UARCH-level observations; undefined when no instruction executed.
    pub fn observations(&self, workload: &str, config: &str) -> [MetricObservation; 3] {
        let defined = self.instructions > 0;
        let mk = |metric, v: f64| {
            MetricObservation::new(workload, Level::UARCH, metric, defined.then_some(v), self.instructions)
                .with_config(config)
        };
        [
            mk(MetricKind::L1iMpki, self.l1i_mpki()),
            mk(MetricKind::L1dMpki, self.l1d_mpki()),
            mk(MetricKind::BranchMpki, self.branch_mpki()),
        ]
    }

    pub fn to_report(&self, workload: &str, config: &str) -> SimReport {
        SimReport {
            workload: workload.to_string(),
            level: Level::UARCH,
            config: config.to_string(),
            counts: *self,
            l1i_mpki: self.l1i_mpki(),
            l1d_mpki: self.l1d_mpki(),
            branch_mpki: self.branch_mpki(),
        }
    }
}

/// JSON form of a simulation: identification, raw counts, derived MPKI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub workload: String,
    pub level: Level,
    pub config: String,
    #[serde(flatten)]
    pub counts: SimResult,
    pub l1i_mpki: f64,
    pub l1d_mpki: f64,
    pub branch_mpki: f64,
}

/// Mutable simulation state for one machine.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub l1i: Cache,
    pub l1d: Cache,
    pub predictor: BimodalPredictor,
    instructions: u64,
}

impl Simulator {
    pub fn new(machine: &MachineConfig) -> Result<Self, SimConfigError> {
        Self::from_parts(&machine.l1i, &machine.l1d, &machine.predictor)
    }

    pub fn from_parts(l1i: &CacheConfig, l1d: &CacheConfig, pred: &PredictorConfig) -> Result<Self, SimConfigError> {
        Ok(Self {
            l1i: Cache::new(l1i)?,
            l1d: Cache::new(l1d)?,
            predictor: BimodalPredictor::new(pred)?,
            instructions: 0,
        })
    }

    #[inline]
    pub fn step(&mut self, e: &TraceEvent) {
        self.instructions += 1;
        self.l1i.access(e.instr_addr);
        match e.kind {
            EventKind::Load | EventKind::Store => {
                self.l1d.access(e.data_or_target_addr);
            }
            EventKind::Branch => {
                self.predictor.observe(e.instr_addr, e.taken);
            }
            EventKind::Compute => {}
        }
    }

    pub fn result(&self) -> SimResult {
        SimResult {
            instructions: self.instructions,
            l1i_accesses: self.l1i.accesses,
            l1i_misses: self.l1i.misses,
            l1d_accesses: self.l1d.accesses,
            l1d_misses: self.l1d.misses,
            branches: self.predictor.branches,
            mispredictions: self.predictor.mispredictions,
        }
    }
}

pub fn simulate(
    trace: &Trace,
    l1i: &CacheConfig,
    l1d: &CacheConfig,
    pred: &PredictorConfig,
) -> Result<SimResult, SimConfigError> {
    let mut sim = Simulator::from_parts(l1i, l1d, pred)?;
    for e in &trace.events {
        sim.step(e);
    }
    Ok(sim.result())
}

pub fn simulate_machine(trace: &Trace, machine: &MachineConfig) -> Result<SimResult, SimConfigError> {
    simulate(trace, &machine.l1i, &machine.l1d, &machine.predictor)
}

/// Runs the same trace on every variant; one row per variant, in order.
pub fn config_sweep(
    trace: &Trace,
    variants: &[MachineConfig],
    exec: Exec,
) -> Result<Vec<(String, SimResult)>, SimConfigError> {
    if variants.is_empty() {
        return Err(SimConfigError(
            "a configuration sweep needs at least one variant".into(),
        ));
    }
    for v in variants {
        v.validate()?;
    }
    exec.map(variants, |v| simulate_machine(trace, v).map(|r| (v.label.clone(), r)))
        .into_iter()
        .collect()
}
