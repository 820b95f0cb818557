//! Parameter sweeps of a reference workload through the simulator.
//!
//! Each sweep point generates the workload at one `x`, measures its
//! trace-level locality and simulates it in the same streaming pass.
//! Iterations scale with `x` (`touches_per_element`) so every point touches
//! each element equally often and cold misses give the same MPKI floor
//! across the sweep.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{knee, MachineConfig, SimConfigError, SimResult, Simulator};
use crate::exec::Exec;
use crate::metrics::{LocalityAnalyzer, LocalityFamily, MetricObservation};
use crate::refgen::{GenError, GeneratorConfig, WorkloadKind};

pub const DEFAULT_TOUCHES_PER_ELEMENT: u64 = 100;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Generator(#[from] GenError),
    #[error(transparent)]
    Config(#[from] SimConfigError),
    #[error(transparent)]
    Knee(#[from] knee::KneeError),
    #[error("I/O error writing sweep: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Everything but `x`; `iterations` is the per-point minimum.
    pub template: GeneratorConfig,
    pub xs: Vec<u64>,
    pub machine: MachineConfig,
    pub touches_per_element: u64,
}

impl SweepSpec {
    pub fn new(template: GeneratorConfig, xs: Vec<u64>, machine: MachineConfig) -> Self {
        Self {
            template,
            xs,
            machine,
            touches_per_element: DEFAULT_TOUCHES_PER_ELEMENT,
        }
    }

    pub fn config_at(&self, x: u64) -> GeneratorConfig {
        GeneratorConfig {
            x,
            iterations: self.template.iterations.max(self.touches_per_element.saturating_mul(x)),
            ..self.template.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: u64,
    pub iterations: u64,
    /// Trace-level locality of the workload's own family. It does not
    /// depend on the machine, so it keeps the default config label.
    pub locality: MetricObservation,
    pub sim: SimResult,
}

pub fn family_of(kind: WorkloadKind) -> LocalityFamily {
    match kind {
        WorkloadKind::InstructionLocality => LocalityFamily::Instruction,
        WorkloadKind::DataLocality => LocalityFamily::Data,
        WorkloadKind::BranchLocality => LocalityFamily::Branch,
    }
}

/// Generates, measures and simulates one configuration in a single pass.
pub fn run_point(cfg: &GeneratorConfig, machine: &MachineConfig) -> Result<SweepPoint, SweepError> {
    let mut sim = Simulator::new(machine)?;
    let mut loc = LocalityAnalyzer::default();
    for e in cfg.events()? {
        loc.push(&e);
        sim.step(&e);
    }
    let family = family_of(cfg.workload_kind);
    let metric = family.metric_at(cfg.level);
    let locality = loc
        .finish(&cfg.workload_name(), cfg.level)
        .into_iter()
        .find(|o| o.metric == metric)
        .expect("analyzer reports every trace metric");
    Ok(SweepPoint {
        x: cfg.x,
        iterations: cfg.iterations,
        locality,
        sim: sim.result(),
    })
}

pub fn reference_sweep(spec: &SweepSpec, exec: Exec) -> Result<Vec<SweepPoint>, SweepError> {
    spec.machine.validate()?;
    let cfgs: Vec<GeneratorConfig> = spec.xs.iter().map(|&x| spec.config_at(x)).collect();
    for c in &cfgs {
        c.validate()?;
    }
    exec.map(&cfgs, |c| run_point(c, &spec.machine)).into_iter().collect()
}

/// `(x, mpki)` pairs of the family's UARCH metric.
pub fn mpki_series(points: &[SweepPoint], family: LocalityFamily) -> Vec<(u64, f64)> {
    points
        .iter()
        .map(|p| {
            let v = match family {
                LocalityFamily::Instruction => p.sim.l1i_mpki(),
                LocalityFamily::Data => p.sim.l1d_mpki(),
                LocalityFamily::Branch => p.sim.branch_mpki(),
            };
            (p.x, v)
        })
        .collect()
}

pub fn knee_of(points: &[SweepPoint], family: LocalityFamily, theta: f64) -> Result<knee::Knee, knee::KneeError> {
    knee::detect_knee(&mpki_series(points, family), theta)
}

/// Writes `x,config,l1i_mpki,l1d_mpki,branch_mpki` rows.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], config: &str, mut w: W) -> std::io::Result<()> {
    writeln!(w, "x,config,l1i_mpki,l1d_mpki,branch_mpki")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.x,
            config,
            p.sim.l1i_mpki(),
            p.sim.l1d_mpki(),
            p.sim.branch_mpki()
        )?;
    }
    Ok(())
}
