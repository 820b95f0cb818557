//! Standard reference workloads.
//!
//! Three synthetic loops whose locality has a closed-form expectation:
//!
//! | kind                | per iteration                                   | prediction          |
//! |---------------------|-------------------------------------------------|---------------------|
//! | DataLocality        | load `data_base + stride * u`, `u ~ U[0, x)`    | data RD = x         |
//! | InstructionLocality | call function `u ~ U[0, x)` of `b` instructions | instr RD = x * b    |
//! | BranchLocality      | one branch, taken iff `r < x`, `r ~ U[0, m)`    | 2 min(x/m, 1 - x/m) |
//!
//! Every iteration starts with `h` harness instructions (loop control) at
//! fixed addresses, optionally followed by `harness_loads` fixed-address
//! loads (spilled loop state). Harness events shift the measured values to
//! `b * x + h` (instruction) and `x + harness_loads` (data); see
//! [`expected_measurement`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::metrics::{BranchEntropyAnalyzer, ReuseCounter};
use crate::rng::SplitMix64;
use crate::trace::{Level, Trace, TraceEvent};

pub const DATA_BASE: u64 = 0x1000_0000;
pub const CODE_BASE: u64 = 0x40_0000;
pub const HARNESS_BASE: u64 = CODE_BASE - 256;
/// Base of the fixed slots read by harness loads.
pub const STACK_BASE: u64 = 0x7fff_0000;
pub const BRANCH_TARGET_OFFSET: u64 = 0x100;
/// Harness instructions (compute + loads) that fit below the code base.
pub const MAX_HARNESS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkloadKind {
    DataLocality,
    InstructionLocality,
    BranchLocality,
}

impl WorkloadKind {
    pub fn short_name(self) -> &'static str {
        match self {
            WorkloadKind::DataLocality => "data",
            WorkloadKind::InstructionLocality => "inst",
            WorkloadKind::BranchLocality => "branch",
        }
    }
}

impl std::str::FromStr for WorkloadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "data" => Ok(WorkloadKind::DataLocality),
            "inst" | "instruction" => Ok(WorkloadKind::InstructionLocality),
            "branch" => Ok(WorkloadKind::BranchLocality),
            other => Err(format!(
                "unknown workload kind `{other}` (expected data, inst or branch)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub workload_kind: WorkloadKind,
    pub x: u64,
    pub iterations: u64,
    /// Instructions per function body.
    pub b: u32,
    /// Harness compute instructions per iteration.
    pub h: u32,
    /// Exclusive upper bound of the branch draw.
    pub m: u64,
    pub element_stride: u64,
    pub function_stride: u64,
    /// Harness loads per iteration, each to its own fixed slot.
    #[serde(default)]
    pub harness_loads: u32,
    pub seed: u64,
    pub level: Level,
}

impl GeneratorConfig {
    pub fn new(workload_kind: WorkloadKind, x: u64, iterations: u64, seed: u64) -> Self {
        Self {
            workload_kind,
            x,
            iterations,
            b: 5,
            h: 2,
            m: 1000,
            element_stride: 8,
            function_stride: 32,
            harness_loads: 0,
            seed,
            level: Level::IR,
        }
    }

    pub fn data(x: u64, iterations: u64, seed: u64) -> Self {
        Self::new(WorkloadKind::DataLocality, x, iterations, seed)
    }

    pub fn instruction(x: u64, iterations: u64, seed: u64) -> Self {
        Self::new(WorkloadKind::InstructionLocality, x, iterations, seed)
    }

    pub fn branch(x: u64, iterations: u64, seed: u64) -> Self {
        Self::new(WorkloadKind::BranchLocality, x, iterations, seed)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |msg: String| Err(GenError::Parameter(msg));
        match self.workload_kind {
            WorkloadKind::BranchLocality => {
                if self.m < 2 {
                    return bad(format!("m must be at least 2, got {}", self.m));
                }
                if self.x > self.m {
                    return bad(format!("x = {} exceeds m = {}", self.x, self.m));
                }
            }
            _ if self.x == 0 => return bad("x must be at least 1".into()),
            _ => {}
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.b == 0 {
            return bad("b must be at least 1".into());
        }
        if !self.element_stride.is_power_of_two() {
            return bad(format!("element_stride {} is not a power of two", self.element_stride));
        }
        if !self.function_stride.is_power_of_two() {
            return bad(format!(
                "function_stride {} is not a power of two",
                self.function_stride
            ));
        }
        if self.workload_kind == WorkloadKind::InstructionLocality && 4 * self.b as u64 > self.function_stride {
            return bad(format!(
                "function body of {} instructions does not fit in stride {}",
                self.b, self.function_stride
            ));
        }
        if self.h + self.harness_loads > MAX_HARNESS {
            return bad(format!(
                "harness of {} instructions exceeds the {MAX_HARNESS}-slot harness region",
                self.h + self.harness_loads
            ));
        }
        if self.level == Level::UARCH {
            return bad("reference traces are stamped IR or ISA".into());
        }
        Ok(())
    }

    pub fn events_per_iteration(&self) -> u32 {
        let payload = match self.workload_kind {
            WorkloadKind::InstructionLocality => self.b,
            _ => 1,
        };
        self.h + self.harness_loads + payload
    }

    pub fn workload_name(&self) -> String {
        format!("ref-{}-x{}", self.workload_kind.short_name(), self.x)
    }

    /// Streams the trace events without materializing them.
    pub fn events(&self) -> Result<ReferenceEvents, GenError> {
        self.validate()?;
        Ok(ReferenceEvents {
            cfg: self.clone(),
            rng: SplitMix64::new(self.seed),
            iteration: 0,
            pos: 0,
            choice: 0,
            per_iteration: self.events_per_iteration(),
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GenError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("generator kind is {actual:?}, expected {expected:?}")]
    WrongKind {
        expected: WorkloadKind,
        actual: WorkloadKind,
    },
}

/// Event stream of one reference workload.
pub struct ReferenceEvents {
    cfg: GeneratorConfig,
    rng: SplitMix64,
    iteration: u64,
    pos: u32,
    choice: u64,
    per_iteration: u32,
}

impl Iterator for ReferenceEvents {
    type Item = TraceEvent;

    #[inline]
    fn next(&mut self) -> Option<TraceEvent> {
        if self.iteration >= self.cfg.iterations {
            return None;
        }
        let cfg = &self.cfg;
        if self.pos == 0 {
            self.choice = match cfg.workload_kind {
                WorkloadKind::BranchLocality => self.rng.below(cfg.m),
                _ => self.rng.below(cfg.x),
            };
        }
        let pos = self.pos;
        let harness = cfg.h + cfg.harness_loads;
        let event = if pos < cfg.h {
            TraceEvent::compute(HARNESS_BASE + 4 * pos as u64)
        } else if pos < harness {
            TraceEvent::load(HARNESS_BASE + 4 * pos as u64, STACK_BASE + 8 * (pos - cfg.h) as u64)
        } else {
            let k = (pos - harness) as u64;
            match cfg.workload_kind {
                WorkloadKind::DataLocality => TraceEvent::load(CODE_BASE, DATA_BASE + cfg.element_stride * self.choice),
                WorkloadKind::InstructionLocality => {
                    TraceEvent::compute(CODE_BASE + cfg.function_stride * self.choice + 4 * k)
                }
                WorkloadKind::BranchLocality => {
                    TraceEvent::branch(CODE_BASE, CODE_BASE + BRANCH_TARGET_OFFSET, self.choice < cfg.x)
                }
            }
        };
        self.pos += 1;
        if self.pos == self.per_iteration {
            self.pos = 0;
            self.iteration += 1;
        }
        Some(event)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let total = self.cfg.iterations * self.per_iteration as u64;
        let done = self.iteration * self.per_iteration as u64 + self.pos as u64;
        let left = (total - done) as usize;
        (left, Some(left))
    }
}

/// Generates the reference trace for any kind.
pub fn generate(cfg: &GeneratorConfig) -> Result<Trace, GenError> {
    let events = cfg.events()?;
    let mut trace = Trace::new(cfg.level, cfg.workload_name());
    trace.seed = Some(cfg.seed);
    trace.events = events.collect();
    Ok(trace)
}

fn generate_kind(cfg: &GeneratorConfig, expected: WorkloadKind) -> Result<Trace, GenError> {
    if cfg.workload_kind != expected {
        return Err(GenError::WrongKind {
            expected,
            actual: cfg.workload_kind,
        });
    }
    generate(cfg)
}

pub fn generate_data_locality(cfg: &GeneratorConfig) -> Result<Trace, GenError> {
    generate_kind(cfg, WorkloadKind::DataLocality)
}

pub fn generate_instruction_locality(cfg: &GeneratorConfig) -> Result<Trace, GenError> {
    generate_kind(cfg, WorkloadKind::InstructionLocality)
}

pub fn generate_branch_locality(cfg: &GeneratorConfig) -> Result<Trace, GenError> {
    generate_kind(cfg, WorkloadKind::BranchLocality)
}

/// Closed-form locality of the idealized workload (no harness).
pub fn theoretical_prediction(cfg: &GeneratorConfig) -> Result<f64, GenError> {
    cfg.validate()?;
    Ok(match cfg.workload_kind {
        WorkloadKind::DataLocality => cfg.x as f64,
        WorkloadKind::InstructionLocality => cfg.x as f64 * cfg.b as f64,
        WorkloadKind::BranchLocality => linear_entropy(cfg.x as f64 / cfg.m as f64),
    })
}

/// Expected measured value including harness events.
///
/// Instruction: `h` harness gaps of `h + b` events and `b` function gaps of
/// mean `x (h + b)` events per iteration average to `b x + h`. Data: with `k`
/// harness loads, `k` gaps of `k + 1` and one gap of mean `x (k + 1)` average
/// to `x + k`. Branch entropy ignores harness events.
pub fn expected_measurement(cfg: &GeneratorConfig) -> Result<f64, GenError> {
    let base = theoretical_prediction(cfg)?;
    Ok(match cfg.workload_kind {
        WorkloadKind::DataLocality => base + cfg.harness_loads as f64,
        WorkloadKind::InstructionLocality => base + cfg.h as f64,
        WorkloadKind::BranchLocality => base,
    })
}

pub fn linear_entropy(p: f64) -> f64 {
    2.0 * p.min(1.0 - p)
}

/// Bytes spanned by the randomly accessed array or function table.
pub fn footprint_bytes(cfg: &GeneratorConfig) -> u64 {
    match cfg.workload_kind {
        WorkloadKind::DataLocality => cfg.x * cfg.element_stride,
        WorkloadKind::InstructionLocality => cfg.x * cfg.function_stride,
        WorkloadKind::BranchLocality => 0,
    }
}

/// Generates and measures the kind's own metric in one streaming pass.
/// Returns `None` when the metric is undefined (no reuse, no branches).
pub fn measure(cfg: &GeneratorConfig) -> Result<Option<f64>, GenError> {
    let events = cfg.events()?;
    Ok(match cfg.workload_kind {
        WorkloadKind::InstructionLocality => {
            let mut rd = ReuseCounter::default();
            for e in events {
                rd.observe(e.instr_addr);
            }
            rd.mean()
        }
        WorkloadKind::DataLocality => {
            let mut rd = ReuseCounter::default();
            for e in events {
                if let Some(a) = e.data_addr() {
                    rd.observe(a);
                }
            }
            rd.mean()
        }
        WorkloadKind::BranchLocality => {
            let mut be = BranchEntropyAnalyzer::default();
            for e in events {
                be.push(&e);
            }
            be.value()
        }
    })
}

/// Reference template whose harness matches the overhead seen on compiled
/// reference loops: 2040 measured vs 2000 predicted for the instruction
/// loop at x = 400, 814 vs 800 for the data loop at x = 800.
pub fn reference_template(kind: WorkloadKind, iterations: u64, seed: u64) -> GeneratorConfig {
    let mut cfg = GeneratorConfig::new(kind, 1, iterations, seed);
    match kind {
        WorkloadKind::InstructionLocality => cfg.h = 40,
        WorkloadKind::DataLocality => cfg.harness_loads = 14,
        WorkloadKind::BranchLocality => {}
    }
    cfg
}

/// Acceptance threshold for the calibration error.
pub const CALIBRATION_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub x: u64,
    pub predicted: f64,
    /// Per-repetition measured values; `None` where undefined.
    pub measured: Vec<Option<f64>>,
    /// Mean relative error over repetitions; infinite if any was undefined.
    pub mean_relative_error: f64,
    pub qualifies: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub workload_kind: WorkloadKind,
    pub chosen_x: Option<u64>,
    pub table: Vec<CalibrationRow>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("candidate list must be non-empty and strictly ascending")]
    BadCandidates,
    #[error(transparent)]
    Generator(#[from] GenError),
    #[error("no candidate reached {:.1}% error", CALIBRATION_TOLERANCE * 100.0)]
    Failed(Calibration),
}

/// Picks the smallest candidate whose mean relative error against
/// [`theoretical_prediction`] is below 2%. Candidates are ascending, so the
/// first qualifying X also has the best locality among qualifying ones.
///
/// Each candidate is measured `repetitions` times with seeds
/// `template.seed + r`, and the relative errors are averaged.
pub fn calibrate(
    template: &GeneratorConfig,
    candidates: &[u64],
    repetitions: u32,
    exec: Exec,
) -> Result<Calibration, CalibrationError> {
    if candidates.is_empty() || candidates.windows(2).any(|w| w[0] >= w[1]) || repetitions == 0 {
        return Err(CalibrationError::BadCandidates);
    }
    let jobs: Vec<(u64, u32)> = candidates
        .iter()
        .flat_map(|&x| (0..repetitions).map(move |r| (x, r)))
        .collect();
    let measured = exec.map(&jobs, |&(x, r)| {
        let cfg = GeneratorConfig {
            x,
            seed: template.seed.wrapping_add(r as u64),
            ..template.clone()
        };
        measure(&cfg)
    });

    let mut table = Vec::with_capacity(candidates.len());
    for (i, &x) in candidates.iter().enumerate() {
        let cfg = GeneratorConfig { x, ..template.clone() };
        let predicted = theoretical_prediction(&cfg)?;
        let reps = &measured[i * repetitions as usize..(i + 1) * repetitions as usize];
        let mut values = Vec::with_capacity(reps.len());
        let mut err_sum = 0.0;
        for m in reps {
            let m = m.clone()?;
            err_sum += match m {
                Some(v) if predicted > 0.0 => (v - predicted).abs() / predicted,
                Some(0.0) => 0.0,
                _ => f64::INFINITY,
            };
            values.push(m);
        }
        let mean_relative_error = err_sum / repetitions as f64;
        table.push(CalibrationRow {
            x,
            predicted,
            measured: values,
            mean_relative_error,
            qualifies: mean_relative_error < CALIBRATION_TOLERANCE,
        });
    }
    let chosen_x = table.iter().find(|r| r.qualifies).map(|r| r.x);
    let result = Calibration {
        workload_kind: template.workload_kind,
        chosen_x,
        table,
    };
    match chosen_x {
        Some(_) => Ok(result),
        None => Err(CalibrationError::Failed(result)),
    }
}

/// Calibrates with [`reference_template`] and three repetitions.
pub fn calibrate_x(
    kind: WorkloadKind,
    candidates: &[u64],
    iterations: u64,
    seed: u64,
) -> Result<Calibration, CalibrationError> {
    calibrate(
        &reference_template(kind, iterations, seed),
        candidates,
        3,
        Exec::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{branch_entropy, data_reuse_distance, instruction_reuse_distance};
    use crate::trace::EventKind;

    #[test]
    fn single_element_data_workload_reuses_immediately() {
        let t = generate_data_locality(&GeneratorConfig::data(1, 1000, 3)).unwrap();
        assert_eq!(t.len(), 3000);
        let obs = data_reuse_distance(&t);
        assert_eq!(obs.value, Some(1.0));
        assert_eq!(obs.sample_count, 999);
    }

    #[test]
    fn single_function_without_harness_has_period_b() {
        let mut cfg = GeneratorConfig::instruction(1, 1000, 3);
        cfg.h = 0;
        let t = generate_instruction_locality(&cfg).unwrap();
        assert_eq!(instruction_reuse_distance(&t).value, Some(5.0));
    }

    #[test]
    fn branch_threshold_zero_never_takes() {
        let t = generate_branch_locality(&GeneratorConfig::branch(0, 1000, 3)).unwrap();
        assert!(t.events.iter().all(|e| !e.taken));
        assert_eq!(branch_entropy(&t).0.value, Some(0.0));
    }

    #[test]
    fn footprints_match_l1_sizes() {
        assert_eq!(footprint_bytes(&GeneratorConfig::data(4000, 1, 0)), 32_000);
        assert_eq!(footprint_bytes(&GeneratorConfig::instruction(1000, 1, 0)), 32_000);
        // x * stride stays within a 32 KiB cache at the knee
        assert!(footprint_bytes(&GeneratorConfig::data(4000, 1, 0)) <= 32 * 1024);
    }

    #[test]
    fn data_footprint_is_x_times_stride() {
        let cfg = GeneratorConfig::data(4000, 200_000, 1);
        let t = generate(&cfg).unwrap();
        let (lo, hi) = t
            .events
            .iter()
            .filter_map(|e| e.data_addr())
            .fold((u64::MAX, 0), |(lo, hi), a| (lo.min(a), hi.max(a)));
        assert_eq!(hi - lo + cfg.element_stride, 4000 * 8);
    }

    #[test]
    fn predictions_match_closed_forms() {
        assert_eq!(
            theoretical_prediction(&GeneratorConfig::data(800, 1, 0)).unwrap(),
            800.0
        );
        assert_eq!(
            theoretical_prediction(&GeneratorConfig::instruction(400, 1, 0)).unwrap(),
            2000.0
        );
        let b = theoretical_prediction(&GeneratorConfig::branch(60, 1, 0)).unwrap();
        assert!((b - 0.12).abs() < 1e-12);
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(
            generate(&GeneratorConfig::data(0, 10, 0)),
            Err(GenError::Parameter(_))
        ));
        assert!(matches!(
            generate(&GeneratorConfig::instruction(0, 10, 0)),
            Err(GenError::Parameter(_))
        ));
        assert!(matches!(
            generate(&GeneratorConfig::branch(1001, 10, 0)),
            Err(GenError::Parameter(_))
        ));
        let mut cfg = GeneratorConfig::data(8, 10, 0);
        cfg.element_stride = 12;
        assert!(generate(&cfg).is_err());
        cfg = GeneratorConfig::data(8, 0, 0);
        assert!(generate(&cfg).is_err());
        cfg = GeneratorConfig::branch(5, 10, 0);
        cfg.m = 1;
        assert!(generate(&cfg).is_err());
        assert!(matches!(
            generate_branch_locality(&GeneratorConfig::data(8, 10, 0)),
            Err(GenError::WrongKind { .. })
        ));
    }

    #[test]
    fn same_seed_same_trace_and_different_seed_differs() {
        let a = generate(&GeneratorConfig::data(64, 5000, 11)).unwrap();
        let b = generate(&GeneratorConfig::data(64, 5000, 11)).unwrap();
        let c = generate(&GeneratorConfig::data(64, 5000, 12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.events, c.events);
        assert_eq!(a.seed, Some(11));
    }

    #[test]
    fn generated_traces_are_user_mode_only() {
        for cfg in [
            GeneratorConfig::data(16, 500, 1),
            GeneratorConfig::instruction(16, 500, 1),
            GeneratorConfig::branch(300, 500, 1),
        ] {
            assert!(generate(&cfg).unwrap().events.iter().all(|e| !e.kernel_mode));
        }
    }

    #[test]
    fn harness_loads_precede_payload() {
        let mut cfg = GeneratorConfig::data(4, 2, 0);
        cfg.harness_loads = 2;
        let t = generate(&cfg).unwrap();
        let kinds: Vec<_> = t.events[..5].iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            [
                EventKind::Compute,
                EventKind::Compute,
                EventKind::Load,
                EventKind::Load,
                EventKind::Load
            ]
        );
        assert_eq!(t.events[2].data_or_target_addr, STACK_BASE);
        assert_eq!(t.events[3].data_or_target_addr, STACK_BASE + 8);
    }

    #[test]
    fn streaming_measure_matches_materialized() {
        let cfg = GeneratorConfig::instruction(50, 20_000, 9);
        let t = generate(&cfg).unwrap();
        assert_eq!(measure(&cfg).unwrap(), instruction_reuse_distance(&t).value);
    }

    #[test]
    fn entropy_symmetric_about_half() {
        for x in [0u64, 60, 250, 499] {
            let lo = theoretical_prediction(&GeneratorConfig::branch(x, 1, 0)).unwrap();
            let hi = theoretical_prediction(&GeneratorConfig::branch(1000 - x, 1, 0)).unwrap();
            assert!((lo - hi).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_rejects_unsorted_candidates() {
        let t = GeneratorConfig::data(1, 100, 0);
        assert_eq!(
            calibrate(&t, &[], 1, Exec::Sequential),
            Err(CalibrationError::BadCandidates)
        );
        assert_eq!(
            calibrate(&t, &[8, 4], 1, Exec::Sequential),
            Err(CalibrationError::BadCandidates)
        );
    }

    #[test]
    fn calibration_failure_carries_table() {
        // 14 harness loads on a 10-element array is a 140% error.
        let mut t = GeneratorConfig::data(1, 2000, 0);
        t.harness_loads = 14;
        match calibrate(&t, &[10, 20], 2, Exec::Sequential) {
            Err(CalibrationError::Failed(c)) => {
                assert_eq!(c.table.len(), 2);
                assert!(c.table.iter().all(|r| !r.qualifies && r.measured.len() == 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn calibration_picks_first_qualifying() {
        let mut t = GeneratorConfig::data(1, 200_000, 5);
        t.harness_loads = 6;
        // error is about 6/x: 12% at 50, 4% at 150, 1.5% at 400
        let c = calibrate(&t, &[50, 150, 400, 600], 2, Exec::Sequential).unwrap();
        assert_eq!(c.chosen_x, Some(400));
        assert!(c.table[0].mean_relative_error > 0.05);
    }
}
