//! Component breakdowns below a level's impact factor.
//!
//! Three ways to split a parent impact:
//!
//! * **tag share**: the locality "mass" of a trace (reuse gaps, or branch
//!   entropy weighted by executions) is charged to the component tag of the
//!   event that suffers it: the reusing access, or the executed branch.
//! * **differential**: compare a full run with one where a component was
//!   removed; the relative drop in the metric is the component's share.
//! * **kernel noise**: the tag-share rule applied to the privilege flag.

use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::metrics::{BranchEntropyAnalyzer, MetricKind, MetricObservation, ReuseCounter};
use crate::trace::{EventKind, Trace, TraceEvent, UNTAGGED};

/// Raw kernel shares at or below this are reported as zero.
pub const NOISE_THRESHOLD: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BreakdownMethod {
    TagShare,
    Differential,
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownNode {
    pub name: String,
    pub impact: f64,
    pub method: Option<BreakdownMethod>,
    #[serde(default)]
    pub children: Vec<BreakdownNode>,
}

impl BreakdownNode {
    pub fn leaf(name: impl Into<String>, impact: f64, method: Option<BreakdownMethod>) -> Self {
        Self {
            name: name.into(),
            impact,
            method,
            children: Vec::new(),
        }
    }

    pub fn with_children(mut self, children: Vec<BreakdownNode>) -> Self {
        self.children = children;
        self
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> Vec<&BreakdownNode> {
        if self.children.is_empty() {
            return vec![self];
        }
        self.children.iter().flat_map(|c| c.leaves()).collect()
    }

    pub fn find(&self, name: &str) -> Option<&BreakdownNode> {
        if self.name == name {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(name))
    }

    pub fn find_mut(&mut self, name: &str) -> Option<&mut BreakdownNode> {
        if self.name == name {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(name))
    }

    /// Largest deviation between a node's impact and the sum of its
    /// children, over the whole tree.
    pub fn conservation_error(&self) -> f64 {
        if self.children.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.children.iter().map(|c| c.impact).sum();
        self.children
            .iter()
            .map(BreakdownNode::conservation_error)
            .fold((sum - self.impact).abs(), f64::max)
    }
}

/// Locality mass per bucket, where `bucket` maps an event to its bucket.
fn locality_mass(
    trace: &Trace,
    metric: MetricKind,
    buckets: usize,
    bucket: impl Fn(&TraceEvent) -> usize,
) -> Result<Vec<f64>, FusionError> {
    let mut mass = vec![0.0; buckets];
    match metric {
        MetricKind::InstrReuseDist => {
            let mut rd = ReuseCounter::default();
            for e in &trace.events {
                if let Some(g) = rd.observe(e.instr_addr) {
                    mass[bucket(e)] += g as f64;
                }
            }
        }
        MetricKind::DataReuseDist => {
            let mut rd = ReuseCounter::default();
            for e in &trace.events {
                if let Some(g) = e.data_addr().and_then(|a| rd.observe(a)) {
                    mass[bucket(e)] += g as f64;
                }
            }
        }
        MetricKind::BranchEntropy => {
            let mut be = BranchEntropyAnalyzer::default();
            for e in &trace.events {
                be.push(e);
            }
            let stats = be.stats();
            for e in trace.events.iter().filter(|e| e.kind == EventKind::Branch) {
                mass[bucket(e)] += stats.branches[&e.instr_addr].entropy();
            }
        }
        other => {
            return Err(FusionError::InvalidInput(format!(
                "{other} is a counter metric; tag attribution needs a trace metric"
            )))
        }
    }
    Ok(mass)
}

/// Splits `parent_impact` among the component tags used in `trace`, in
/// proportion to each tag's locality mass. The last child takes the
/// remainder so children sum to the parent exactly.
pub fn breakdown_by_tags(
    trace: &Trace,
    metric: MetricKind,
    parent_impact: f64,
) -> Result<Vec<BreakdownNode>, FusionError> {
    if !(0.0..=1.0).contains(&parent_impact) {
        return Err(FusionError::InvalidInput(format!(
            "parent impact {parent_impact} outside [0, 1]"
        )));
    }
    let tags = trace.tag_table.len().max(1);
    let mut used = vec![false; tags];
    for e in &trace.events {
        used[e.tag_id as usize] = true;
    }
    let in_use: Vec<usize> = (0..tags).filter(|&t| used[t]).collect();
    let name = |t: usize| trace.tag_name(t as u16).unwrap_or(UNTAGGED).to_string();
    if in_use.len() <= 1 {
        let only = in_use.first().map_or_else(|| UNTAGGED.to_string(), |&t| name(t));
        return Ok(vec![BreakdownNode::leaf(
            only,
            parent_impact,
            Some(BreakdownMethod::TagShare),
        )]);
    }

    let mass = locality_mass(trace, metric, tags, |e| e.tag_id as usize)?;
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(FusionError::InvalidInput(format!(
            "{metric} has no mass in this trace; nothing to attribute"
        )));
    }
    let mut children = Vec::with_capacity(in_use.len());
    let mut assigned = 0.0;
    for (i, &t) in in_use.iter().enumerate() {
        let impact = if i + 1 == in_use.len() {
            (parent_impact - assigned).max(0.0)
        } else {
            parent_impact * mass[t] / total
        };
        assigned += impact;
        children.push(BreakdownNode::leaf(name(t), impact, Some(BreakdownMethod::TagShare)));
    }
    Ok(children)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentialSplit {
    pub component: BreakdownNode,
    pub residual: BreakdownNode,
    pub share: f64,
    /// The ablated run scored higher than the full run; the share was
    /// clamped to zero and the attribution is undefined.
    pub clamped: bool,
}

/// Share of `parent_impact` removed by ablating `component_name`:
/// `s = max(0, (full - ablated) / full)`.
pub fn breakdown_differential(
    full: &MetricObservation,
    ablated: &MetricObservation,
    parent_impact: f64,
    component_name: &str,
    residual_name: &str,
) -> Result<DifferentialSplit, FusionError> {
    if full.metric != ablated.metric || full.level != ablated.level {
        return Err(FusionError::InvalidInput(format!(
            "cannot compare {} at {} with {} at {}",
            full.metric, full.level, ablated.metric, ablated.level
        )));
    }
    let f = full.value.ok_or(FusionError::Undefined {
        level: full.level,
        which: "full-run",
    })?;
    let a = ablated.value.ok_or(FusionError::Undefined {
        level: ablated.level,
        which: "ablated-run",
    })?;
    if f <= 0.0 {
        return Err(FusionError::InvalidInput("full-run value must be positive".into()));
    }
    let raw = (f - a) / f;
    let clamped = raw < 0.0;
    let share = raw.clamp(0.0, 1.0);
    let component = parent_impact * share;
    Ok(DifferentialSplit {
        component: BreakdownNode::leaf(component_name, component, Some(BreakdownMethod::Differential)),
        residual: BreakdownNode::leaf(
            residual_name,
            parent_impact - component,
            Some(BreakdownMethod::Residual),
        ),
        share,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseShare {
    pub raw: f64,
    pub reported: f64,
}

/// Fraction of locality mass charged to kernel-mode events. Shares at or
/// below [`NOISE_THRESHOLD`] are reported as zero; the raw value is kept.
pub fn kernel_noise_share(trace: &Trace, metric: MetricKind) -> Result<NoiseShare, FusionError> {
    let mass = locality_mass(trace, metric, 2, |e| e.kernel_mode as usize)?;
    let total = mass[0] + mass[1];
    let raw = if total > 0.0 { mass[1] / total } else { 0.0 };
    Ok(NoiseShare {
        raw,
        reported: noise_reported(raw),
    })
}

/// Splits a microarchitecture-level impact into an OS-noise child (the
/// reported kernel share) and a residual child.
pub fn noise_split(parent_impact: f64, share: NoiseShare, noise_name: &str, residual_name: &str) -> [BreakdownNode; 2] {
    let noise = parent_impact * share.reported;
    [
        BreakdownNode::leaf(noise_name, noise, Some(BreakdownMethod::TagShare)),
        BreakdownNode::leaf(residual_name, parent_impact - noise, Some(BreakdownMethod::Residual)),
    ]
}

pub fn noise_reported(raw: f64) -> f64 {
    if raw <= NOISE_THRESHOLD {
        0.0
    } else {
        raw
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpkiRow {
    pub component: String,
    pub impact: f64,
    pub normalized_mpki: f64,
}

/// Scales each component's impact by a measured MPKI. With impacts summing
/// to one the rows sum to `mpki`.
pub fn normalized_mpki_breakdown(components: &[(String, f64)], mpki: f64) -> Result<Vec<MpkiRow>, FusionError> {
    if !(mpki.is_finite() && mpki >= 0.0) {
        return Err(FusionError::InvalidInput(format!("MPKI {mpki} must be non-negative")));
    }
    Ok(components
        .iter()
        .map(|(name, impact)| MpkiRow {
            component: name.clone(),
            impact: *impact,
            normalized_mpki: impact * mpki,
        })
        .collect())
}

/// Rounds to `digits` significant digits for presentation.
pub fn round_sig(v: f64, digits: u32) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let magnitude = v.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits as i32 - 1 - magnitude);
    (v * scale).round() / scale
}
