//! Fusion of per-level observations.
//!
//! For each level `i`, the observed value `X_i` is divided by the value
//! `S_i` of a standard reference workload at the same level to get the
//! relative value `R_i = X_i / S_i`. Normalizing gives the impact factor
//! `I_i = R_i / sum_j R_j`: the share of the bottleneck attributed to that
//! level. [`breakdown`] splits a level's impact further among software
//! components.

pub mod breakdown;
pub mod pearson;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use breakdown::{
    breakdown_by_tags, breakdown_differential, kernel_noise_share, noise_split, normalized_mpki_breakdown, round_sig,
    BreakdownMethod, BreakdownNode, DifferentialSplit, MpkiRow, NoiseShare,
};
pub use pearson::pearson;

use crate::metrics::{MetricKind, MetricObservation};
use crate::trace::Level;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("reference value at {0} must be positive")]
    ReferenceInvalid(Level),
    #[error("observed value at {0} must be finite and non-negative")]
    ObservedInvalid(Level),
    #[error("all relative values are zero; attribution is undefined")]
    Degenerate,
    #[error("need at least two levels, got {0}")]
    TooFewLevels(usize),
    #[error("levels must be distinct and ascending (IR, ISA, UARCH)")]
    LevelsNotAscending,
    #[error("{which} value at {level} is undefined (no samples)")]
    Undefined { level: Level, which: &'static str },
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("{0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelValue {
    pub level: Level,
    pub observed: f64,
    pub reference: f64,
}

/// Observed and reference values per level, IR first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    entries: Vec<LevelValue>,
}

impl MetricVector {
    pub fn new(entries: Vec<LevelValue>) -> Result<Self, FusionError> {
        if entries.len() < 2 {
            return Err(FusionError::TooFewLevels(entries.len()));
        }
        if entries.windows(2).any(|w| w[0].level >= w[1].level) {
            return Err(FusionError::LevelsNotAscending);
        }
        for e in &entries {
            if !(e.reference.is_finite() && e.reference > 0.0) {
                return Err(FusionError::ReferenceInvalid(e.level));
            }
            if !(e.observed.is_finite() && e.observed >= 0.0) {
                return Err(FusionError::ObservedInvalid(e.level));
            }
        }
        Ok(Self { entries })
    }

    /// IR, ISA, UARCH from parallel arrays.
    pub fn three_level(observed: [f64; 3], reference: [f64; 3]) -> Result<Self, FusionError> {
        Self::new(
            Level::ALL
                .iter()
                .zip(observed.iter().zip(reference))
                .map(|(&level, (&observed, reference))| LevelValue {
                    level,
                    observed,
                    reference,
                })
                .collect(),
        )
    }

    /// Pairs observations with references level by level. Both slices must
    /// cover the same levels; undefined values are rejected by level.
    pub fn from_observations(
        observed: &[MetricObservation],
        reference: &[MetricObservation],
    ) -> Result<Self, FusionError> {
        let mut entries = Vec::with_capacity(observed.len());
        for o in observed {
            let r = reference
                .iter()
                .find(|r| r.level == o.level)
                .ok_or_else(|| FusionError::InvalidInput(format!("no reference value at {}", o.level)))?;
            let observed = o.value.ok_or(FusionError::Undefined {
                level: o.level,
                which: "observed",
            })?;
            let reference = r.value.ok_or(FusionError::Undefined {
                level: o.level,
                which: "reference",
            })?;
            entries.push(LevelValue {
                level: o.level,
                observed,
                reference,
            });
        }
        entries.sort_by_key(|e| e.level);
        Self::new(entries)
    }

    pub fn entries(&self) -> &[LevelValue] {
        &self.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelImpact {
    pub level: Level,
    pub relative: f64,
    pub impact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactVector {
    pub entries: Vec<LevelImpact>,
}

impl ImpactVector {
    pub fn impact(&self, level: Level) -> Option<f64> {
        self.entries.iter().find(|e| e.level == level).map(|e| e.impact)
    }

    pub fn relative(&self, level: Level) -> Option<f64> {
        self.entries.iter().find(|e| e.level == level).map(|e| e.relative)
    }

    /// Root node of mass 1 with one child per level.
    pub fn to_tree(&self, root: &str) -> BreakdownNode {
        BreakdownNode {
            name: root.to_string(),
            impact: 1.0,
            method: None,
            children: self
                .entries
                .iter()
                .map(|e| BreakdownNode::leaf(level_category(e.level), e.impact, None))
                .collect(),
        }
    }
}

/// Display name of the category a level's impact is charged to.
pub fn level_category(level: Level) -> &'static str {
    match level {
        Level::IR => "IR-dependent",
        Level::ISA => "ISA-dependent",
        Level::UARCH => "microarchitecture-dependent",
    }
}

pub fn impact_factors(v: &MetricVector) -> Result<ImpactVector, FusionError> {
    let relative: Vec<f64> = v.entries.iter().map(|e| e.observed / e.reference).collect();
    let total: f64 = relative.iter().sum();
    if total <= 0.0 {
        return Err(FusionError::Degenerate);
    }
    Ok(ImpactVector {
        entries: v
            .entries
            .iter()
            .zip(relative)
            .map(|(e, r)| LevelImpact {
                level: e.level,
                relative: r,
                impact: r / total,
            })
            .collect(),
    })
}

/// Checks that observations are the metrics a family uses at their levels.
pub fn check_metric(obs: &MetricObservation, expected: MetricKind) -> Result<(), FusionError> {
    if obs.metric != expected {
        return Err(FusionError::InvalidInput(format!(
            "expected {expected} at {}, found {}",
            obs.level, obs.metric
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let v = MetricVector::three_level([49086.0, 8824.0, 16.9], [2040.0, 2421.0, 0.43]).unwrap();
        let iv = impact_factors(&v).unwrap();
        let r: Vec<f64> = iv.entries.iter().map(|e| e.relative).collect();
        let i: Vec<f64> = iv.entries.iter().map(|e| e.impact).collect();
        for (got, want) in r.iter().zip([24.06, 3.64, 39.30]) {
            assert!((got - want).abs() / want < 0.005, "{got} vs {want}");
        }
        for (got, want) in i.iter().zip([0.36, 0.05, 0.59]) {
            assert!((got - want).abs() <= 0.01, "{got} vs {want}");
        }
    }

    #[test]
    fn equal_observation_and_reference_is_uniform() {
        let v = MetricVector::three_level([3.0, 7.0, 0.5], [3.0, 7.0, 0.5]).unwrap();
        for e in impact_factors(&v).unwrap().entries {
            assert!((e.impact - 1.0 / 3.0).abs() < 1e-15);
            assert_eq!(e.relative, 1.0);
        }
    }

    #[test]
    fn single_level_mass() {
        let v = MetricVector::three_level([2.0, 0.0, 0.0], [1.0, 1.0, 1.0]).unwrap();
        let i: Vec<f64> = impact_factors(&v).unwrap().entries.iter().map(|e| e.impact).collect();
        assert_eq!(i, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn errors_name_levels() {
        assert_eq!(
            MetricVector::three_level([1.0, 1.0, 1.0], [1.0, 0.0, 1.0]),
            Err(FusionError::ReferenceInvalid(Level::ISA))
        );
        assert_eq!(
            MetricVector::three_level([1.0, -1.0, 1.0], [1.0, 1.0, 1.0]),
            Err(FusionError::ObservedInvalid(Level::ISA))
        );
        let zero = MetricVector::three_level([0.0; 3], [1.0; 3]).unwrap();
        assert_eq!(impact_factors(&zero), Err(FusionError::Degenerate));
        assert_eq!(
            MetricVector::new(vec![LevelValue {
                level: Level::IR,
                observed: 1.0,
                reference: 1.0
            }]),
            Err(FusionError::TooFewLevels(1))
        );
    }

    #[test]
    fn undefined_observation_is_rejected_by_level() {
        let obs = vec![
            MetricObservation::new("w", Level::IR, MetricKind::InstrReuseDist, Some(5.0), 3),
            MetricObservation::new("w", Level::UARCH, MetricKind::L1iMpki, None, 0),
        ];
        let refs = vec![
            MetricObservation::new("r", Level::IR, MetricKind::InstrReuseDist, Some(5.0), 3),
            MetricObservation::new("r", Level::UARCH, MetricKind::L1iMpki, Some(1.0), 3),
        ];
        assert_eq!(
            MetricVector::from_observations(&obs, &refs),
            Err(FusionError::Undefined {
                level: Level::UARCH,
                which: "observed"
            })
        );
    }

    fn arb_vector() -> impl Strategy<Value = ([f64; 3], [f64; 3])> {
        (
            proptest::array::uniform3(0.0f64..1e6),
            proptest::array::uniform3(1e-3f64..1e6),
        )
            .prop_filter("some mass", |(x, _)| x.iter().any(|v| *v > 1e-9))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn impacts_normalize((x, s) in arb_vector()) {
            let iv = impact_factors(&MetricVector::three_level(x, s).unwrap()).unwrap();
            let sum: f64 = iv.entries.iter().map(|e| e.impact).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(iv.entries.iter().all(|e| (0.0..=1.0).contains(&e.impact)));
        }

        #[test]
        fn per_level_scale_invariance((x, s) in arb_vector(), level in 0usize..3, c in 1e-3f64..1e3) {
            let base = impact_factors(&MetricVector::three_level(x, s).unwrap()).unwrap();
            let (mut x2, mut s2) = (x, s);
            x2[level] *= c;
            s2[level] *= c;
            let scaled = impact_factors(&MetricVector::three_level(x2, s2).unwrap()).unwrap();
            for (a, b) in base.entries.iter().zip(&scaled.entries) {
                prop_assert!((a.impact - b.impact).abs() < 1e-9);
            }
        }

        #[test]
        fn ordering_preserved((x, s) in arb_vector()) {
            let iv = impact_factors(&MetricVector::three_level(x, s).unwrap()).unwrap();
            for a in &iv.entries {
                for b in &iv.entries {
                    prop_assert_eq!(a.relative > b.relative, a.impact > b.impact);
                }
            }
        }
    }
}
