//! Working-set knee detection on an MPKI sweep.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_THETA: f64 = 5.0;
pub const MIN_SWEEP_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knee {
    pub x: u64,
    pub floor: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum KneeError {
    #[error("a sweep needs at least {MIN_SWEEP_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("sweep x values must be strictly ascending")]
    NotAscending,
    #[error("no knee: every point is within {theta} x floor {floor}")]
    NoKnee { floor: f64, theta: f64 },
}

/// The knee is the largest `x` whose MPKI stays within `theta` times the
/// sweep's minimum. A sweep that never leaves that band has no knee.
pub fn detect_knee(points: &[(u64, f64)], theta: f64) -> Result<Knee, KneeError> {
    if points.len() < MIN_SWEEP_POINTS {
        return Err(KneeError::TooFewPoints(points.len()));
    }
    if points.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(KneeError::NotAscending);
    }
    let floor = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let limit = theta * floor;
    if points.iter().all(|p| p.1 <= limit) {
        return Err(KneeError::NoKnee { floor, theta });
    }
    let x = points
        .iter()
        .rev()
        .find(|p| p.1 <= limit)
        .map(|p| p.0)
        .expect("the minimum point is always within the band");
    Ok(Knee { x, floor, theta })
}
