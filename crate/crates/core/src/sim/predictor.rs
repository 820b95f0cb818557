use serde::{Deserialize, Serialize};

use super::SimConfigError;

/// Bimodal predictor: a table of 2-bit saturating counters indexed by
/// `(instr_addr / 4) mod table_entries`, all starting weakly not-taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub table_entries: u32,
    pub counter_bits: u8,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            table_entries: 4096,
            counter_bits: 2,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), SimConfigError> {
        if !self.table_entries.is_power_of_two() {
            return Err(SimConfigError(format!(
                "predictor table size {} is not a power of two",
                self.table_entries
            )));
        }
        if self.counter_bits != 2 {
            return Err(SimConfigError(format!(
                "only 2-bit counters are modeled, got {}",
                self.counter_bits
            )));
        }
        Ok(())
    }
}

const WEAKLY_NOT_TAKEN: u8 = 1;
const MAX_STATE: u8 = 3;

#[derive(Debug, Clone)]
pub struct BimodalPredictor {
    table: Vec<u8>,
    mask: u64,
    pub branches: u64,
    pub mispredictions: u64,
}

impl BimodalPredictor {
    pub fn new(cfg: &PredictorConfig) -> Result<Self, SimConfigError> {
        cfg.validate()?;
        Ok(Self {
            table: vec![WEAKLY_NOT_TAKEN; cfg.table_entries as usize],
            mask: cfg.table_entries as u64 - 1,
            branches: 0,
            mispredictions: 0,
        })
    }

    /// Predicts, trains on the outcome, and returns whether the prediction
    /// was correct.
    #[inline]
    pub fn observe(&mut self, instr_addr: u64, taken: bool) -> bool {
        let slot = &mut self.table[((instr_addr >> 2) & self.mask) as usize];
        let predicted = *slot > WEAKLY_NOT_TAKEN;
        *slot = if taken {
            (*slot + 1).min(MAX_STATE)
        } else {
            slot.saturating_sub(1)
        };
        self.branches += 1;
        let correct = predicted == taken;
        self.mispredictions += !correct as u64;
        correct
    }
}
