use serde::{Deserialize, Serialize};

use super::SimConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Replacement {
    #[default]
    Lru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity_bytes: u64,
    pub line_bytes: u64,
    pub associativity: u32,
    #[serde(default)]
    pub replacement: Replacement,
    pub prefetch_next_line: bool,
}

impl CacheConfig {
    pub fn new(capacity_bytes: u64, line_bytes: u64, associativity: u32) -> Self {
        Self {
            capacity_bytes,
            line_bytes,
            associativity,
            replacement: Replacement::Lru,
            prefetch_next_line: false,
        }
    }

    pub fn kib(kib: u64, associativity: u32) -> Self {
        Self::new(kib * 1024, 64, associativity)
    }

    pub fn with_prefetch(mut self, on: bool) -> Self {
        self.prefetch_next_line = on;
        self
    }

    pub fn sets(&self) -> u64 {
        self.capacity_bytes / (self.line_bytes * self.associativity as u64)
    }

    pub fn validate(&self) -> Result<(), SimConfigError> {
        let bad = |m: String| Err(SimConfigError(m));
        if !self.capacity_bytes.is_power_of_two() {
            return bad(format!("capacity {} is not a power of two", self.capacity_bytes));
        }
        if !self.line_bytes.is_power_of_two() {
            return bad(format!("line size {} is not a power of two", self.line_bytes));
        }
        if self.associativity == 0 {
            return bad("associativity must be at least 1".into());
        }
        let way_bytes = self.line_bytes * self.associativity as u64;
        if self.capacity_bytes < way_bytes || !self.capacity_bytes.is_multiple_of(way_bytes) {
            return bad(format!(
                "capacity {} is not a multiple of line {} x associativity {}",
                self.capacity_bytes, self.line_bytes, self.associativity
            ));
        }
        if !self.sets().is_power_of_two() {
            return bad(format!("set count {} is not a power of two", self.sets()));
        }
        Ok(())
    }
}

/// Set-associative LRU cache. Each set is a slice of line numbers ordered
/// from most to least recently used.
#[derive(Debug, Clone)]
pub struct Cache {
    lines: Vec<u64>,
    fill: Vec<u32>,
    ways: usize,
    set_mask: u64,
    line_shift: u32,
    prefetch: bool,
    pub accesses: u64,
    pub misses: u64,
    pub prefetch_fills: u64,
}

impl Cache {
    pub fn new(cfg: &CacheConfig) -> Result<Self, SimConfigError> {
        cfg.validate()?;
        let sets = cfg.sets() as usize;
        let ways = cfg.associativity as usize;
        Ok(Self {
            lines: vec![0; sets * ways],
            fill: vec![0; sets],
            ways,
            set_mask: sets as u64 - 1,
            line_shift: cfg.line_bytes.trailing_zeros(),
            prefetch: cfg.prefetch_next_line,
            accesses: 0,
            misses: 0,
            prefetch_fills: 0,
        })
    }

    /// Demand access. Returns `true` on hit.
    #[inline]
    pub fn access(&mut self, addr: u64) -> bool {
        self.accesses += 1;
        let line = addr >> self.line_shift;
        let set = (line & self.set_mask) as usize;
        let base = set * self.ways;
        let fill = self.fill[set] as usize;
        let slots = &mut self.lines[base..base + self.ways];
        if let Some(pos) = slots[..fill].iter().position(|&l| l == line) {
            slots[..=pos].rotate_right(1);
            return true;
        }
        self.misses += 1;
        let used = (fill + 1).min(self.ways);
        self.fill[set] = used as u32;
        slots[..used].rotate_right(1);
        slots[0] = line;
        if self.prefetch {
            self.install_lru(line.wrapping_add(1));
        }
        false
    }

    /// Installs `line` in the LRU position of its set without touching
    /// recency of resident lines. No-op if already present.
    fn install_lru(&mut self, line: u64) {
        let set = (line & self.set_mask) as usize;
        let base = set * self.ways;
        let fill = self.fill[set] as usize;
        let slots = &mut self.lines[base..base + self.ways];
        if slots[..fill].contains(&line) {
            return;
        }
        self.prefetch_fills += 1;
        if fill < self.ways {
            slots[fill] = line;
            self.fill[set] += 1;
        } else {
            slots[self.ways - 1] = line;
        }
    }
}
