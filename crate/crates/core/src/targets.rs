//! The fixed target grid and the per-run hitting-time ledger.

/// Number of targets in the grid.
pub const TARGET_COUNT: usize = 51;

/// Target `i` is `10^(2 - 0.2 i)`, from `1e2` down to `1e-8`.
pub fn target_value(index: usize) -> f64 {
    // (10 - i) / 5 is exact in binary for every grid index.
    10f64.powf((10.0 - index as f64) / 5.0)
}

/// Targets in decreasing order (easiest first).
pub fn target_grid() -> [f64; TARGET_COUNT] {
    std::array::from_fn(target_value)
}

/// Target as printed in reports, e.g. `1e-8`, `1e0.4`.
pub fn target_label(index: usize) -> String {
    let exp = (10.0 - index as f64) / 5.0;
    if exp.fract() == 0.0 {
        format!("1e{}", exp as i64)
    } else {
        format!("1e{exp:.1}")
    }
}

/// First evaluation at which each target was reached, if ever.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HitLedger {
    hits: [Option<u64>; TARGET_COUNT],
    /// Number of leading targets already hit.
    reached: usize,
}

impl Default for HitLedger {
    fn default() -> Self {
        Self {
            hits: [None; TARGET_COUNT],
            reached: 0,
        }
    }
}

impl HitLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a ledger from raw hits, checking that the hit targets form a
    /// prefix of the grid and that hit evaluations are non-decreasing.
    pub fn from_hits(hits: [Option<u64>; TARGET_COUNT]) -> Result<Self, String> {
        let reached = hits.iter().take_while(|h| h.is_some()).count();
        if hits[reached..].iter().any(|h| h.is_some()) {
            return Err(format!("target {} hit after an unhit target", reached));
        }
        if hits[..reached].windows(2).any(|w| w[0] > w[1]) {
            return Err("hit evaluations decrease along the grid".to_string());
        }
        Ok(Self { hits, reached })
    }

    /// Records that `precision` (best-so-far minus the optimum) was observed
    /// at evaluation `evals`.
    pub fn observe(&mut self, precision: f64, evals: u64) {
        while self.reached < TARGET_COUNT && precision <= target_value(self.reached) {
            self.hits[self.reached] = Some(evals);
            self.reached += 1;
        }
    }

    pub fn hits(&self) -> &[Option<u64>; TARGET_COUNT] {
        &self.hits
    }

    pub fn hit(&self, index: usize) -> Option<u64> {
        self.hits[index]
    }

    /// Number of targets hit; they are always the leading ones.
    pub fn reached(&self) -> usize {
        self.reached
    }

    pub fn is_complete(&self) -> bool {
        self.reached == TARGET_COUNT
    }
}
